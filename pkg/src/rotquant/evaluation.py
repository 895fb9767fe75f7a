"""Monte-Carlo distortion measurements against the analytic bounds.

Each trial draws a fresh rotation (and residual sketch) from
``trial_seed(master_seed, t)`` and quantizes every input vector with it, so a
sweep of ``n`` vectors and ``T`` trials yields ``n * T`` samples.  Per-trial
statistics are merged in trial order, which keeps results independent of the
number of worker threads.
"""
from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np

from ._seeding import stream_rng, trial_seed
from .qjl import make_sketch
from .quantizer import MseQuantizer, ProdQuantizer
from .rotation import generate_rotation

MSE_REFINED = {1: 0.36, 2: 0.117, 3: 0.03, 4: 0.009}
PROD_REFINED = {1: 1.57, 2: 0.56, 3: 0.18, 4: 0.047}
SQRT3_PI_HALF = math.sqrt(3) * math.pi / 2
BIAS_Z_LIMIT = 4.0

CSV_COLUMNS = ["mode", "b", "d", "n_trials", "metric", "empirical", "stderr", "upper", "lower",
               "ratio_upper", "ratio_lower", "pass"]


@dataclass(frozen=True)
class BoundSet:
    """Distortion bounds for bit width ``b`` in dimension ``d``.

    ``mse_upper`` / ``prod_upper`` use the numerically refined constants for
    ``b <= 4`` and the general formula above that; the ``*_general`` fields
    always hold the general formula.  Inner-product values are per unit
    ``||y||**2``.
    """

    b: int
    d: int
    mse_upper: float
    mse_lower: float
    prod_upper: float
    prod_lower: float
    mse_upper_general: float
    prod_upper_general: float


def theoretical_bounds(b: int, d: int) -> BoundSet:
    if b < 0 or d < 1:
        raise ValueError("need b >= 0 and d >= 1")
    mse_general = SQRT3_PI_HALF * 4.0 ** (-b)
    prod_general = math.sqrt(3) * math.pi ** 2 / d * 4.0 ** (-b)
    return BoundSet(
        b=b,
        d=d,
        mse_upper=MSE_REFINED.get(b, mse_general),
        mse_lower=4.0 ** (-b),
        prod_upper=PROD_REFINED[b] / d if b in PROD_REFINED else prod_general,
        prod_lower=4.0 ** (-b) / d,
        mse_upper_general=mse_general,
        prod_upper_general=prod_general,
    )


def random_unit_vectors(n: int, d: int, rng: np.random.Generator) -> np.ndarray:
    g = rng.standard_normal((n, d))
    return g / np.linalg.norm(g, axis=1, keepdims=True)


def correlated_queries(vectors: np.ndarray, alpha: float, rng: np.random.Generator) -> np.ndarray:
    """Unit queries with ``<y_i, x_i> = alpha`` for unit rows ``x_i``.

    In one dimension there is no orthogonal direction and ``y_i = alpha * x_i``.
    """
    g = rng.standard_normal(vectors.shape)
    g -= np.einsum("ij,ij->i", g, vectors)[:, None] * vectors
    gn = np.linalg.norm(g, axis=1, keepdims=True)
    g = np.divide(g, gn, out=np.zeros_like(g), where=gn > 1e-12)
    return alpha * vectors + math.sqrt(max(0.0, 1.0 - alpha * alpha)) * g


@dataclass
class RunningStat:
    """Count, mean and centred second moment; merged with Chan's update."""

    n: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def of(cls, values) -> "RunningStat":
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            return cls()
        mean = float(values.mean())
        return cls(values.size, mean, float(np.sum((values - mean) ** 2)))

    def merge(self, other: "RunningStat") -> "RunningStat":
        if other.n == 0:
            return self
        if self.n == 0:
            return RunningStat(other.n, other.mean, other.m2)
        n = self.n + other.n
        delta = other.mean - self.mean
        mean = self.mean + delta * other.n / n
        m2 = self.m2 + other.m2 + delta * delta * self.n * other.n / n
        return RunningStat(n, mean, m2)

    @property
    def variance(self) -> float:
        return self.m2 / (self.n - 1) if self.n > 1 else 0.0

    @property
    def stderr(self) -> float:
        return math.sqrt(self.variance / self.n) if self.n > 0 else 0.0


@dataclass(frozen=True)
class ProdErrorStats:
    """Inner-product error of an estimator, per unit ``||y||**2``.

    ``bias`` and ``bias_stderr`` describe the signed error, ``mse`` and
    ``stderr`` its square; ``ratio`` is ``sum(estimate) / sum(true)``.
    """

    bias: float
    mse: float
    stderr: float
    bias_stderr: float
    ratio: float
    ratio_stderr: float
    n: int

    @property
    def bias_z(self) -> float:
        return self.bias / self.bias_stderr if self.bias_stderr > 0 else 0.0


def _run_trial(vectors, queries, modes, bits, seed, m, keep_errors):
    n, d = vectors.shape
    rot = generate_rotation(seed, d)
    sketch = make_sketch(seed, d, m) if "prod" in modes else None
    out = {}
    y_rot = y_sk = true = ynorm = None
    if queries is not None:
        y_rot = queries @ rot.matrix.T
        y_sk = sketch.project(queries) if sketch is not None else None
        true = np.einsum("ij,ij->i", queries, vectors)
        ynorm = np.linalg.norm(queries, axis=1)
    safe_norm = None if ynorm is None else np.where(ynorm > 0, ynorm, 1.0)
    for mode in modes:
        for b in bits:
            stats = {}
            if mode == "mse":
                q = MseQuantizer(d, b, seed, rotation=rot)
                codes = q.quantize_batch(vectors)
                recon = q.dequantize_batch(codes).astype(np.float64)
                stats["mse"] = RunningStat.of(np.sum((vectors - recon) ** 2, axis=1))
                est = q.pair_scores(codes, y_rot) if queries is not None else None
            else:
                q = ProdQuantizer(d, b, seed, rotation=rot, sketch=sketch)
                codes = q.quantize_batch(vectors)
                est = q.pair_scores(codes, y_rot, y_sk) if queries is not None else None
            if est is not None:
                err = np.where(ynorm > 0, (est - true) / safe_norm, 0.0)
                stats["ip_err"] = RunningStat.of(err)
                stats["ip_sq"] = RunningStat.of(err * err)
                stats["est"] = RunningStat.of(est)
                stats["true"] = RunningStat.of(true)
                if keep_errors:
                    stats["errors"] = err
            out[(mode, b)] = stats
    return out


def _check_inputs(vectors, trials, queries=None):
    vectors = np.asarray(vectors, dtype=np.float64)
    if vectors.ndim != 2 or vectors.shape[0] == 0:
        raise ValueError("need a non-empty (n, d) array of vectors")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    norms = np.linalg.norm(vectors, axis=1)
    if np.any(norms == 0):
        raise ValueError("zero vector in distortion inputs")
    vectors = vectors / norms[:, None]
    if queries is not None:
        queries = np.asarray(queries, dtype=np.float64)
        if queries.shape != vectors.shape:
            raise ValueError("queries must pair one-to-one with vectors")
    return vectors, queries


def sweep(vectors, modes, bits, trials: int, seed: int = 0, queries=None, m=None,
          threads: int | None = None, keep_errors: bool = False) -> dict:
    """Merged statistics for every ``(mode, b)`` over ``trials`` fresh seeds."""
    vectors, queries = _check_inputs(vectors, trials, queries)
    modes = tuple(modes)
    bits = tuple(bits)
    seeds = [trial_seed(seed, t) for t in range(trials)]

    def job(s):
        return _run_trial(vectors, queries, modes, bits, s, m, keep_errors)

    if threads is not None and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(job, seeds))
    else:
        results = [job(s) for s in seeds]
    merged: dict = {}
    for res in results:
        for key, stats in res.items():
            slot = merged.setdefault(key, {})
            for name, st in stats.items():
                if name == "errors":
                    slot.setdefault("errors", []).append(st)
                else:
                    slot[name] = slot.get(name, RunningStat()).merge(st)
    for slot in merged.values():
        if "errors" in slot:
            slot["errors"] = np.concatenate(slot["errors"])
    return merged


def empirical_mse(vectors, b: int, trials: int = 50, seed: int = 0, threads: int | None = None) -> tuple[float, float]:
    """Mean squared reconstruction error of unit-normalized ``vectors`` and its standard error."""
    st = sweep(vectors, ["mse"], [b], trials, seed, threads=threads)[("mse", b)]["mse"]
    return st.mean, st.stderr


def _prod_stats(slot) -> ProdErrorStats:
    e, sq, est, true = slot["ip_err"], slot["ip_sq"], slot["est"], slot["true"]
    ratio = est.mean / true.mean if true.mean != 0 else float("nan")
    ratio_se = est.stderr / abs(true.mean) if true.mean != 0 else float("nan")
    return ProdErrorStats(e.mean, sq.mean, sq.stderr, e.stderr, ratio, ratio_se, e.n)


def empirical_prod_error(vectors, queries, b: int, mode: str = "prod", trials: int = 50, seed: int = 0,
                         m: int | None = None, threads: int | None = None) -> ProdErrorStats:
    """Signed bias and squared error of the inner-product estimate for paired ``(x_i, y_i)``."""
    res = sweep(vectors, [mode], [b], trials, seed, queries=queries, m=m, threads=threads)
    return _prod_stats(res[(mode, b)])


@dataclass(frozen=True)
class ReportConfig:
    modes: tuple[str, ...] = ("mse", "prod")
    bits: tuple[int, ...] = (1, 2, 3, 4, 5, 6)
    d: int = 1024
    n_vectors: int = 2000
    trials: int = 50
    seed: int = 0
    alpha: float = 0.5
    m: int | None = None
    threads: int | None = None
    histogram_bins: int = 0


@dataclass(frozen=True)
class ReportRow:
    mode: str
    b: int
    d: int
    n_trials: int
    metric: str
    empirical: float
    stderr: float
    upper: float | None
    lower: float | None
    ratio_upper: float | None
    ratio_lower: float | None
    passed: bool | None


@dataclass
class DistortionReport:
    config: ReportConfig
    rows: list[ReportRow] = field(default_factory=list)
    histograms: dict = field(default_factory=dict)

    @property
    def all_passed(self) -> bool:
        return all(r.passed is not False for r in self.rows)

    def find(self, mode: str, b: int, metric: str) -> ReportRow:
        for r in self.rows:
            if (r.mode, r.b, r.metric) == (mode, b, metric):
                return r
        raise KeyError((mode, b, metric))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in self.rows:
            vals = [r.mode, r.b, r.d, r.n_trials, r.metric, r.empirical, r.stderr, r.upper, r.lower,
                    r.ratio_upper, r.ratio_lower, r.passed]
            w.writerow([_fmt(v) for v in vals])
        return buf.getvalue()

    def to_json(self) -> str:
        rows = [{k if k != "passed" else "pass": v for k, v in asdict(r).items()} for r in self.rows]
        return json.dumps({"config": asdict(self.config), "rows": rows}, indent=2)

    def histogram_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["mode", "b", "bin_lo", "bin_hi", "count"])
        for (mode, b), (edges, counts) in sorted(self.histograms.items()):
            for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                w.writerow([mode, b, repr(float(lo)), repr(float(hi)), int(c)])
        return buf.getvalue()


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _sandwich_row(mode, b, d, metric, st: RunningStat, upper, lower) -> ReportRow:
    eps = 3.0 * st.stderr / st.mean if st.mean > 0 else 0.0
    ok = lower * (1 - eps) <= st.mean <= upper * (1 + eps)
    return ReportRow(mode, b, d, st.n, metric, st.mean, st.stderr, upper, lower,
                     st.mean / upper, st.mean / lower, ok)


def distortion_report(config: ReportConfig, vectors=None) -> DistortionReport:
    """Full sweep over ``config.modes`` x ``config.bits``.

    MSE rows are checked against ``[4**-b, sqrt(3)*pi/2 * 4**-b]`` and PROD
    rows against the matching inner-product interval, each widened by three
    standard errors.  PROD also gets a ``bias`` row (pass when within four
    standard errors of zero) and MSE an informational ``ip_ratio`` row.
    """
    report = DistortionReport(config)
    if not config.modes or not config.bits:
        return report
    if vectors is None:
        vectors = random_unit_vectors(config.n_vectors, config.d, stream_rng(config.seed, "data"))
    vectors, _ = _check_inputs(vectors, config.trials)
    d = vectors.shape[1]
    queries = correlated_queries(vectors, config.alpha, stream_rng(config.seed, "queries"))
    res = sweep(vectors, config.modes, config.bits, config.trials, config.seed, queries=queries,
                m=config.m, threads=config.threads, keep_errors=config.histogram_bins > 0)
    for mode in config.modes:
        for b in config.bits:
            slot = res[(mode, b)]
            bounds = theoretical_bounds(b, d)
            if mode == "mse":
                report.rows.append(_sandwich_row(mode, b, d, "mse", slot["mse"], bounds.mse_upper_general,
                                                 bounds.mse_lower))
                ps = _prod_stats(slot)
                report.rows.append(ReportRow(mode, b, d, ps.n, "ip_ratio", ps.ratio, ps.ratio_stderr,
                                             None, None, None, None, None))
            else:
                report.rows.append(_sandwich_row(mode, b, d, "prod", slot["ip_sq"], bounds.prod_upper_general,
                                                 bounds.prod_lower))
                ps = _prod_stats(slot)
                lim = BIAS_Z_LIMIT * ps.bias_stderr
                report.rows.append(ReportRow(mode, b, d, ps.n, "bias", ps.bias, ps.bias_stderr, lim, -lim,
                                             None, None, abs(ps.bias) <= lim))
            if config.histogram_bins > 0:
                report.histograms[(mode, b)] = error_histogram(slot["errors"], config.histogram_bins)
    return report


def error_histogram(errors, bins: int = 50) -> tuple[np.ndarray, np.ndarray]:
    counts, edges = np.histogram(np.asarray(errors, dtype=np.float64), bins=bins)
    return edges, counts
