"""Optimal scalar codebooks for the coordinates of randomly rotated unit vectors.

A coordinate of a uniformly random point on the unit sphere in ``d``
dimensions has density proportional to ``(1 - x**2) ** ((d - 3) / 2)`` on
``[-1, 1]``; for large ``d`` this is close to ``N(0, 1/d)``.  The codebooks
here solve the continuous 1-D k-means problem for either density with a
Lloyd-Max iteration evaluated by composite Gauss-Legendre quadrature.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import stats
from scipy.linalg import solve_banded

GAUSSIAN_HALF_WIDTH = 12.0
QUADRATURE_NODES = 64
# Dimension from which the unit-variance Gaussian codebook replaces the exact one.
GAUSSIAN_DIMENSION_THRESHOLD = 256
MAX_BITS = 8
CACHE_FORMAT_VERSION = 1

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(QUADRATURE_NODES)


class ConvergenceWarning(UserWarning):
    """Lloyd iteration stopped at ``max_iter`` before reaching ``tol``."""


def _beta_log_norm(d: int) -> float:
    return math.lgamma(d / 2) - 0.5 * math.log(math.pi) - math.lgamma((d - 1) / 2)


def beta_pdf(x, d: int):
    """Density of one coordinate of a uniform point on the unit sphere in R^d.

    Accepts scalars or arrays and returns 0 outside ``[-1, 1]``.  The
    normalizing constant is computed through log-Gamma so large ``d`` does not
    overflow.
    """
    if d < 2:
        raise ValueError(f"beta_pdf needs d >= 2, got {d}")
    x = np.asarray(x, dtype=np.float64)
    one_minus = 1.0 - x * x
    inside = one_minus > 0
    with np.errstate(divide="ignore", invalid="ignore"):
        logf = _beta_log_norm(d) + 0.5 * (d - 3) * np.log(np.where(inside, one_minus, 1.0))
        out = np.where(inside, np.exp(logf), 0.0)
    if d == 3:
        # uniform density includes the endpoints
        out = np.where(np.abs(x) == 1.0, 0.5, out)
    return out[()] if out.ndim == 0 else out


@dataclass(frozen=True)
class SourcePdf:
    """Symmetric source density for the scalar quantizer.

    ``kind`` is ``"beta"`` (exact sphere coordinate law, needs ``d``) or
    ``"gaussian"`` (standard normal, support truncated at +-12).
    """

    kind: str
    d: int | None = None

    def __post_init__(self):
        if self.kind == "beta":
            if self.d is None or self.d < 2:
                raise ValueError(f"BetaSphere source needs d >= 2, got {self.d}")
        elif self.kind == "gaussian":
            if self.d is not None:
                raise ValueError("gaussian source takes no dimension")
        else:
            raise ValueError(f"unknown source kind {self.kind!r}")

    @classmethod
    def beta_sphere(cls, d: int) -> "SourcePdf":
        return cls("beta", int(d))

    @classmethod
    def std_gaussian(cls) -> "SourcePdf":
        return cls("gaussian")

    @property
    def support(self) -> tuple[float, float]:
        if self.kind == "beta":
            return (-1.0, 1.0)
        return (-GAUSSIAN_HALF_WIDTH, GAUSSIAN_HALF_WIDTH)

    @property
    def variance(self) -> float:
        return 1.0 / self.d if self.kind == "beta" else 1.0

    @property
    def tag(self) -> str:
        return f"beta:{self.d}" if self.kind == "beta" else "gaussian"

    def pdf(self, x):
        if self.kind == "beta":
            return beta_pdf(x, self.d)
        return stats.norm.pdf(x)

    def cdf(self, x):
        if self.kind == "beta":
            a = (self.d - 1) / 2
            return stats.beta.cdf((np.asarray(x) + 1.0) / 2.0, a, a)
        return stats.norm.cdf(x)

    def ppf(self, u):
        if self.kind == "beta":
            a = (self.d - 1) / 2
            return 2.0 * stats.beta.ppf(u, a, a) - 1.0
        return stats.norm.ppf(u)

    def nodes(self, lo, hi) -> tuple[np.ndarray, np.ndarray]:
        """Gauss-Legendre abscissae and pdf-weighted weights for each ``[lo, hi]``.

        The sphere law is integrated in ``x = sin(t)``, where the integrand
        ``cos(t) ** (d - 2)`` is smooth even for ``d = 2``.
        """
        lo = np.atleast_1d(np.asarray(lo, dtype=np.float64))
        hi = np.atleast_1d(np.asarray(hi, dtype=np.float64))
        if self.kind == "beta":
            tlo = np.arcsin(np.clip(lo, -1.0, 1.0))
            thi = np.arcsin(np.clip(hi, -1.0, 1.0))
            half = 0.5 * (thi - tlo)
            t = (0.5 * (thi + tlo))[:, None] + half[:, None] * _GL_NODES[None, :]
            x = np.sin(t)
            w = half[:, None] * _GL_WEIGHTS[None, :]
            w = w * np.exp(_beta_log_norm(self.d) + (self.d - 2) * np.log(np.cos(t)))
        else:
            half = 0.5 * (hi - lo)
            x = (0.5 * (hi + lo))[:, None] + half[:, None] * _GL_NODES[None, :]
            w = half[:, None] * _GL_WEIGHTS[None, :] * stats.norm.pdf(x)
        return x, w

    def cell_moments(self, lo, hi) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Zeroth, first and second moments of the density over each ``[lo, hi]``."""
        x, w = self.nodes(lo, hi)
        return w.sum(axis=1), (w * x).sum(axis=1), (w * x * x).sum(axis=1)

    def integrate(self, func=None, panels: int = 64) -> float:
        """``E[func(X)]`` (or total mass when ``func`` is None) over the support."""
        lo, hi = self.support
        if self.kind == "beta":
            edges = np.sin(np.linspace(-np.pi / 2, np.pi / 2, panels + 1))
        else:
            edges = np.linspace(lo, hi, panels + 1)
        x, w = self.nodes(edges[:-1], edges[1:])
        vals = np.ones_like(x) if func is None else func(x)
        return float(np.sum(w * vals))


@dataclass(frozen=True, eq=False)
class Codebook:
    """Sorted reconstruction levels of a ``bit_width``-bit scalar quantizer.

    ``standardized`` codebooks are built for the unit-variance Gaussian and
    must be multiplied by ``1/sqrt(d)`` before quantizing sphere coordinates.
    """

    bit_width: int
    centroids: np.ndarray
    boundaries: np.ndarray
    cost: float
    source: SourcePdf
    standardized: bool
    converged: bool = True
    iterations: int = 0
    cost_history: tuple[float, ...] = field(default=(), repr=False)

    @property
    def size(self) -> int:
        return len(self.centroids)

    def scale_for(self, d: int) -> float:
        """Multiplier mapping stored levels to sphere coordinates in ``d`` dims."""
        return 1.0 / math.sqrt(d) if self.standardized else 1.0


def _boundaries(c: np.ndarray) -> np.ndarray:
    return 0.5 * (c[1:] + c[:-1])


def _cell_edges(c: np.ndarray, support: tuple[float, float]) -> tuple[np.ndarray, np.ndarray]:
    mids = _boundaries(c)
    lo = np.concatenate([[support[0]], mids])
    hi = np.concatenate([mids, [support[1]]])
    return lo, hi


def _cost_from_moments(c, m0, m1, m2) -> float:
    return float(np.sum(m2 - 2.0 * c * m1 + c * c * m0))


def _cost(pdf: SourcePdf, c: np.ndarray) -> float:
    lo, hi = _cell_edges(c, pdf.support)
    return _cost_from_moments(c, *pdf.cell_moments(lo, hi))


def _symmetrize(c: np.ndarray) -> np.ndarray:
    return 0.5 * (c - c[::-1])


def build_codebook(pdf: SourcePdf, b: int, tol: float = 1e-10, max_iter: int = 10_000) -> Codebook:
    """Lloyd-Max codebook with ``2**b`` levels for ``pdf``.

    Each iterate moves the centroids to the conditional means of their cells.
    When the Newton step on the fixed-point equations (tridiagonal Jacobian)
    gives a cost no larger than the plain Lloyd step it is taken instead, so
    the cost sequence stays non-increasing while convergence becomes
    quadratic near the optimum.  Iteration stops once the Lloyd update moves
    no centroid by ``tol`` or more.
    """
    if not 0 <= b <= MAX_BITS:
        raise ValueError(f"bit width must be in [0, {MAX_BITS}], got {b}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    standardized = pdf.kind == "gaussian"
    if b == 0:
        return Codebook(0, np.zeros(1), np.zeros(0), pdf.variance, pdf, standardized)

    k = 1 << b
    support = pdf.support
    c = _symmetrize(np.asarray(pdf.ppf((2 * np.arange(k) + 1) / (2 * k)), dtype=np.float64))
    history = []
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        lo, hi = _cell_edges(c, support)
        m0, m1, m2 = pdf.cell_moments(lo, hi)
        history.append(_cost_from_moments(c, m0, m1, m2))
        means = m1 / m0
        resid = means - c
        if np.max(np.abs(resid)) < tol:
            c = _symmetrize(means)
            converged = True
            break
        lloyd = _symmetrize(means)
        step = lloyd
        if k > 1:
            candidate = _newton_candidate(pdf, c, means, m0, lo, hi, resid)
            if candidate is not None and _cost(pdf, candidate) <= _cost(pdf, lloyd):
                step = candidate
        c = step
    else:
        warnings.warn(f"Lloyd iteration for b={b} did not reach tol={tol} in {max_iter} iterations",
                      ConvergenceWarning, stacklevel=2)

    cost = _cost(pdf, c)
    history.append(cost)
    return Codebook(b, c, _boundaries(c), cost, pdf, standardized, converged, it, tuple(history))


def _newton_candidate(pdf, c, means, m0, lo, hi, resid):
    # d mean_i / d upper_i = f(upper)(upper - mean)/P, d mean_i / d lower_i = f(lower)(mean - lower)/P;
    # each interior boundary is the midpoint of its two neighbours.
    k = len(c)
    f_hi = np.asarray(pdf.pdf(hi), dtype=np.float64)
    f_lo = np.asarray(pdf.pdf(lo), dtype=np.float64)
    d_hi = f_hi * (hi - means) / m0
    d_lo = f_lo * (means - lo) / m0
    d_hi[-1] = 0.0
    d_lo[0] = 0.0
    banded = np.zeros((3, k))
    banded[0, 1:] = 0.5 * d_hi[:-1]
    banded[1] = 0.5 * (d_lo + d_hi) - 1.0
    banded[2, :-1] = 0.5 * d_lo[1:]
    try:
        delta = solve_banded((1, 1), banded, -resid)
    except (np.linalg.LinAlgError, ValueError):
        return None
    cand = _symmetrize(c + delta)
    if not np.all(np.isfinite(cand)) or np.any(np.diff(cand) <= 0):
        return None
    if cand[0] <= pdf.support[0] or cand[-1] >= pdf.support[1]:
        return None
    return cand


def codebook_cost(cb: Codebook, pdf: SourcePdf | None = None) -> float:
    """Expected squared error of ``cb`` under ``pdf`` (defaults to its own source)."""
    pdf = cb.source if pdf is None else pdf
    if cb.bit_width == 0:
        m0, m1, m2 = pdf.cell_moments([pdf.support[0]], [pdf.support[1]])
        c = cb.centroids
        return _cost_from_moments(c, m0, m1, m2)
    return _cost(pdf, np.asarray(cb.centroids, dtype=np.float64))


def panter_dite_bound(b: int) -> float:
    """High-resolution distortion bound ``sqrt(3)*pi/2 * 4**-b`` for a unit-variance source."""
    if b < 0:
        raise ValueError("b must be non-negative")
    return math.sqrt(3) * math.pi / 2 * 4.0 ** (-b)


def encode_scalar(cb: Codebook, x: float) -> int:
    """Index of the nearest level; a value exactly on a boundary goes to the lower cell."""
    return int(np.searchsorted(cb.boundaries, x, side="left"))


def encode(cb: Codebook, x, scale: float = 1.0) -> np.ndarray:
    """Vectorized :func:`encode_scalar` against levels multiplied by ``scale``."""
    x = np.asarray(x, dtype=np.float64)
    return np.searchsorted(cb.boundaries * scale, x, side="left").astype(np.uint8)


def decode_scalar(cb: Codebook, idx: int) -> float:
    if not 0 <= idx < cb.size:
        raise IndexError(f"codebook index {idx} out of range for {cb.size} levels")
    return float(cb.centroids[idx])


@lru_cache(maxsize=None)
def gaussian_codebook(b: int) -> Codebook:
    return build_codebook(SourcePdf.std_gaussian(), b)


@lru_cache(maxsize=64)
def beta_codebook(d: int, b: int) -> Codebook:
    return build_codebook(SourcePdf.beta_sphere(d), b)


def codebook_for_dimension(d: int, b: int) -> Codebook:
    """Codebook the quantizer uses in dimension ``d``: exact law below 256, Gaussian above."""
    if d >= GAUSSIAN_DIMENSION_THRESHOLD or d < 2:
        return gaussian_codebook(b)
    return beta_codebook(d, b)


def source_tag_for_dimension(d: int) -> str:
    return codebook_for_dimension(d, 0).source.tag


def save_codebook(cb: Codebook, path) -> None:
    payload = {
        "version": CACHE_FORMAT_VERSION,
        "source": cb.source.kind,
        "d_or_gaussian": cb.source.d if cb.source.kind == "beta" else "gaussian",
        "b": cb.bit_width,
        "centroids": [float(v) for v in cb.centroids],
        "cost": cb.cost,
    }
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_codebook(path) -> Codebook:
    payload = json.loads(Path(path).read_text())
    if payload.get("version") != CACHE_FORMAT_VERSION:
        raise ValueError(f"unsupported codebook cache version {payload.get('version')!r}")
    if payload["source"] == "beta":
        pdf = SourcePdf.beta_sphere(int(payload["d_or_gaussian"]))
    else:
        pdf = SourcePdf.std_gaussian()
    c = np.asarray(payload["centroids"], dtype=np.float64)
    b = int(payload["b"])
    if len(c) != 1 << b or np.any(np.diff(c) <= 0):
        raise ValueError("codebook cache has inconsistent centroids")
    return Codebook(b, c, _boundaries(c), float(payload["cost"]), pdf, pdf.kind == "gaussian")
