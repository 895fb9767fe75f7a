"""Command-line interface.

Exit codes: 0 success, 1 a validation/acceptance check failed, 2 usage
error, 3 I/O or parse error.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import kernels
from .codebook import (MAX_BITS, SourcePdf, build_codebook, gaussian_codebook, panter_dite_bound,
                       save_codebook)
from .evaluation import ReportConfig, distortion_report
from .search import QuantizedIndex, build_index, exact_ground_truth, recall_eval, search
from .storage import IndexFormatError, VectorFileError, read_ivecs, read_vectors, write_fvecs

EXIT_OK, EXIT_FAILED, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
THREADS_ENV = "ROTQUANT_THREADS"

log = logging.getLogger("rotquant")


class UsageError(Exception):
    pass


def _int_list(text: str) -> list[int]:
    out = []
    for part in text.split(","):
        part = part.strip()
        if "-" in part:
            lo, hi = part.split("-", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise argparse.ArgumentTypeError("empty list")
    return out


def _bits(text: str) -> int:
    b = int(text)
    if not 0 <= b <= MAX_BITS:
        raise argparse.ArgumentTypeError(f"bit width must be in 0..{MAX_BITS}")
    return b


def _resolve_threads(value):
    if value is None:
        env = os.environ.get(THREADS_ENV)
        value = int(env) if env else (os.cpu_count() or 1)
    if value < 1:
        raise UsageError("--threads must be >= 1")
    return value


def _print_config(args) -> None:
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    cfg["backend"] = kernels.BACKEND
    print("# config " + json.dumps(cfg, sort_keys=True, default=str), file=sys.stderr)


def cmd_codebook(args) -> int:
    if args.dim is None:
        cb = gaussian_codebook(args.bits)
        label = "N(0,1) (multiply by 1/sqrt(d) at use)"
    else:
        if args.dim < 2:
            raise UsageError("--dim must be >= 2")
        cb = build_codebook(SourcePdf.beta_sphere(args.dim), args.bits)
        label = f"sphere coordinate law, d={args.dim}"
    print(f"source: {label}")
    print(f"bits: {cb.bit_width}  levels: {cb.size}  converged: {cb.converged}  iterations: {cb.iterations}")
    print("centroids: " + " ".join(f"{c:+.6f}" for c in cb.centroids))
    cost = cb.cost if args.dim is None else cb.cost * args.dim
    print(f"cost: {cost:.6f}" + ("" if args.dim is None else " (times d)"))
    print(f"panter_dite_bound: {panter_dite_bound(cb.bit_width):.6f}")
    if args.out:
        save_codebook(cb, args.out)
    return EXIT_OK


def cmd_quantize(args) -> int:
    x = read_vectors(args.input)
    if len(x) == 0:
        raise UsageError("input has no vectors")
    if args.mode == "prod" and args.bits < 1:
        raise UsageError("prod mode needs --bits >= 1")
    if args.mode == "mse" and args.m is not None:
        raise UsageError("--m only applies to prod mode")
    start = time.perf_counter()
    index = build_index(x, args.mode, args.bits, args.seed, args.m)
    elapsed = time.perf_counter() - start
    index.save(args.out)
    n, d = x.shape
    rec = index.header.record_bytes
    ratio = 4 * d / rec
    print(f"quantized {n} vectors d={d} mode={args.mode} b={args.bits} in {elapsed:.3f}s")
    print(f"record bytes: {rec} (float32: {4 * d}), compression ratio {ratio:.3f}x")
    return EXIT_OK


def cmd_dequantize(args) -> int:
    index = QuantizedIndex.load(args.index)
    recon = index.dequantize()
    write_fvecs(args.out, recon)
    print(f"reconstructed {len(recon)} vectors d={index.d}")
    zero = int(np.sum(index.codes.norms == 0))
    if zero:
        print(f"{zero} zero-norm records reconstructed as zero vectors")
    if args.reference:
        ref = read_vectors(args.reference).astype(np.float64)
        if ref.shape != recon.shape:
            raise UsageError(f"reference shape {ref.shape} does not match index {recon.shape}")
        norms2 = np.sum(ref ** 2, axis=1)
        err = np.sum((ref - recon) ** 2, axis=1)
        rel = err[norms2 > 0] / norms2[norms2 > 0]
        print(f"relative squared error: mean {rel.mean():.6g} max {rel.max():.6g}" if len(rel) else "no nonzero rows")
    return EXIT_OK


def cmd_eval(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be >= 1")
    modes = tuple(m for m in args.modes.split(",") if m)
    for m in modes:
        if m not in ("mse", "prod"):
            raise UsageError(f"unknown mode {m!r}")
    bits = tuple(args.bits)
    if any(not 0 <= b <= MAX_BITS for b in bits) or ("prod" in modes and min(bits) < 1):
        raise UsageError("bit widths must be in 0..8 (1..8 for prod)")
    vectors = read_vectors(args.input) if args.input else None
    cfg = ReportConfig(modes=modes, bits=bits, d=args.dim if vectors is None else vectors.shape[1],
                       n_vectors=args.vectors, trials=args.trials, seed=args.seed, alpha=args.alpha,
                       m=args.m, threads=args.threads, histogram_bins=args.histogram_bins if args.histogram else 0)
    report = distortion_report(cfg, vectors)
    text = report.to_csv()
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    if args.json:
        Path(args.json).write_text(report.to_json() + "\n")
    if args.histogram:
        Path(args.histogram).write_text(report.histogram_csv())
    failed = [r for r in report.rows if r.passed is False]
    for r in failed:
        print(f"FAIL {r.mode} b={r.b} {r.metric}: {r.empirical:.6g} not in [{r.lower:.6g}, {r.upper:.6g}]",
              file=sys.stderr)
    return EXIT_FAILED if failed else EXIT_OK


def cmd_search(args) -> int:
    index = QuantizedIndex.load(args.index)
    queries = read_vectors(args.queries)
    lines = ["query,rank,id,score"]
    for qi, q in enumerate(queries):
        res = search(index, q, args.k)
        lines.extend(f"{qi},{r},{i},{s!r}" for r, (i, s) in enumerate(zip(res.ids.tolist(), res.scores.tolist())))
    text = "\n".join(lines) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def cmd_recall(args) -> int:
    index = QuantizedIndex.load(args.index)
    queries = read_vectors(args.queries)
    if args.gt:
        gt = read_ivecs(args.gt)[:, 0]
    elif args.data:
        warnings.warn("no ground truth given; computing exact top-1 from --data", stacklevel=1)
        print("warning: no ground truth given; computing exact top-1 from --data", file=sys.stderr)
        gt = exact_ground_truth(read_vectors(args.data), queries)
    else:
        raise UsageError("recall needs --gt or --data for the exact oracle")
    table = recall_eval(index, queries, gt, args.k)
    text = "k,recall\n" + "".join(f"{k},{v!r}\n" for k, v in table.items())
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="rotquant", description=__doc__.splitlines()[0])
    p.add_argument("--threads", type=int, default=None,
                   help=f"worker threads (default ${THREADS_ENV} or CPU count)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("codebook", help="build and print a Lloyd-Max codebook")
    c.add_argument("--bits", type=_bits, required=True)
    c.add_argument("--dim", type=int, default=None, help="exact sphere law for this d (default: Gaussian)")
    c.add_argument("--out", default=None, help="write JSON codebook cache")
    c.set_defaults(func=cmd_codebook)

    q = sub.add_parser("quantize", help="quantize a vector file into a TBQ1 index")
    q.add_argument("--input", required=True)
    q.add_argument("--mode", choices=["mse", "prod"], default="mse")
    q.add_argument("--bits", type=_bits, required=True)
    q.add_argument("--m", type=int, default=None, help="sketch width for prod mode (default d)")
    q.add_argument("--seed", type=int, default=0)
    q.add_argument("--out", required=True)
    q.set_defaults(func=cmd_quantize)

    dq = sub.add_parser("dequantize", help="reconstruct vectors from an index")
    dq.add_argument("--index", required=True)
    dq.add_argument("--out", required=True)
    dq.add_argument("--reference", default=None, help="original vectors for error statistics")
    dq.set_defaults(func=cmd_dequantize)

    e = sub.add_parser("eval", help="distortion sweep against the analytic bounds")
    e.add_argument("--modes", default="mse,prod", help="comma-separated subset of mse,prod")
    e.add_argument("--bits", type=_int_list, default=[1, 2, 3, 4, 5, 6], help="list or range, e.g. 1,2 or 1-6")
    e.add_argument("--dim", type=int, default=1024, help="dimension of synthetic unit vectors")
    e.add_argument("--vectors", type=int, default=2000, help="vectors per trial")
    e.add_argument("--trials", type=int, default=50, help="independent quantizer seeds")
    e.add_argument("--seed", type=int, default=0)
    e.add_argument("--alpha", type=float, default=0.5, help="query/vector correlation")
    e.add_argument("--m", type=int, default=None, help="sketch width for prod mode (default d)")
    e.add_argument("--input", default=None, help="real vectors (normalized before use)")
    e.add_argument("--out", default=None, help="CSV path (default stdout)")
    e.add_argument("--json", default=None, help="also write the report as JSON")
    e.add_argument("--histogram", default=None, help="binned error histogram CSV")
    e.add_argument("--histogram-bins", type=int, default=50)
    e.set_defaults(func=cmd_eval)

    s = sub.add_parser("search", help="top-k inner-product search")
    s.add_argument("--index", required=True)
    s.add_argument("--queries", required=True)
    s.add_argument("--k", type=int, default=10)
    s.add_argument("--out", default=None)
    s.set_defaults(func=cmd_search)

    r = sub.add_parser("recall", help="recall 1@k against exact top-1")
    r.add_argument("--index", required=True)
    r.add_argument("--queries", required=True)
    r.add_argument("--k", type=_int_list, default=[1, 10, 100])
    r.add_argument("--gt", default=None, help="ivecs ground truth (first column = top-1)")
    r.add_argument("--data", default=None, help="original vectors for the exact oracle")
    r.add_argument("--out", default=None)
    r.set_defaults(func=cmd_recall)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.threads = _resolve_threads(args.threads)
        if getattr(args, "k", None) is not None and isinstance(args.k, int) and args.k < 1:
            raise UsageError("--k must be >= 1")
        _print_config(args)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, VectorFileError, IndexFormatError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
