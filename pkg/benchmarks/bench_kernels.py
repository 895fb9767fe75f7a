"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--rows 100000] [--dim 128] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from rotquant import _kernels_py, kernels

try:
    from rotquant import _kernels as _compiled
except ImportError:
    _compiled = None


def cases(rows, dim, rng):
    out = []
    for b in (1, 2, 4, 8):
        codes = rng.integers(0, 1 << b, size=(rows, dim)).astype(np.uint8)
        packed = kernels.pack_rows(codes, b)
        lut = rng.standard_normal((dim, 1 << b))
        out.append((f"pack_rows b={b}", lambda impl, c=codes, b=b: kernels.pack_rows(c, b, impl=impl)))
        out.append((f"unpack_rows b={b}", lambda impl, p=packed, b=b: kernels.unpack_rows(p, b, dim, impl=impl)))
        out.append((f"score_lut b={b}", lambda impl, p=packed, b=b, t=lut: kernels.score_lut(p, b, t, impl=impl)))
    signs = kernels.pack_rows(rng.integers(0, 2, size=(rows, dim)).astype(np.uint8), 1)
    v = rng.standard_normal(dim)
    out.append(("sign_dot", lambda impl: kernels.sign_dot(signs, v, impl=impl)))
    scores = rng.standard_normal(rows)
    out.append(("topk k=10", lambda impl: kernels.topk(scores, 10, impl=impl)))
    out.append(("topk k=1000", lambda impl: kernels.topk(scores, 1000, impl=impl)))
    return out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--rows", type=int, default=100_000)
    ap.add_argument("--dim", type=int, default=128)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"rows={args.rows} dim={args.dim} best of {args.repeat}")
    if _compiled is None:
        print("compiled extension not built; timing the numpy fallback only")
    print(f"{'kernel':<18}{'numpy ms':>12}{'compiled ms':>14}{'speedup':>10}")
    for name, fn in cases(args.rows, args.dim, rng):
        t_py = min(timeit.repeat(lambda: fn(_kernels_py), number=1, repeat=args.repeat)) * 1e3
        if _compiled is None:
            print(f"{name:<18}{t_py:>12.2f}{'-':>14}{'-':>10}")
            continue
        t_c = min(timeit.repeat(lambda: fn(_compiled), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<18}{t_py:>12.2f}{t_c:>14.2f}{t_py / t_c:>9.1f}x")


if __name__ == "__main__":
    main()
