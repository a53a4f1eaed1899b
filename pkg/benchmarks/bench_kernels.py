"""Time the numba kernels against the pure-numpy fallback.

    python3 benchmarks/bench_kernels.py [--sizes 256,512,1024] [--repeat 5]
"""

import argparse
import timeit

import numpy as np

from gpkp import _kernels


def cases(n: int, rng: np.random.Generator):
    x = np.linspace(-60, 60, n, endpoint=False)
    fields = [rng.standard_normal((n, n)) for _ in range(5)]
    fields[0] = np.abs(fields[0])
    u = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return {
        "lump_values": lambda nb: _kernels.lump_values(x, x, use_numba=nb),
        "gp_nonlinear": lambda nb: _kernels.gp_nonlinear(u, use_numba=nb),
        "remainder_pointwise": lambda nb: _kernels.remainder_pointwise(*fields, 0.2, "exact", use_numba=nb),
        "slow1_remainder": lambda nb: _kernels.slow1_remainder(*fields, 0.2, use_numba=nb),
        "e4_density": lambda nb: _kernels.e4_density(fields[0], fields[1], fields[2], fields[4], 0.2,
                                                     use_numba=nb),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", default="256,512,1024")
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _kernels.HAS_NUMBA:
        print("numba not importable; only the numpy path is available")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<22}{'n':>6}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}{'max diff':>12}")
    for n in (int(s) for s in args.sizes.split(",")):
        for name, fn in cases(n, rng).items():
            a = fn(False)
            t_np = min(timeit.repeat(lambda: fn(False), number=1, repeat=args.repeat)) * 1e3
            if _kernels.HAS_NUMBA:
                b = fn(True)  # compile outside the timing
                t_nb = min(timeit.repeat(lambda: fn(True), number=1, repeat=args.repeat)) * 1e3
                diff = max(float(np.max(np.abs(np.asarray(p) - np.asarray(q))))
                           for p, q in zip(a if isinstance(a, tuple) else (a,),
                                           b if isinstance(b, tuple) else (b,)))
                print(f"{name:<22}{n:>6}{t_np:>12.3f}{t_nb:>12.3f}{t_np / t_nb:>10.2f}{diff:>12.2e}")
            else:
                print(f"{name:<22}{n:>6}{t_np:>12.3f}{'-':>12}{'-':>10}{'-':>12}")


if __name__ == "__main__":
    main()
