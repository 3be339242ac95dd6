"""Compiled versus numpy kernels: stencils and the variable-coefficient PCG.

    python3 benchmarks/bench_kernels.py [--sizes 32 64 128] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from chd_opt.kernels import backends


def cases(n, rng):
    h = 2 * np.pi / n
    f = rng.standard_normal((n, n))
    kx = np.zeros((n + 1, n))
    ky = np.zeros((n, n + 1))
    kx[1:-1] = 0.5 + rng.random((n - 1, n))
    ky[:, 1:-1] = 0.5 + rng.random((n, n - 1))
    rhs = f - f.mean()
    return {
        "laplacian": lambda m: m.laplacian(f, h, h),
        "gradient": lambda m: m.gradient(f, h, h),
        "varcoef_apply": lambda m: m.varcoef_apply(kx, ky, f, h, h),
        "pcg_varcoef": lambda m: m.pcg_varcoef(kx, ky, rhs, h, h, 1e-10, 10_000),
    }


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    mods = backends()
    if "cython" not in mods:
        print("compiled extension not built; only the fallback is timed")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<15}{'n':>6}" + "".join(f"{name + ' [ms]':>16}" for name in mods) + f"{'speedup':>10}")
    for n in args.sizes:
        for name, fn in cases(n, rng).items():
            times = {}
            for bname, mod in mods.items():
                number = 3 if name == "pcg_varcoef" else 50
                t = min(timeit.repeat(lambda: fn(mod), number=number, repeat=args.repeat)) / number
                times[bname] = 1e3 * t
            speed = times["python"] / times["cython"] if "cython" in times else float("nan")
            print(f"{name:<15}{n:>6}" + "".join(f"{times[b]:>16.4f}" for b in mods) + f"{speed:>10.1f}")


if __name__ == "__main__":
    main()
