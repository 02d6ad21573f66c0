"""Time the numba kernels against their pure-numpy fallbacks.

Usage::

    python3 benchmarks/bench_kernels.py --sizes 500,2000,5000 --repeat 3
"""

import argparse
import time

import numpy as np

from statprinciples import _kernels as K


def best_time(func, *args, repeat=3):
    best = np.inf
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = func(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench(sizes, repeat, seed):
    rng = np.random.default_rng(seed)
    rows = []
    for n in sizes:
        coords = rng.uniform(0, 20, (n, 2))
        values = rng.standard_normal(n)
        edges = np.linspace(0, 10, 16)
        table = rng.integers(0, 50, (max(2, n // 50), max(2, n // 50))).astype(float)
        cases = [
            ("exp_corr_upper_sum", (coords, 1.5)),
            ("binned_cross_products", (coords, values, edges)),
            ("concordance_counts", (table,)),
        ]
        for name, args in cases:
            fast, slow = getattr(K, name + "_numba"), getattr(K, name + "_numpy")
            fast(*args)  # compile outside the timed region
            t_nb, out_nb = best_time(fast, *args, repeat=repeat)
            t_np, out_np = best_time(slow, *args, repeat=repeat)
            agree = np.allclose(np.asarray(out_nb, dtype=float), np.asarray(out_np, dtype=float), rtol=1e-10)
            rows.append((name, n, t_nb, t_np, t_np / t_nb, agree))
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--sizes", default="500,2000,5000", help="comma-separated point counts")
    parser.add_argument("--repeat", type=int, default=3)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()
    sizes = [int(s) for s in args.sizes.split(",")]
    print(f"numba available: {K.HAVE_NUMBA}; active backend: {K.backend()}")
    print(f"{'kernel':<24}{'n':>7}{'numba s':>11}{'numpy s':>11}{'speedup':>9}  agree")
    for name, n, t_nb, t_np, ratio, agree in bench(sizes, args.repeat, args.seed):
        print(f"{name:<24}{n:>7}{t_nb:>11.4f}{t_np:>11.4f}{ratio:>9.1f}  {agree}")


if __name__ == "__main__":
    main()
