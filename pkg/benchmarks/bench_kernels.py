"""Compare the numba and numpy paths of the Green-function kernels.

    python3 benchmarks/bench_kernels.py [--n 512] [--repeat 5]

The two paths must agree to rounding; timings are the best of ``repeat`` runs.
"""
import argparse
import os
import time

import numpy as np

from sheetflow import _kernels


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def run(n, repeat):
    rng = np.random.default_rng(0)
    tgt = rng.random((n, 2))
    src = rng.random((n, 2))
    nrm = rng.normal(size=(n, 2))
    nrm /= np.linalg.norm(nrm, axis=1)[:, None]
    sw, mw = rng.normal(size=n), rng.normal(size=n)
    cases = {
        "kernel_matrix": lambda: np.stack(_kernels.kernel_matrix(tgt, src)),
        "layer_sum": lambda: np.column_stack(_kernels.layer_sum(tgt, src, nrm, sw, mw)),
    }
    rows = []
    for name, fn in cases.items():
        result = {}
        for flag in ("1", "0"):
            os.environ["SHEETFLOW_NUMBA"] = flag
            fn()  # compile / warm caches
            result[flag] = best_of(fn, repeat)
        (t_nb, a), (t_np, b) = result["1"], result["0"]
        diff = float(np.max(np.abs(a - b)) / np.max(np.abs(b)))
        rows.append((name, n * n, t_nb, t_np, t_np / t_nb, diff))
    os.environ.pop("SHEETFLOW_NUMBA", None)
    return rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=512)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    print(f"{'kernel':<14} {'pairs':>9} {'numba s':>10} {'numpy s':>10} {'speedup':>8} {'rel diff':>10}")
    for name, pairs, t_nb, t_np, sp, diff in run(args.n, args.repeat):
        print(f"{name:<14} {pairs:>9d} {t_nb:>10.4f} {t_np:>10.4f} {sp:>8.1f} {diff:>10.2e}")


if __name__ == "__main__":
    main()
