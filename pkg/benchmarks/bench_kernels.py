"""Compare the numba and numpy kernel backends on representative problem sizes.

    python benchmarks/bench_kernels.py [--repeat 5] [--out results.csv]

Each case times ``quad_loss_grad`` (loss + gradient, the optimizer's inner
call) and ``quad_logits`` on both backends after one warm-up call, checks the
two backends agree, and prints the median wall time and speedup.
"""
import argparse
import csv
import statistics
import sys
import time

import numpy as np

from mdre import kernels
from mdre._accel import HAS_NUMBA

# (label, N, D, C): 1-D Table-1 fit, 1-D TRE link, dim-40 MI fit
CASES = [
    ("1d_mdre", 300_000, 1, 3),
    ("1d_bdre", 200_000, 1, 2),
    ("d40_mdre", 100_000, 40, 5),
]


def make_problem(n, d, c, seed=0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = rng.integers(0, c, n)
    wt = np.full(n, 1.0 / n)
    A = rng.standard_normal((c, d, d)) * 0.05
    W1 = 0.5 * (A + A.transpose(0, 2, 1))
    w2 = rng.standard_normal((c, d)) * 0.1
    b = rng.standard_normal(c) * 0.1
    logpi = np.full(c, -np.log(c))
    return X, y, wt, W1, w2, b, logpi


def timeit(fn, repeat):
    fn()  # warm-up, includes JIT compilation
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--out", default=None, help="optional CSV output")
    args = ap.parse_args(argv)

    if not HAS_NUMBA:
        print("numba unavailable (or MDRE_NUMBA=0): only the numpy backend is timed", file=sys.stderr)
    backends = ["numpy", "numba"] if HAS_NUMBA else ["numpy"]

    rows = []
    for label, n, d, c in CASES:
        X, y, wt, W1, w2, b, logpi = make_problem(n, d, c)
        res = {}
        for be in backends:
            t_grad = timeit(lambda: kernels.quad_loss_grad(X, y, wt, W1, w2, b, logpi, backend=be), args.repeat)
            t_log = timeit(lambda: kernels.quad_logits(X, W1, w2, b, backend=be), args.repeat)
            res[be] = (t_grad, t_log, kernels.quad_loss_grad(X, y, wt, W1, w2, b, logpi, backend=be))
        if HAS_NUMBA:
            a, bb = res["numpy"][2], res["numba"][2]
            agree = abs(a[0] - bb[0]) <= 1e-10 * abs(a[0]) and all(
                np.allclose(u, v, rtol=1e-9, atol=1e-12) for u, v in zip(a[1:], bb[1:])
            )
        else:
            agree = True
        for be in backends:
            t_grad, t_log, _ = res[be]
            speed = res["numpy"][0] / t_grad
            rows.append([label, n, d, c, be, f"{t_grad:.4g}", f"{t_log:.4g}", f"{speed:.3g}", agree])
            print(
                f"{label:10s} N={n:<7d} D={d:<3d} C={c}  {be:6s} loss+grad {t_grad * 1e3:8.1f} ms"
                f"  logits {t_log * 1e3:7.1f} ms  speedup {speed:5.2f}x  agree={agree}"
            )

    if args.out:
        with open(args.out, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["case", "n", "d", "c", "backend", "loss_grad_s", "logits_s", "speedup_vs_numpy", "agree"])
            w.writerows(rows)


if __name__ == "__main__":
    main()
