"""Compare the compiled kernels with the pure-Python fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 3]

Every workload is run on both backends with identical inputs; the script
checks that outputs agree and prints the best-of-``repeat`` wall time and
the speed-up.
"""
import argparse
import time

import numpy as np

from sausagelab import asymptotics as A
from sausagelab import space as S
from sausagelab import walker as W
from sausagelab._core import compiled, fallback


def best_of(fn, repeat):
    best, out = float("inf"), None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def workloads():
    lat = S.lattice_box(2, 41)
    c = 20 * 41 + 20
    inside = W.ball_mask(lat, c, 10)
    path = S.path_graph(401)
    return [
        ("positions  lattice41, 20000 paths, t<=8",
         lambda be: W.positions(lat, c, [1.0, 4.0, 8.0], 20000, seed=1, backend=be)),
        ("first exit lattice41, 20000 paths, r=10",
         lambda be: W.exit_times(lat, c, inside, 50.0, 20000, seed=1, backend=be)[0]),
        ("sausage    lattice41, 10000 paths, eps=1.5",
         lambda be: W.sausage_masses(lat, c, [2.0, 8.0], 1.5, 10000, seed=1, backend=be)),
        ("interval DP path-401, t=8 (s=1088)",
         lambda be: np.array([A.exact_interval_dp(path, 200, 1088.0, 1.0, 0.5, backend=be).log_value])),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    if compiled is None:
        print("compiled extension not built; nothing to compare")
        return 1
    print(f"{'workload':44s} {'compiled':>10s} {'python':>10s} {'speed-up':>9s}  agree")
    for name, fn in workloads():
        tc, oc = best_of(lambda: fn(compiled), args.repeat)
        tp, op = best_of(lambda: fn(fallback), args.repeat)
        agree = np.allclose(oc, op, rtol=1e-12, atol=0, equal_nan=True)
        print(f"{name:44s} {tc:10.4f} {tp:10.4f} {tp / tc:8.1f}x  {agree}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
