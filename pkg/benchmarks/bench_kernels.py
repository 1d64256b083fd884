"""Benchmark: compiled kernels vs the pure-Python fallback.

Times the hot paths (Kepler drift, splitting step, full integration loop)
on both backends and reports the speedup together with the end-state
agreement of a reference trajectory.

Run:  python benchmarks/bench_kernels.py
"""

import time

import numpy as np

import ncentre._kernels_py as kpy

try:
    import ncentre._kernels_cy as kcy
except ImportError:
    kcy = None

from ncentre.model import CentreConfig

CFG = CentreConfig(2, ((0.0, 0.0), (2.0, 0.0), (1.0, 1.7)), (1.0, 1.0, 1.0))
Q0 = np.array([0.3, 0.9, 0.0])
P0 = np.array([1.1, -0.4, 0.0])


def time_call(func, *args, repeat=5):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = func(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_drift(mod, n=20000):
    q = np.array([1.1, -0.3, 0.2])
    p = np.array([0.4, 1.0, -0.1])

    def loop():
        qq, pp = q, p
        for _ in range(n):
            qq, pp = mod.kepler_drift(1.0, qq, pp, 1e-3)
        return qq

    return time_call(loop, repeat=3)


def bench_split(mod, n=20000):
    centres, zs = CFG.centres3, CFG.strengths_arr

    def loop():
        qq, pp = Q0, P0
        for _ in range(n):
            qq, pp = mod.split_step(centres, zs, qq, pp, 1e-4, 0, 4)
        return qq

    return time_call(loop, repeat=3)


def bench_integrate(mod, t_final=20.0):
    centres, zs = CFG.centres3, CFG.strengths_arr
    cap = 200000
    bufs = (np.empty(cap), np.empty((cap, 3)), np.empty((cap, 3)),
            np.empty(cap), np.empty(cap, dtype=np.int64), np.empty(cap))
    evs = (np.empty(4096), np.empty(4096, dtype=np.int64),
           np.empty(4096, dtype=np.int64), np.empty(4096))

    def run():
        return mod.integrate_core(
            centres, zs, Q0, P0, 0.0, t_final,
            1e-3, 0.197, 2.0, 2e-5, 1e-10, 1e-8, -1.4, 4,
            0, 0.0, 0.0, 10 ** 7, *bufs, *evs)

    dt, res = time_call(run, repeat=3)
    n_samp = res[1]
    return dt, (res[2], bufs[1][n_samp - 1].copy())


def main():
    rows = []
    mods = [("python", kpy)] + ([("cython", kcy)] if kcy else [])
    results = {}
    for name, mod in mods:
        t_drift, _ = bench_drift(mod)
        t_split, _ = bench_split(mod)
        t_int, (steps, q_end) = bench_integrate(mod)
        results[name] = q_end
        rows.append((name, t_drift, t_split, t_int, steps))

    print(f"{'backend':<10}{'drift x20k':>12}{'split x20k':>12}"
          f"{'integrate(t=20)':>17}{'steps':>9}")
    for name, a, b, c, steps in rows:
        print(f"{name:<10}{a:>11.3f}s{b:>11.3f}s{c:>16.3f}s{steps:>9}")
    if len(rows) == 2:
        print(f"\nspeedups: drift {rows[0][1] / rows[1][1]:.1f}x, "
              f"split {rows[0][2] / rows[1][2]:.1f}x, "
              f"integrate {rows[0][3] / rows[1][3]:.1f}x")
        diff = float(np.linalg.norm(results['python'] - results['cython']))
        print(f"end-state agreement: |dq| = {diff:.3e}")
    else:
        print("\ncompiled backend unavailable; built only the fallback timings")


if __name__ == "__main__":
    main()
