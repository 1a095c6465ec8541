"""Throughput of the tethered-sweep kernel: compiled extension vs NumPy fallback.

    python3 benchmarks/bench_kernels.py [--n-visible 100] [--n-hidden 20] [--chains 250] [--sweeps 20]

Both backends receive identical inputs and random numbers; the script also
checks that they return identical spin states (floating-point caches may
differ in the last bits because of summation order).
"""
import argparse
import time

import numpy as np

from tetherbm.kernels import compiled_tmc_sweeps, python_tmc_sweeps
from tetherbm.rbm import RbmParams, hidden_conditional


def make_inputs(nv, nh, n_chains, n_sweeps, seed=0):
    rng = np.random.default_rng(seed)
    p = RbmParams.random(nv, nh, rng, scale=0.1)
    A = np.ascontiguousarray(np.full((1, nv), 1.0 / nv))
    offset = np.zeros(1)
    V = (rng.random((n_chains, nv)) < 0.5).astype(np.float64)
    H = np.zeros((n_chains, nh))
    PH = np.ascontiguousarray(hidden_conditional(V, p))
    S = np.ascontiguousarray(V @ A.T)
    targets = np.ascontiguousarray(np.linspace(0.0, 1.0, n_chains)[:, None])
    U = rng.random((n_chains, n_sweeps, nh + nv))
    trace = np.zeros((n_chains, n_sweeps, 1))
    return [V, H, PH, S, targets, p.w, p.b, p.c, A, offset, 1e4, U, trace]


def run(fn, args, repeats):
    best, out = np.inf, None
    for _ in range(repeats):
        a = [x.copy() if isinstance(x, np.ndarray) else x for x in args]
        t0 = time.perf_counter()
        fn(*a)
        best = min(best, time.perf_counter() - t0)
        out = a
    return best, out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n-visible", type=int, default=100)
    ap.add_argument("--n-hidden", type=int, default=20)
    ap.add_argument("--chains", type=int, default=250)
    ap.add_argument("--sweeps", type=int, default=20)
    ap.add_argument("--repeats", type=int, default=3)
    a = ap.parse_args()
    args = make_inputs(a.n_visible, a.n_hidden, a.chains, a.sweeps)
    work = a.chains * a.sweeps
    t_py, out_py = run(python_tmc_sweeps, args, a.repeats)
    print(f"python  {t_py:9.4f} s  {work / t_py:12.0f} chain-sweeps/s")
    compiled = compiled_tmc_sweeps()
    if compiled is None:
        print("cython  extension not built")
        return
    t_c, out_c = run(compiled, args, a.repeats)
    print(f"cython  {t_c:9.4f} s  {work / t_c:12.0f} chain-sweeps/s  speedup {t_py / t_c:.1f}x")
    same = np.array_equal(out_py[0], out_c[0]) and np.array_equal(out_py[1], out_c[1])
    drift = max(np.abs(x - y).max() for x, y in zip(out_py[2:4], out_c[2:4]))
    print(f"identical spin states: {same}; max float difference in p(h|v), projections: {drift:.1e}")


if __name__ == "__main__":
    main()
