"""Compare the compiled and numpy successive-cancellation kernels.

Usage: python3 benchmarks/bench_sc.py [--n 10] [--samples 2000] [--repeat 3]
"""
import argparse
import time

import numpy as np

from coordsim.sc import SAMPLE, ScPolicy, SymbolJoint, available_backends, entropy_profile, sc_sweep


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=10)
    p.add_argument("--samples", type=int, default=2000)
    p.add_argument("--batch", type=int, default=200)
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    N = 1 << args.n
    sj = SymbolJoint([[0.45, 0.05], [0.05, 0.45]])
    rng = np.random.default_rng(0)
    side = rng.integers(0, 2, (args.batch, N))
    uni = rng.random((args.batch, N))
    pol = ScPolicy.constant(N, SAMPLE)
    results = {}
    print(f"n={args.n} (N={N}); best of {args.repeat}")
    print(f"{'backend':>8}  {'entropy_profile M=' + str(args.samples):>24}  {'sample sweep B=' + str(args.batch):>20}")
    for be in available_backends():
        t_prof, prof = best_of(lambda: entropy_profile(sj, args.n, args.samples, seed=1, backend=be), args.repeat)
        t_sw, sw = best_of(lambda: sc_sweep((sj, side), pol, uniforms=uni, backend=be), args.repeat)
        results[be] = (prof, sw[0])
        print(f"{be:>8}  {t_prof:>22.3f}s  {t_sw:>18.3f}s")
    if len(results) == 2:
        (pa, ua), (pb, ub) = results.values()
        same = np.allclose(pa[0], pb[0], atol=1e-12) and np.array_equal(ua, ub)
        print(f"outputs agree across backends: {same}")


if __name__ == "__main__":
    main()
