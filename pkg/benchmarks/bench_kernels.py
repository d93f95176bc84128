"""Compare the compiled and pure-Python E-step kernels.

Run ``python3 benchmarks/bench_kernels.py [--n 2000] [--p 15 30 60]``. Reports
seconds per E-step for each kernel, the speed-up, and the largest difference
between the two kernels' second-moment sums.
"""
import argparse
import time

import numpy as np

from copula_impute import synthetic
from copula_impute._backend import KERNELS
from copula_impute.em import EmConfig, LatentState, _Problem, estep, fit


def time_estep(problem, sigma, state, kernel, repeats):
    best = np.inf
    g = None
    for _ in range(repeats):
        st = LatentState(state.mean.copy(), state.var.copy())
        t0 = time.perf_counter()
        g, _ = estep(problem, sigma, st, EmConfig(kernel=kernel))
        best = min(best, time.perf_counter() - t0)
    return best, g


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=2000)
    ap.add_argument("--p", type=int, nargs="+", default=[15, 30, 60])
    ap.add_argument("--missing", type=float, default=0.25)
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    names = sorted(KERNELS)
    print(f"kernels available: {names}")
    header = f"{'p':>4} " + " ".join(f"{k + ' s/iter':>16}" for k in names) + f" {'speed-up':>9} {'max |dG|':>10}"
    print(header)
    for p in args.p:
        sigma_true = synthetic.random_correlation(p, 0)
        spec = synthetic.SyntheticSpec(args.n, synthetic.default_families(p), args.missing, 0)
        data = synthetic.mask_mcar(synthetic.generate(sigma_true, spec)[0], args.missing, 1)
        model = fit(data, EmConfig(max_iter=3))
        problem = _Problem.build(data, model.marginals)
        state = problem.initial_state()
        times, gs = {}, {}
        for k in names:
            times[k], gs[k] = time_estep(problem, model.sigma, state, k, args.repeats)
        diff = max(np.abs(gs[a] - gs[b]).max() for a in names for b in names)
        speed = times["python"] / times[names[0]] if len(names) > 1 else 1.0
        print(f"{p:>4} " + " ".join(f"{times[k]:>16.4f}" for k in names) + f" {speed:>9.1f} {diff:>10.2e}")


if __name__ == "__main__":
    main()
