"""Time the numba kernels against their pure-numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat N]

The first numba call (JIT compilation) is excluded from the timings.
Each row reports the best-of-N wall time for both backends and the max
absolute difference between their outputs.
"""
from __future__ import annotations

import argparse
import timeit

import numpy as np

from tokentiming import kernels


def cases(rng):
    t = np.sort(rng.uniform(0, 3, (20_000, 8)), axis=1)
    s = np.sort(t + rng.exponential(1.0, t.shape), axis=1)
    tt = np.sort(rng.uniform(0, 3, 200))
    gbar = np.tril(np.exp(-(tt[:, None] - tt[None, :])), -1)
    perms = kernels.permutations_array(7)
    ll = rng.normal(size=(500, 7, 7))
    x = rng.uniform(0, 4, (20_000, 16))
    p = rng.uniform(0, 1, 2000)
    return [
        ("poisson_binomial n=2000", kernels.nb_poisson_binomial, kernels.np_poisson_binomial, (p,)),
        ("theta_table M=200", kernels.nb_theta_table, kernels.np_theta_table, (gbar,)),
        ("log_feasible_counts 20000x8", kernels.nb_log_feasible_counts, kernels.np_log_feasible_counts, (t, s)),
        ("permutation_entropies 500x7!", kernels.nb_permutation_entropies, kernels.np_permutation_entropies, (ll, perms)),
        ("pair_kernel_sums 20000x16", kernels.nb_pair_kernel_sums, kernels.np_pair_kernel_sums, (x, 1.0)),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    if not kernels.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    rng = np.random.default_rng(0)
    print(f"{'kernel':<32}{'numba [ms]':>12}{'numpy [ms]':>12}{'speedup':>9}{'max |diff|':>12}")
    for name, fnb, fnp, a in cases(rng):
        ra, rb = fnb(*a), fnp(*a)  # warm-up / compile
        diff = float(np.nanmax(np.abs(np.asarray(ra) - np.asarray(rb)))) if np.size(ra) else 0.0
        tn = min(timeit.repeat(lambda: fnb(*a), number=1, repeat=args.repeat)) * 1e3
        tp = min(timeit.repeat(lambda: fnp(*a), number=1, repeat=args.repeat)) * 1e3
        print(f"{name:<32}{tn:>12.2f}{tp:>12.2f}{tp / tn:>9.1f}{diff:>12.1e}")


if __name__ == "__main__":
    main()
