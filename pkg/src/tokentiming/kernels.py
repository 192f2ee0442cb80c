"""Hot inner loops, each in a numba and a pure-numpy flavour.

The numba versions are used when numba imports cleanly and the environment
variable ``TOKENTIMING_PURE_NUMPY`` is unset (or ``0``).  Both flavours are
importable under explicit names (``nb_*`` / ``np_*``) so tests and the
benchmark can compare them directly.
"""
from __future__ import annotations

import itertools
import os
from functools import lru_cache

import numpy as np
from scipy.special import logsumexp

_FLAG = os.environ.get("TOKENTIMING_PURE_NUMPY", "0").strip().lower()

try:
    import numba

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and _FLAG in ("", "0", "false", "no")


def _njit(fn):
    if not HAVE_NUMBA:
        return fn
    return numba.njit(cache=True, nogil=True)(fn)


@lru_cache(maxsize=None)
def permutations_array(M: int) -> np.ndarray:
    """All permutations of ``range(M)`` as an ``(M!, M)`` int array."""
    return np.array(list(itertools.permutations(range(M))), dtype=np.int64).reshape(-1, M)


# --------------------------------------------------------------------------
# Poisson-binomial pmf
# --------------------------------------------------------------------------

@_njit
def nb_poisson_binomial(p):
    n = p.shape[0]
    pmf = np.zeros(n + 1)
    pmf[0] = 1.0
    for i in range(n):
        q = p[i]
        for k in range(i + 1, 0, -1):
            pmf[k] = pmf[k] * (1.0 - q) + pmf[k - 1] * q
        pmf[0] = pmf[0] * (1.0 - q)
    return pmf


def np_poisson_binomial(p):
    p = np.asarray(p, dtype=float)
    pmf = np.zeros(p.size + 1)
    pmf[0] = 1.0
    for i, q in enumerate(p):
        head = pmf[: i + 2].copy()
        pmf[1 : i + 2] = head[1:] * (1.0 - q) + head[:-1] * q
        pmf[0] = head[0] * (1.0 - q)
    return pmf


# --------------------------------------------------------------------------
# Theta table: row m holds Theta_{m, l} for l = 0..m
# --------------------------------------------------------------------------

@_njit
def nb_theta_table(gbar):
    # gbar[m, j] = CCDF(t_m - t_j), j < m; columns consumed nearest-first
    M = gbar.shape[0]
    out = np.zeros((M, M))
    out[0, 0] = 1.0
    work = np.zeros(M)
    for m in range(1, M):
        work[:] = 0.0
        work[0] = 1.0
        for step in range(m):
            q = gbar[m, m - 1 - step]
            if q < 0.0:
                q = 0.0
            elif q > 1.0:
                q = 1.0
            for k in range(step + 1, 0, -1):
                work[k] = work[k] * (1.0 - q) + work[k - 1] * q
            work[0] = work[0] * (1.0 - q)
        for k in range(m + 1):
            out[m, k] = work[k]
    return out


def np_theta_table(gbar):
    gbar = np.clip(np.asarray(gbar, dtype=float), 0.0, 1.0)
    M = gbar.shape[0]
    out = np.zeros((M, M))
    out[0, 0] = 1.0
    for m in range(1, M):
        out[m, : m + 1] = np_poisson_binomial(gbar[m, :m][::-1])
    return out


# --------------------------------------------------------------------------
# log of the number of delay-feasible matchings (staircase permanent)
# --------------------------------------------------------------------------

@_njit
def nb_log_feasible_counts(t, s):
    n, M = t.shape
    out = np.zeros(n)
    for r in range(n):
        acc = 0.0
        c = 0
        for i in range(M):
            while c < M and t[r, c] <= s[r, i]:
                c += 1
            free = c - i
            if free <= 0:
                acc = -np.inf
                break
            acc += np.log(free)
        out[r] = acc
    return out


def np_log_feasible_counts(t, s):
    t = np.asarray(t, dtype=float)
    s = np.asarray(s, dtype=float)
    M = t.shape[1]
    c = (t[:, None, :] <= s[:, :, None]).sum(axis=2)
    free = c - np.arange(M)[None, :]
    with np.errstate(divide="ignore"):
        logs = np.where(free > 0, np.log(np.maximum(free, 1)), -np.inf)
    return logs.sum(axis=1)


# --------------------------------------------------------------------------
# Shannon entropy of a permutation posterior given log-likelihood matrices
# --------------------------------------------------------------------------

@_njit
def nb_permutation_entropies(loglik, perms):
    # loglik[r, i, k] = log g(s_i - t_k); posterior over perms ∝ exp(sum_i loglik[r, i, perm[i]])
    n, M, _ = loglik.shape
    P = perms.shape[0]
    out = np.zeros(n)
    vals = np.zeros(P)
    for r in range(n):
        top = -np.inf
        for p in range(P):
            acc = 0.0
            for i in range(M):
                acc += loglik[r, i, perms[p, i]]
            vals[p] = acc
            if acc > top:
                top = acc
        if top == -np.inf:
            out[r] = np.nan
            continue
        z = 0.0
        zl = 0.0
        for p in range(P):
            if vals[p] > -np.inf:
                w = np.exp(vals[p] - top)
                z += w
                zl += w * (vals[p] - top)
        out[r] = np.log(z) - zl / z
    return out


def np_permutation_entropies(loglik, perms, chunk: int = 1 << 22):
    loglik = np.asarray(loglik, dtype=float)
    n, M, _ = loglik.shape
    P = perms.shape[0]
    rows = max(1, chunk // max(P * M, 1))
    out = np.empty(n)
    cols = np.arange(M)[None, :]
    for lo in range(0, n, rows):
        block = loglik[lo : lo + rows]
        vals = block[:, cols, perms].sum(axis=2)  # (b, P)
        with np.errstate(invalid="ignore"):
            lz = logsumexp(vals, axis=1)
            w = np.exp(vals - lz[:, None])
            terms = np.where(w > 0, w * (vals - lz[:, None]), 0.0)
        ent = -terms.sum(axis=1)
        ent[~np.isfinite(lz)] = np.nan
        out[lo : lo + rows] = ent
    return out


# --------------------------------------------------------------------------
# Sum over ordered pairs i != j of exp(-mu |x_i - x_j|)
# --------------------------------------------------------------------------

@_njit
def nb_pair_kernel_sums(x, mu):
    n, M = x.shape
    out = np.zeros(n)
    for r in range(n):
        acc = 0.0
        for i in range(M):
            for j in range(i + 1, M):
                acc += np.exp(-mu * abs(x[r, i] - x[r, j]))
        out[r] = 2.0 * acc
    return out


def np_pair_kernel_sums(x, mu):
    x = np.asarray(x, dtype=float)
    M = x.shape[1]
    iu, ju = np.triu_indices(M, k=1)
    return 2.0 * np.exp(-mu * np.abs(x[:, iu] - x[:, ju])).sum(axis=1)


if USE_NUMBA:
    poisson_binomial = nb_poisson_binomial
    theta_table = nb_theta_table
    log_feasible_counts = nb_log_feasible_counts
    permutation_entropies = nb_permutation_entropies
    pair_kernel_sums = nb_pair_kernel_sums
else:
    poisson_binomial = np_poisson_binomial
    theta_table = np_theta_table
    log_feasible_counts = np_log_feasible_counts
    permutation_entropies = np_permutation_entropies
    pair_kernel_sums = np_pair_kernel_sums

BACKEND = "numba" if USE_NUMBA else "numpy"
