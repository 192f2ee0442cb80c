"""Ordering entropy for a fixed launch vector.

``theta_pmf`` gives the law of the number of earlier tokens still in
transit when launch ``m+1`` fires; ``h_up_exact`` assembles the upper bound
on the ordering entropy from those laws; ``posterior_ordering_entropy`` is
the brute-force oracle that enumerates arrival-to-launch matchings.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .dist import ExponentialPassage, FirstPassageModel

MAX_ENUM_M = 9
MAX_BRUTE_M = 20


@dataclass(frozen=True)
class LaunchVector:
    times: tuple[float, ...]
    deadline: float | None = None

    def __post_init__(self):
        times = tuple(float(x) for x in self.times)
        object.__setattr__(self, "times", times)
        if any(b < a for a, b in zip(times[:-1], times[1:])):
            raise ValueError("launch times must be sorted ascending")
        if times and times[0] < 0:
            raise ValueError("launch times must be nonnegative")
        if self.deadline is not None and times and times[-1] > self.deadline:
            raise ValueError("launch after the deadline")

    @classmethod
    def from_unsorted(cls, times, deadline=None) -> "LaunchVector":
        return cls(tuple(sorted(times)), deadline)

    @property
    def M(self) -> int:
        return len(self.times)

    def as_array(self) -> np.ndarray:
        return np.asarray(self.times, dtype=float)


@dataclass(frozen=True)
class OrderingPMF:
    probs: np.ndarray = field(repr=False)

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if np.any(p < -1e-15) or abs(p.sum() - 1.0) > 1e-12:
            raise ValueError("not a probability vector")
        object.__setattr__(self, "probs", p)

    @property
    def mean(self) -> float:
        return float(np.dot(np.arange(self.probs.size), self.probs))

    def expect(self, f) -> float:
        ell = np.arange(self.probs.size)
        return float(np.dot(self.probs, f(ell)))


@dataclass(frozen=True)
class ArrivalRealization:
    launches: LaunchVector
    raw_arrivals: np.ndarray = field(repr=False)
    sorted_arrivals: np.ndarray = field(repr=False)
    true_permutation: np.ndarray = field(repr=False)

    @classmethod
    def from_arrivals(cls, launches: LaunchVector, raw_arrivals) -> "ArrivalRealization":
        raw = np.asarray(raw_arrivals, dtype=float)
        order = np.argsort(raw, kind="stable")  # sorting ties broken by launch index
        return cls(launches, raw, raw[order], order)


def _ccdf_matrix(t: np.ndarray, passage: FirstPassageModel) -> np.ndarray:
    gaps = t[:, None] - t[None, :]
    out = np.asarray(passage.ccdf(np.maximum(gaps, 0.0)), dtype=float)
    out = np.where(gaps >= 0, out, 0.0)
    np.fill_diagonal(out, 0.0)
    return np.ascontiguousarray(np.clip(np.tril(out, -1), 0.0, 1.0))


def theta_table(t: LaunchVector, passage: FirstPassageModel) -> np.ndarray:
    """``table[m, l] = Theta_{m,l}`` for ``0 <= l <= m < M`` (row 0 is the trivial law)."""
    if t.M == 0:
        return np.zeros((0, 0))
    return kernels.theta_table(_ccdf_matrix(t.as_array(), passage))


def theta_pmf(t: LaunchVector, m: int, passage: FirstPassageModel) -> np.ndarray:
    """Poisson-binomial law of the count of the first ``m`` tokens still in transit at ``t_{m+1}``."""
    if not 1 <= m <= t.M - 1:
        raise IndexError(f"m must lie in 1..{t.M - 1}, got {m}")
    x = t.as_array()
    p = np.clip(np.asarray(passage.ccdf(x[m] - x[:m][::-1]), dtype=float), 0.0, 1.0)
    return kernels.poisson_binomial(np.ascontiguousarray(p))


def brute_force_theta(t: LaunchVector, m: int, ell: int, passage: FirstPassageModel) -> float:
    """``Theta_{m,l}`` by summing over every binary ``m``-vector with ``l`` ones."""
    if m > MAX_BRUTE_M:
        raise ValueError(f"m={m} too large for 2^m enumeration")
    if not 1 <= m <= t.M - 1:
        raise IndexError(f"m must lie in 1..{t.M - 1}, got {m}")
    if ell < 0 or ell > m:
        return 0.0
    x = t.as_array()
    gbar = [float(passage.ccdf(x[m] - x[j])) for j in range(m)]
    total = []
    for bits in itertools.product((0, 1), repeat=m):
        if sum(bits) != ell:
            continue
        prod = 1.0
        for b, q in zip(bits, gbar):
            prod *= q if b else (1.0 - q)
        total.append(prod)
    return math.fsum(total)


def _log_factorial_weights(M: int) -> np.ndarray:
    return np.log1p(np.arange(M, dtype=float))


def h_up_exact(t: LaunchVector, passage: FirstPassageModel) -> float:
    """Upper bound on the ordering entropy given launches ``t`` (nats)."""
    if t.M <= 1:
        return 0.0
    table = theta_table(t, passage)
    return float(np.dot(_log_factorial_weights(t.M), table.sum(axis=0)))


def ell_pmf(t: LaunchVector, passage: FirstPassageModel) -> OrderingPMF:
    """Confusion-count law pooled over the ``M`` launch slots (slot 0 always has ``l = 0``)."""
    if t.M < 2:
        raise ValueError("need at least two launches")
    table = theta_table(t, passage)
    return OrderingPMF(table.sum(axis=0) / t.M)


def mean_confusion(t: LaunchVector, passage: FirstPassageModel) -> float:
    """``(1/M) sum_m sum_{j<=m} CCDF(t_{m+1} - t_j)``."""
    return float(_ccdf_matrix(t.as_array(), passage).sum() / t.M)


def feasible_count(s_sorted, t: LaunchVector) -> int:
    """Number of matchings of sorted arrivals to launches with all delays ``>= 0``."""
    s = np.asarray(s_sorted, dtype=float)
    x = t.as_array()
    if s.size != x.size:
        raise ValueError("arrivals and launches differ in length")
    count = 1
    for i, si in enumerate(s):
        c = int(np.searchsorted(x, si, side="right"))
        free = c - i
        if free <= 0:
            return 0
        count *= free
    return count


def _loglik_matrix(s: np.ndarray, t: np.ndarray, passage: FirstPassageModel) -> np.ndarray:
    return np.asarray(passage.logpdf(s[:, None] - t[None, :]), dtype=float)


def posterior_ordering_entropy(real: ArrivalRealization, passage: FirstPassageModel) -> float:
    """Entropy of ``P(matching | sorted arrivals, launches)`` (nats).

    With exponential passage the likelihood of every feasible matching is
    the same, so the posterior is uniform and the entropy is the log of the
    feasible count.  Otherwise all ``M!`` matchings are enumerated.
    """
    t = real.launches
    s = np.asarray(real.sorted_arrivals, dtype=float)
    if t.M <= 1:
        if t.M == 1 and s[0] < t.times[0]:
            raise ValueError("arrival precedes its launch")
        return 0.0
    if isinstance(passage, ExponentialPassage):
        n = feasible_count(s, t)
        if n == 0:
            raise ValueError("no feasible matching for this realization")
        return math.log(n)
    if t.M > MAX_ENUM_M:
        raise ValueError(f"general enumeration is capped at M={MAX_ENUM_M}")
    L = _loglik_matrix(s, t.as_array(), passage)[None, :, :]
    h = float(kernels.permutation_entropies(np.ascontiguousarray(L), kernels.permutations_array(t.M))[0])
    if math.isnan(h):
        raise ValueError("no feasible matching for this realization")
    return max(h, 0.0)
