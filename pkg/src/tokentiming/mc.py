"""Seeded Monte-Carlo estimators.

Replications are split into fixed-size blocks, and block ``b`` always draws
from the stream ``make_stream(seed, b)``.  Results therefore do not depend
on the worker count: workers only change which thread runs which block.
"""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import kernels
from .dist import ExponentialPassage, FirstPassageModel, make_stream
from .iidorder import IIDInput
from .ordent import ArrivalRealization, LaunchVector, MAX_ENUM_M, h_up_exact, theta_pmf, theta_table

BLOCK = 2048
MIN_REPLICATIONS = 100


class SimulationError(RuntimeError):
    """A realization the model cannot produce (e.g. no feasible matching)."""


@dataclass(frozen=True)
class Estimate:
    mean: float
    std_error: float
    replications: int

    @classmethod
    def from_samples(cls, x) -> "Estimate":
        x = np.asarray(x, dtype=float)
        n = x.size
        if n == 0:
            raise ValueError("no samples")
        mean = float(np.mean(x))
        se = float(np.std(x, ddof=1) / math.sqrt(n)) if n > 1 else 0.0
        return cls(mean, se, n)

    def within(self, value: float, k: float = 3.0) -> bool:
        return abs(self.mean - value) <= k * self.std_error

    def __str__(self):
        return f"{self.mean:.6g} ± {self.std_error:.2g} (n={self.replications})"


@dataclass(frozen=True)
class SimConfig:
    M: int
    passage: FirstPassageModel
    input: IIDInput | LaunchVector
    replications: int = 10_000
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("M must be positive")
        if self.replications < MIN_REPLICATIONS:
            raise ValueError(f"need at least {MIN_REPLICATIONS} replications")
        if self.seed < 0 or self.seed >= 2**64:
            raise ValueError("seed must be a 64-bit unsigned value")
        if self.workers < 1:
            raise ValueError("workers must be positive")
        if isinstance(self.input, LaunchVector) and self.input.M != self.M:
            raise ValueError("fixed launch vector length differs from M")


def _draw_launches(cfg: SimConfig, stream, n: int) -> np.ndarray:
    if isinstance(cfg.input, LaunchVector):
        return np.broadcast_to(cfg.input.as_array(), (n, cfg.M)).copy()
    t = cfg.input.marginal.sample(stream, n * cfg.M).reshape(n, cfg.M)
    return np.sort(t, axis=1)


def _draw(cfg: SimConfig, stream, n: int):
    """Sorted launches ``(n, M)`` and raw arrivals in launch order ``(n, M)``."""
    t = _draw_launches(cfg, stream, n)
    d = np.asarray(cfg.passage.sample(stream, (n, cfg.M)), dtype=float)
    return t, t + d


def simulate_epoch(cfg: SimConfig, stream: np.random.Generator) -> ArrivalRealization:
    t, s = _draw(cfg, stream, 1)
    return ArrivalRealization.from_arrivals(LaunchVector(tuple(t[0]), None), s[0])


def _blocks(n: int):
    return [(b, min(BLOCK, n - b * BLOCK)) for b in range((n + BLOCK - 1) // BLOCK)]


def _run(cfg: SimConfig, per_block: Callable[[np.random.Generator, int], np.ndarray]) -> np.ndarray:
    """Concatenate per-replication values from every block, in block order."""
    jobs = _blocks(cfg.replications)

    def work(job):
        b, n = job
        return np.asarray(per_block(make_stream(cfg.seed, b), n), dtype=float)

    if cfg.workers == 1 or len(jobs) == 1:
        parts = [work(j) for j in jobs]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            parts = list(pool.map(work, jobs))
    return np.concatenate(parts)


# --------------------------------------------------------------------------
# estimators
# --------------------------------------------------------------------------

def ordering_entropy_samples(cfg: SimConfig) -> np.ndarray:
    """Per-replication posterior ordering entropies (nats)."""
    if cfg.M == 1:
        return np.zeros(cfg.replications)
    exponential = isinstance(cfg.passage, ExponentialPassage)
    if not exponential and cfg.M > MAX_ENUM_M:
        raise ValueError(f"non-exponential passage is limited to M <= {MAX_ENUM_M}")
    perms = None if exponential else kernels.permutations_array(cfg.M)

    def block(stream, n):
        t, s = _draw(cfg, stream, n)
        s = np.sort(s, axis=1)
        if exponential:
            h = kernels.log_feasible_counts(np.ascontiguousarray(t), np.ascontiguousarray(s))
        else:
            ll = np.asarray(cfg.passage.logpdf(s[:, :, None] - t[:, None, :]), dtype=float)
            h = kernels.permutation_entropies(np.ascontiguousarray(ll), perms)
        if not np.all(np.isfinite(h)):
            raise SimulationError("realization with no feasible matching")
        return np.maximum(h, 0.0)

    return _run(cfg, block)


def estimate_ordering_entropy(cfg: SimConfig) -> Estimate:
    return Estimate.from_samples(ordering_entropy_samples(cfg))


def estimate_h_up_exact(cfg: SimConfig) -> Estimate:
    """``E_t[h_up_exact(t)]`` over sampled launch vectors."""
    def block(stream, n):
        t = _draw_launches(cfg, stream, n)
        return [h_up_exact(LaunchVector(tuple(row)), cfg.passage) for row in t]

    return Estimate.from_samples(_run(cfg, block))


def estimate_theta_bar(cfg: SimConfig, m: int, ell: int) -> Estimate:
    """Average of ``theta_pmf(t, m)[ell]`` over sampled launch vectors."""
    if not 1 <= m <= cfg.M - 1:
        raise IndexError(f"m must lie in 1..{cfg.M - 1}")

    def block(stream, n):
        t = _draw_launches(cfg, stream, n)
        if not 0 <= ell <= m:
            return np.zeros(n)
        return [theta_pmf(LaunchVector(tuple(row)), m, cfg.passage)[ell] for row in t]

    return Estimate.from_samples(_run(cfg, block))


def estimate_gamma_sum(cfg: SimConfig, ell: int) -> Estimate:
    """Average of ``sum_m Theta_{m,l}(t)`` over sampled launch vectors (unbiased for ``Gamma_{M,l}``)."""
    def block(stream, n):
        t = _draw_launches(cfg, stream, n)
        if not 0 <= ell < cfg.M:
            return np.zeros(n)
        return [theta_table(LaunchVector(tuple(row)), cfg.passage)[:, ell].sum() for row in t]

    return Estimate.from_samples(_run(cfg, block))


def _pair_sums(x: np.ndarray, passage: FirstPassageModel) -> np.ndarray:
    """``sum_{i != j} Q(x_i - x_j)`` per row, ``Q(d) = CCDF(|d|)``."""
    if isinstance(passage, ExponentialPassage):
        return kernels.pair_kernel_sums(np.ascontiguousarray(x), float(passage.mu))
    iu, ju = np.triu_indices(x.shape[1], k=1)
    return 2.0 * np.asarray(passage.ccdf(np.abs(x[:, iu] - x[:, ju])), dtype=float).sum(axis=1)


def _pair_values(cfg: SimConfig, target: str):
    if cfg.M < 2:
        raise ValueError("need M >= 2")
    if target not in ("T", "S"):
        raise ValueError("target must be 'T' or 'S'")

    def block(stream, n):
        t, s = _draw(cfg, stream, n)
        return _pair_sums(t if target == "T" else s, cfg.passage)

    return _run(cfg, block)


def estimate_gamma(cfg: SimConfig, target: str = "T") -> Estimate:
    """Mean of ``Q`` over ordered pairs of launches (``'T'``) or arrivals (``'S'``)."""
    x = _pair_values(cfg, target) / (cfg.M * (cfg.M - 1))
    return Estimate.from_samples(x)


def estimate_gamma_variance(cfg: SimConfig, target: str = "T") -> Estimate:
    """Sample variance of ``sum_{i != j} Q(X_i - X_j)`` across replications.

    With the default ``target='T'`` the vector is drawn from the launch law;
    for a uniform input this is the untilted (``beta = 0``) law, whose
    variance is ``M(M-1) gamma_S'(0)``.  The standard error uses the
    fourth-central-moment formula for a sample variance.
    """
    x = _pair_values(cfg, target)
    n = x.size
    c = x - x.mean()
    var = float(np.dot(c, c) / (n - 1))
    m4 = float(np.mean(c**4))
    m2 = float(np.mean(c**2))
    se = math.sqrt(max(m4 - (n - 3) / (n - 1) * m2 * m2, 0.0) / n)
    return Estimate(var, se, n)
