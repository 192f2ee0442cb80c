"""Capacity-bound chain for exponential passage.

Kernel functionals ``gamma_T`` / ``gamma_S`` of ``Q(x) = CCDF(|x|)``, the
Jensen-type ordering-entropy bound, the closed forms at the untilted point
``beta = 0``, and the per-token capacity bound that follows from them.

Note on symbols: the exponential CCDF in the ``gamma_S >= gamma_T / 2``
argument uses the passage rate ``mu`` throughout; some write-ups of the
proof use ``lambda`` there, which would collide with the emission intensity.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from . import kernels
from .dist import make_stream, mixed_expectation
from .iidorder import IIDInput

Z_SERIES_CUTOFF = 1e-4
_W_SERIES_CUTOFF = 0.1


class ExperimentalWarning(UserWarning):
    """Result comes from a Monte-Carlo demonstration solver, not a certified method."""


@dataclass(frozen=True)
class LoadPoint:
    lam: float
    mu: float
    rho: float | None = None
    tau: float | None = None
    M: int | None = None

    def __post_init__(self):
        if self.lam < 0 or self.mu <= 0:
            raise ValueError("need lambda >= 0 and mu > 0")
        rho = self.lam / self.mu
        if self.rho is None:
            object.__setattr__(self, "rho", rho)
        elif abs(self.rho - rho) > 1e-12 * max(1.0, abs(rho)):
            raise ValueError("rho must equal lambda / mu")
        if self.tau is not None and self.M is not None and not math.isclose(self.M, self.lam * self.tau, rel_tol=1e-12):
            raise ValueError("M must equal lambda * tau")


@dataclass(frozen=True)
class GammaPair:
    gamma_T: float
    gamma_S: float

    def __post_init__(self):
        for v in (self.gamma_T, self.gamma_S):
            if not 0.0 <= v <= 1.0:
                raise ValueError("kernel expectations lie in [0, 1]")

    def satisfies_lower_bound(self, slack: float = 0.0) -> bool:
        return self.gamma_S >= gamma_S_lower(self.gamma_T) - slack


@dataclass(frozen=True)
class BetaPoint:
    beta: float
    gamma_value: float


def gamma_T_iid(input: IIDInput, mu: float) -> float:
    """``E[exp(-mu |T1 - T2|)]`` for independent ``T1, T2`` drawn from ``input``."""
    dens = input.marginal

    def inner(t):
        return mixed_expectation(dens, lambda x: math.exp(-mu * abs(t - x)), points=(t,), epsabs=1e-13, epsrel=1e-12)

    return float(mixed_expectation(dens, inner, epsabs=1e-12, epsrel=1e-11))


def h_up_gamma_bound(M: int, gamma_T: float) -> float:
    """``M log(1 + (M-1) gamma_T / 2)``."""
    if M < 1 or not 0.0 <= gamma_T <= 1.0:
        raise ValueError("need M >= 1 and gamma_T in [0, 1]")
    return M * math.log1p(0.5 * (M - 1) * gamma_T)


def gamma_S_lower(gamma_T: float) -> float:
    """Certified lower bound ``gamma_T / 2`` on ``gamma_S`` (exponential passage)."""
    return 0.5 * gamma_T


def Z(x: float) -> float:
    """``(2/x^2)(x + exp(-x) - 1)``, i.e. ``gamma_S`` at ``beta = 0``."""
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x < Z_SERIES_CUTOFF:
        return 1.0 - x / 3.0 + x * x / 12.0
    return 2.0 * (x + math.expm1(-x)) / (x * x)


def _three_point(x: float) -> float:
    # 6/x^3 (x - 2 + e^{-x}(2 + x)) = 1 - x/2 + 3x^2/20 - ...
    if x < _W_SERIES_CUTOFF:
        return 6.0 * math.fsum((-1) ** k * (2 - k) / math.factorial(k) * x ** (k - 3) for k in range(3, 20))
    return 6.0 * (x - 2.0 + math.exp(-x) * (2.0 + x)) / x**3


def gamma_S0_prime(mu: float, tau: float, M: int) -> float:
    """Reference closed form for ``gamma_S'(0)`` (uniform ``S`` on ``[0, tau]^M``).

    ``(M-2)(M-3)Z^2 + 2Z(2x) + 24(M-2)/x^3 (x - 2 + e^{-x}(2 + x)) - M(M-1)Z^2``
    with ``x = mu tau``; the two ``Z^2`` terms are combined into ``(6 - 4M)Z^2``
    because they nearly cancel for large ``M``.

    The three-point term here does not equal ``E[Q12 Q13]`` for uniform
    ``S``; see :func:`gamma_S0_prime_exact` for the variance it is meant
    to describe.
    """
    if M < 2:
        raise ValueError("need M >= 2")
    x = mu * tau
    g = Z(x)
    return (6.0 - 4.0 * M) * g * g + 2.0 * Z(2.0 * x) + 4.0 * (M - 2) * _three_point(x)


def three_point_kernel(x: float) -> float:
    """``E[Q(S1-S2) Q(S1-S3)]`` for i.i.d. uniform ``S`` on ``[0, x/mu]``.

    ``(4x - 7 + 8e^{-x} + 2x e^{-x} - e^{-2x}) / x^3``, series below 0.1.
    """
    if x < 0:
        raise ValueError("x must be nonnegative")
    if x < _W_SERIES_CUTOFF:
        return math.fsum((-1) ** k * (8 - 2 * k - 2**k) / math.factorial(k) * x ** (k - 3) for k in range(3, 22))
    return (4.0 * x - 7.0 + math.exp(-x) * (8.0 + 2.0 * x) - math.exp(-2.0 * x)) / x**3


def gamma_S0_prime_exact(mu: float, tau: float, M: int) -> float:
    """``Var(sum_{i!=j} Q(S_i - S_j)) / (M(M-1))`` for i.i.d. uniform ``S`` on ``[0, tau]``.

    Counting covariances of ordered pairs gives
    ``2(Z(2x) - Z^2) + 4(M-2)(E[Q12 Q13] - Z^2)``; ``(M-1)`` times this tends
    to ``2 rho`` with ``tau = M / lambda``.
    """
    if M < 2:
        raise ValueError("need M >= 2")
    x = mu * tau
    g = Z(x)
    return (6.0 - 4.0 * M) * g * g + 2.0 * Z(2.0 * x) + 4.0 * (M - 2) * three_point_kernel(x)


def beta_tilde(rho: float) -> float:
    if not rho > 0:
        raise ValueError("rho must be positive")
    return 1.0 / (4.0 * rho + 1.0)


def cq_upper(rho: float) -> float:
    """Asymptotic per-token capacity bound ``log(1/rho + 4)`` (nats)."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    return math.log(1.0 / rho + 4.0)


def ct_upper(point: LoadPoint) -> float:
    """Per-unit-time bound ``lambda * cq_upper(rho)``."""
    if point.lam == 0:
        return 0.0
    return point.lam * cq_upper(point.rho)


def single_token_rate(rho: float, M: int) -> float:
    """``log(1 + M/(rho e)) - log(M!)/M``: deadline capacity per token minus ordering cost."""
    return math.log1p(M / (rho * math.e)) - math.lgamma(M + 1) / M


# --------------------------------------------------------------------------
# experimental: tilted family at small M
# --------------------------------------------------------------------------

def _tilted_moments(beta, mu, tau, M, samples, seed):
    s = make_stream(seed, M).uniform(0.0, tau, size=(samples, M))
    q = kernels.pair_kernel_sums(np.ascontiguousarray(s), float(mu))
    logw = beta * q
    w = np.exp(logw - logw.max())
    w /= w.sum()
    mean = float(np.dot(w, q))
    return mean, float(np.dot(w, (q - mean) ** 2))


def tilted_gamma_S(beta: float, mu: float, tau: float, M: int, *, samples: int = 200_000, seed: int = 0) -> float:
    """``gamma_S(beta)`` under ``f ∝ exp(beta sum_{i!=j} Q)`` on ``[0,tau]^M``.

    Self-normalised importance sampling from the uniform law; with a fixed
    seed the draws are common to every ``beta``, so the estimate is smooth
    and monotone in ``beta``.
    """
    return _tilted_moments(beta, mu, tau, M, samples, seed)[0] / (M * (M - 1))


def tilted_gamma_S_prime(beta: float, mu: float, tau: float, M: int, *, samples: int = 200_000, seed: int = 0) -> float:
    """``gamma_S'(beta)``: tilted variance of ``sum_{i!=j} Q`` over ``M(M-1)``."""
    return _tilted_moments(beta, mu, tau, M, samples, seed)[1] / (M * (M - 1))


def solve_beta_star(mu: float, tau: float, M: int, *, samples: int = 200_000, seed: int = 0, tol: float = 1e-6) -> BetaPoint:
    """Bisection for ``gamma_S(beta) = (1 - beta)/((M-1) beta)`` on ``(1/M, 1]``.

    Monte-Carlo based and limited to ``M <= 4``.
    """
    if not 2 <= M <= 4:
        raise ValueError("the demonstration solver is limited to 2 <= M <= 4")
    warnings.warn("solve_beta_star is a Monte-Carlo demonstration", ExperimentalWarning, stacklevel=2)

    def gap(b):
        return tilted_gamma_S(b, mu, tau, M, samples=samples, seed=seed) - (1.0 - b) / ((M - 1) * b)

    lo, hi = 1.0 / M, 1.0
    if gap(hi) < 0:
        return BetaPoint(hi, tilted_gamma_S(hi, mu, tau, M, samples=samples, seed=seed))
    # gap(1/M) = gamma_S - 1 <= 0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if gap(mid) < 0:
            lo = mid
        else:
            hi = mid
    b = 0.5 * (lo + hi)
    return BetaPoint(b, tilted_gamma_S(b, mu, tau, M, samples=samples, seed=seed))
