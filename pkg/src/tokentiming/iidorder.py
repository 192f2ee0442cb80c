"""Ordering-entropy bound for i.i.d. launches, its special cases and limits.

The generic route goes launch marginal -> ``phi`` -> moments ``E[phi^k]``
-> ``delta_gamma`` -> ``h_up_iid``.  The two capacity-achieving launch laws
(mean-constrained and deadline-constrained) also have binomial closed forms,
and their large-``M`` limits are Poisson expectations.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import gammaln

from .dist import (
    Atom,
    ExponentialPassage,
    FirstPassageModel,
    JumpConvention,
    MixedDensity1D,
    Piece,
    mixed_expectation,
    uniform_density,
)

E = math.e
CANCELLATION_RATIO = 1e6


class CancellationWarning(RuntimeWarning):
    """The alternating sum lost too many digits; the difference form was used."""


@dataclass(frozen=True)
class IIDInput:
    """i.i.d. launch law; ``moments`` optionally gives ``E[phi^k]`` in closed form.

    ``moments`` is only valid for exponential passage with rate ``rate``.
    """

    marginal: MixedDensity1D
    name: str = "custom"
    rate: float | None = None
    moments: Callable[[np.ndarray], np.ndarray] | None = None

    def cdf(self, t: float, side: str = "right") -> float:
        return self.marginal.cdf(t, side)

    def has_closed_form(self, passage: FirstPassageModel) -> bool:
        return (
            self.moments is not None
            and isinstance(passage, ExponentialPassage)
            and self.rate is not None
            and math.isclose(passage.mu, self.rate, rel_tol=1e-15)
        )


@dataclass(frozen=True)
class BinomialSpec:
    trials: int
    success: float

    def __post_init__(self):
        if self.trials < 0 or not 0.0 <= self.success <= 1.0:
            raise ValueError("invalid binomial parameters")

    def pmf(self) -> np.ndarray:
        n, p = self.trials, self.success
        k = np.arange(n + 1)
        if p == 0.0 or p == 1.0:
            out = np.zeros(n + 1)
            out[0 if p == 0.0 else n] = 1.0
            return out
        logp = gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1) + k * math.log(p) + (n - k) * math.log1p(-p)
        return np.exp(logp)

    def expect(self, f) -> float:
        k = np.arange(self.trials + 1)
        return float(np.dot(self.pmf(), f(k)))


@dataclass(frozen=True)
class MeanConstraintInput:
    """Launch law maximising output entropy under a mean-launch bound ``tau``."""

    mu: float
    tau: float

    @property
    def a(self) -> float:
        return 1.0 / (self.mu * self.tau + 1.0)

    def marginal(self) -> MixedDensity1D:
        a = self.a
        if a == 1.0:
            return MixedDensity1D(atoms=(Atom(0.0, 1.0),))
        return MixedDensity1D(
            atoms=(Atom(0.0, a),),
            pieces=(Piece(0.0, math.inf, coef=self.mu * a * (1.0 - a), rate=self.mu * a),),
        )

    def to_iid(self) -> IIDInput:
        a = self.a
        return IIDInput(self.marginal(), "mean", self.mu, lambda k: a ** np.asarray(k, float) / (np.asarray(k, float) + 1.0))


def mean_constraint_input(mu: float, tau: float) -> IIDInput:
    return MeanConstraintInput(mu, tau).to_iid()


def deadline_input(mu: float, tau: float) -> IIDInput:
    """i.i.d. version of the capacity-achieving deadline launch law."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    den = E + mu * tau
    marg = MixedDensity1D(
        atoms=(Atom(0.0, 1.0 / den), Atom(tau, (E - 1.0) / den)),
        pieces=(Piece(0.0, tau, coef=mu / den),),
    )

    def moments(k):
        k = np.asarray(k, dtype=float)
        return den ** -(k + 1.0) * (mu * tau + np.exp(k + 1.0) / (k + 1.0))

    return IIDInput(marg, "deadline", mu, moments)


def uniform_input(tau: float) -> IIDInput:
    return IIDInput(uniform_density(0.0, tau), "uniform")


# --------------------------------------------------------------------------
# phi and its moments
# --------------------------------------------------------------------------

def phi(input: IIDInput, passage: FirstPassageModel, t: float, side: str = "right") -> float:
    """``int_0^t f_T(x) CCDF(t - x) dx`` with atoms; ``side`` picks the limit at an atom."""
    if t < 0:
        return 0.0
    dens = input.marginal
    acc = []
    for a in dens.atoms:
        if a.location < t or (side == "right" and a.location == t):
            acc.append(a.mass * float(passage.ccdf(t - a.location)))
    from scipy import integrate

    kinks = [t - b for b in passage.breakpoints]
    for p in dens.pieces:
        hi = min(p.stop, t)
        if hi <= p.start:
            continue
        edges = [p.start, *sorted(k for k in kinks if p.start < k < hi), hi]
        for lo, up in zip(edges[:-1], edges[1:]):
            v, _ = integrate.quad(
                lambda x: float(p.pdf(x) * passage.ccdf(t - x)), lo, up, epsabs=1e-14, epsrel=1e-13, limit=200
            )
            acc.append(v)
    return math.fsum(acc)


def phi_moments(input: IIDInput, passage: FirstPassageModel, ks, method: str = "auto") -> np.ndarray:
    """``E[phi^k(T)]`` for each ``k`` in ``ks``, atoms under the averaging jump rule."""
    ks = np.asarray(ks, dtype=float)
    if method not in ("auto", "analytic", "quadrature"):
        raise ValueError(f"unknown method {method!r}")
    if method != "quadrature" and input.has_closed_form(passage):
        return np.asarray(input.moments(ks), dtype=float)
    if method == "analytic":
        raise ValueError("no closed form for this input/passage pair")
    return _expect_poly_of_phi(input, passage, lambda x: x ** ks)


def _expect_poly_of_phi(input, passage, outer):
    return mixed_expectation(
        input.marginal,
        outer,
        JumpConvention.AVERAGE,
        inner=lambda t, side: phi(input, passage, t, side),
        points=passage.breakpoints,
        epsabs=1e-14,
        epsrel=1e-13,
    )


# --------------------------------------------------------------------------
# Gamma and Delta Gamma
# --------------------------------------------------------------------------

def _log_binom(n, k):
    return gammaln(n + 1) - gammaln(k + 1) - gammaln(n - k + 1)


def gamma_Ml(input: IIDInput, passage: FirstPassageModel, M: int, ell: int) -> float:
    """``Gamma_{M,l} = E[M C(M-1,l) phi^l (1-phi)^(M-1-l)]`` (zero for ``l >= M``)."""
    if ell >= M:
        return 0.0
    if ell < 1:
        raise ValueError("ell must be at least 1")
    c = M * math.comb(M - 1, ell)
    return float(_expect_poly_of_phi(input, passage, lambda x: c * x**ell * (1.0 - x) ** (M - 1 - ell)))


def _delta_gamma_terms(M: int, ell: int, mom: np.ndarray) -> np.ndarray:
    n = M - ell - 1
    r = np.arange(n + 1)
    coef = np.array([math.comb(n, int(j)) for j in r], dtype=float)
    return math.comb(M, ell + 1) * (-1.0) ** r * coef * (ell + r + 1) * mom[ell + r]


def delta_gamma(
    input: IIDInput, passage: FirstPassageModel, M: int, ell: int, method: str = "auto", moments=None
) -> float:
    """``Gamma_{M,l} - Gamma_{M,l+1}`` from the alternating moment sum.

    If the largest term exceeds the result by more than ``1e6`` the value is
    recomputed as an explicit difference of ``gamma_Ml`` and a
    :class:`CancellationWarning` is issued.
    """
    if not 1 <= ell <= M - 1:
        raise ValueError(f"ell must lie in 1..{M - 1}")
    mom = moments if moments is not None else phi_moments(input, passage, np.arange(M), method)
    terms = _delta_gamma_terms(M, ell, np.asarray(mom, dtype=float))
    value = math.fsum(terms)
    biggest = float(np.max(np.abs(terms)))
    if biggest > CANCELLATION_RATIO * abs(value):
        warnings.warn(
            f"alternating sum for M={M}, l={ell} cancels ({biggest:.3e} vs {value:.3e}); using Gamma difference",
            CancellationWarning,
            stacklevel=2,
        )
        value = gamma_Ml(input, passage, M, ell) - gamma_Ml(input, passage, M, ell + 1)
    return value


def h_up_iid(input: IIDInput, passage: FirstPassageModel, M: int, method: str = "auto") -> float:
    """``sum_l DeltaGamma_{M,l} log((l+1)!)`` for i.i.d. launches (nats)."""
    if M <= 1:
        return 0.0
    mom = phi_moments(input, passage, np.arange(M), method)
    total = [delta_gamma(input, passage, M, ell, method, moments=mom) * gammaln(ell + 2) for ell in range(1, M)]
    return math.fsum(total)


# --------------------------------------------------------------------------
# closed forms
# --------------------------------------------------------------------------

def _log_factorial(k):
    return gammaln(np.asarray(k, dtype=float) + 1.0)


def ordering_entropy_mean_constraint(mu: float, tau: float, M: int) -> float:
    """``(mu tau + 1) E[log K!]`` with ``K ~ Bin(M, 1/(1 + mu tau))``."""
    if M <= 1:
        return 0.0
    b = BinomialSpec(M, 1.0 / (1.0 + mu * tau))
    return (mu * tau + 1.0) * b.expect(_log_factorial)


def ordering_entropy_deadline(mu: float, tau: float, M: int) -> float:
    """Binomial closed form for the i.i.d. deadline-optimal launch law."""
    if tau <= 0:
        raise ValueError("tau must be positive")
    if M <= 1:
        return 0.0
    mt = mu * tau
    p1 = E / (E + mt)
    p2 = 1.0 / (E + mt)
    k1 = BinomialSpec(M, p1)
    k2 = BinomialSpec(M, p2)
    first = k1.expect(_log_factorial)
    second = mt / (1.0 - p2) * k2.expect(lambda k: k * _log_factorial(k))
    third = mt * M / ((1.0 - p2) * (mt + E)) * k2.expect(_log_factorial)
    return first + second - third


def delta_gamma_deadline(mu: float, tau: float, M: int, ell: int) -> float:
    """Closed-form ``DeltaGamma_{M,l}`` for the deadline-optimal launch law."""
    mt = mu * tau
    p1 = E / (E + mt)
    p2 = 1.0 / (E + mt)
    k = ell + 1
    b1 = math.exp(_log_binom(M, k) + k * math.log(p1) + (M - k) * math.log1p(-p1)) if p1 < 1 else float(k == M)
    b2 = math.exp(_log_binom(M, k) + k * math.log(p2) + (M - k) * math.log1p(-p2))
    return b1 + mt / (1.0 - p2) * (k - M / (mt + E)) * b2


def ordering_entropy_deadline_sum(mu: float, tau: float, M: int) -> float:
    """Same quantity as :func:`ordering_entropy_deadline`, summed term by term over ``l``."""
    if M <= 1:
        return 0.0
    return math.fsum(delta_gamma_deadline(mu, tau, M, ell) * float(gammaln(ell + 2)) for ell in range(1, M))


# --------------------------------------------------------------------------
# Poisson limits
# --------------------------------------------------------------------------

def _poisson_series(rho: float, weight, rel: float = 1e-15, kmax: int = 100_000) -> float:
    terms = []
    partial = 0.0
    for k in range(2, kmax):
        logp = -rho + k * math.log(rho) - math.lgamma(k + 1)
        term = math.exp(logp) * weight(k) * math.lgamma(k + 1)
        terms.append(term)
        partial += term
        if k > rho and abs(term) < rel * abs(partial):
            break
    return math.fsum(terms)


def asymptotic_mean(rho: float) -> float:
    """``lim H/M`` for the mean-constrained law: ``E[log K!]/rho``, ``K ~ Poisson(rho)``."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    return _poisson_series(rho, lambda k: 1.0 / rho)


def asymptotic_deadline(rho: float) -> float:
    """``lim H/M`` for the deadline law: ``E[(K/rho - 1) log K!]``, ``K ~ Poisson(rho)``."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    return _poisson_series(rho, lambda k: k / rho - 1.0)


def finite_m_per_token(case: str, rho: float, M: int, mu: float = 1.0) -> float:
    """``H/M`` at finite ``M`` with the epoch ``tau = M / lambda = M / (rho mu)``."""
    tau = M / (rho * mu)
    if case == "mean":
        return ordering_entropy_mean_constraint(mu, tau, M) / M
    if case == "deadline":
        return ordering_entropy_deadline(mu, tau, M) / M
    raise ValueError(f"unknown case {case!r}")
