"""Single-token timing channel with launch deadline and exponential passage.

Launch ``T`` is confined to ``[0, tau]``, the arrival is ``S = T + D`` with
``D ~ Exp(mu)``.  Entropies and capacities are in nats.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .dist import Atom, ExponentialPassage, MixedDensity1D, Piece, convolve, mixed_expectation

E = math.e


class ConvergenceError(RuntimeError):
    """Iteration cap hit; ``last`` carries the final iterate."""

    def __init__(self, msg, last=None):
        super().__init__(msg)
        self.last = last


@dataclass(frozen=True)
class DeadlineChannel:
    mu: float
    tau: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("mu must be positive")
        if not self.tau >= 0:
            raise ValueError("tau must be nonnegative")

    @property
    def mutau(self) -> float:
        return self.mu * self.tau

    @property
    def passage(self) -> ExponentialPassage:
        return ExponentialPassage(self.mu)


@dataclass(frozen=True)
class EntropyDecomposition:
    sigma: float
    h_region1: float
    h_region2: float
    h_binary: float
    total: float


@dataclass(frozen=True)
class VariationalResidual:
    region1_quadratic_coeff: float
    region2_quadratic_coeff: float
    fit_residual: float


def binary_entropy(p: float) -> float:
    if p <= 0.0 or p >= 1.0:
        return 0.0
    return -p * math.log(p) - (1.0 - p) * math.log1p(-p)


def optimal_sigma(ch: DeadlineChannel) -> float:
    return ch.mutau / (E + ch.mutau)


def capacity(ch: DeadlineChannel) -> float:
    return math.log1p(ch.mutau / E)


def optimal_input(ch: DeadlineChannel) -> MixedDensity1D:
    """Capacity-achieving launch law: two boundary atoms plus a flat interior."""
    if ch.tau <= 0:
        raise ValueError("optimal input is degenerate for tau = 0")
    den = E + ch.mutau
    return MixedDensity1D(
        atoms=(Atom(0.0, 1.0 / den), Atom(ch.tau, (E - 1.0) / den)),
        pieces=(Piece(0.0, ch.tau, coef=ch.mu / den),),
    )


@dataclass(frozen=True)
class OptimalOutput:
    """Arrival density of the optimal input: flat on ``[0, tau)``, exponential tail after."""

    mu: float
    tau: float

    @property
    def level(self) -> float:
        return self.mu / (E + self.mu * self.tau)

    def pdf(self, s):
        s = np.asarray(s, dtype=float)
        den = E + self.mu * self.tau
        tail = (E / den) * self.mu * np.exp(-self.mu * np.maximum(s - self.tau, 0.0))
        return np.where(s < 0, 0.0, np.where(s < self.tau, self.mu / den, tail))

    def cdf(self, s: float) -> float:
        den = E + self.mu * self.tau
        if s <= 0:
            return 0.0
        if s < self.tau:
            return self.mu * s / den
        return self.mu * self.tau / den - (E / den) * math.expm1(-self.mu * (s - self.tau))

    def entropy(self) -> float:
        return math.log((E + self.mu * self.tau) / self.mu)


def optimal_output(ch: DeadlineChannel) -> OptimalOutput:
    return OptimalOutput(ch.mu, ch.tau)


def _entropy_part(f, lo, hi, points=()):
    def integrand(s):
        v = f(s)
        return -v * math.log(v) if v > 0 else 0.0

    edges = [lo, *sorted(p for p in points if lo < p < hi), hi]
    return math.fsum(
        integrate.quad(integrand, a, b, epsabs=1e-12, epsrel=1e-12, limit=200)[0]
        for a, b in zip(edges[:-1], edges[1:])
    )


def entropy_decomposition(input: MixedDensity1D, ch: DeadlineChannel) -> EntropyDecomposition:
    """Split ``h(S)`` into the region ``[0, tau]`` and tail contributions."""
    lo, hi = input.support
    if lo < 0 or hi > ch.tau + 1e-15:
        raise ValueError("input must be supported on [0, tau]")
    g = ch.passage
    fs = lambda s: convolve(input, g, s)  # noqa: E731
    kinks = input.breakpoints

    sigma = math.fsum(
        integrate.quad(fs, a, b, epsabs=1e-13, epsrel=1e-12, limit=200)[0]
        for a, b in zip([0.0, *[k for k in kinks if 0 < k < ch.tau]], [*[k for k in kinks if 0 < k < ch.tau], ch.tau])
    ) if ch.tau > 0 else 0.0
    sigma = min(max(sigma, 0.0), 1.0)

    h1 = 0.0
    if sigma > 0:
        h1 = _entropy_part(lambda s: fs(s) / sigma, 0.0, ch.tau, kinks)
    h2 = 0.0
    if sigma < 1:
        h2 = _entropy_part(lambda s: fs(s) / (1.0 - sigma), ch.tau, math.inf)
    hb = binary_entropy(sigma)
    total = sigma * h1 + (1.0 - sigma) * h2 + hb
    return EntropyDecomposition(sigma, h1, h2, hb, total)


# --------------------------------------------------------------------------
# Blahut-Arimoto verification of the closed-form capacity
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class CapacityGrid:
    """Discretisation for :func:`numeric_capacity`.

    Input points are a uniform grid on ``[0, tau]`` (so the boundary atoms
    are representable).  Output bin edges contain every input point, which
    keeps each conditional density smooth inside every bin.
    """

    n_input: int = 400
    n_output: int = 4000
    tail: float = 20.0  # in units of the mean passage time

    def __post_init__(self):
        if self.n_input < 1 or self.n_output < 2:
            raise ValueError("grid too small")


@dataclass(frozen=True)
class CapacityResult:
    capacity: float
    upper: float
    inputs: np.ndarray = field(repr=False)
    weights: np.ndarray = field(repr=False)
    iterations: int
    history: tuple[float, ...] = field(repr=False, default=())

    def __float__(self):
        return float(self.capacity)


def _output_edges(ch: DeadlineChannel, inputs: np.ndarray, n_output: int, tail: float) -> np.ndarray:
    n_in = inputs.size
    if n_in == 1:
        body = np.array([0.0])
        n_tail = n_output - 1
    else:
        per = max(1, (n_output // 2) // (n_in - 1))
        frac = np.arange(per) / per
        body = (inputs[:-1, None] + np.diff(inputs)[:, None] * frac[None, :]).ravel()
        n_tail = max(1, n_output - body.size - 1)
    tail_edges = ch.tau + (tail / ch.mu) * np.linspace(0.0, 1.0, n_tail + 1)
    return np.concatenate([body, tail_edges, [np.inf]])


def channel_matrix(ch: DeadlineChannel, grid: CapacityGrid = CapacityGrid()):
    """Input points and the row-stochastic matrix ``P(bin j | t_i)``."""
    n_in = grid.n_input if ch.tau > 0 else 1
    inputs = np.linspace(0.0, ch.tau, n_in) if n_in > 1 else np.array([0.0])
    edges = _output_edges(ch, inputs, grid.n_output, grid.tail)
    lo = edges[:-1][None, :] - inputs[:, None]
    hi = edges[1:][None, :] - inputs[:, None]
    mu = ch.mu
    lo_c = np.maximum(lo, 0.0)
    hi_c = np.maximum(hi, 0.0)
    # P = exp(-mu lo) - exp(-mu hi) on the part of the bin after t
    with np.errstate(over="ignore", invalid="ignore"):
        W = np.exp(-mu * lo_c) * -np.expm1(-mu * (hi_c - lo_c))
    W = np.where(hi <= 0, 0.0, W)
    W = np.where(np.isfinite(W), W, 0.0)
    W /= W.sum(axis=1, keepdims=True)
    return inputs, W


def merge_proportional_columns(W: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Sum runs of adjacent output columns that are proportional to each other.

    Proportional columns carry the same likelihood ratios for every input,
    so lumping them leaves the mutual information of every input law
    unchanged.
    """
    colsum = W.sum(axis=0)
    keep = colsum > 0
    W = W[:, keep]
    colsum = colsum[keep]
    shape = W / colsum[None, :]
    same = np.all(np.abs(shape[:, 1:] - shape[:, :-1]) <= rtol * np.maximum(shape[:, 1:], shape[:, :-1]), axis=0)
    group = np.concatenate([[0], np.cumsum(~same)])
    out = np.zeros((W.shape[0], group[-1] + 1))
    np.add.at(out.T, group, W.T)
    return out


def numeric_capacity(
    ch: DeadlineChannel,
    grid: CapacityGrid = CapacityGrid(),
    tol: float = 1e-9,
    max_iter: int = 200_000,
) -> CapacityResult:
    """Blahut-Arimoto capacity of the discretised channel.

    The reported value is the lower bound ``log sum_i r_i exp(D_i)``, which
    is nondecreasing in the iteration.  Stops when it changes by less than
    ``tol`` between iterations or the gap to the upper bound
    ``max_i D(W_i || q)`` closes below ``tol``.
    """
    inputs, W = channel_matrix(ch, grid)
    if inputs.size == 1:
        return CapacityResult(0.0, 0.0, inputs, np.ones(1), 0, (0.0,))
    W = merge_proportional_columns(W)
    negent = (W * np.log(np.where(W > 0, W, 1.0))).sum(axis=1)
    r = np.full(inputs.size, 1.0 / inputs.size)
    history = []
    lower = -np.inf
    upper = np.inf
    for it in range(1, max_iter + 1):
        q = r @ W
        logq = np.log(np.where(q > 0, q, 1.0))
        D = negent - W @ logq
        top = D.max()
        z = r * np.exp(D - top)
        zsum = z.sum()
        lower = top + math.log(zsum)
        upper = top
        history.append(lower)
        r = z / zsum
        if upper - lower < tol or (it > 1 and abs(lower - history[-2]) < tol):
            return CapacityResult(lower, upper, inputs, r, it, tuple(history))
    raise ConvergenceError(
        f"Blahut-Arimoto did not converge in {max_iter} iterations (gap {upper - lower:.3e})",
        last=CapacityResult(lower, upper, inputs, r, max_iter, tuple(history)),
    )


def discretized_optimal_input(ch: DeadlineChannel, inputs: np.ndarray) -> np.ndarray:
    """Optimal launch law lumped onto ``inputs``: atoms at the ends, each point its cell's share."""
    den = E + ch.mutau
    mids = np.concatenate([[0.0], 0.5 * (inputs[1:] + inputs[:-1]), [ch.tau]])
    w = ch.mu / den * np.diff(mids)
    w[0] += 1.0 / den
    w[-1] += (E - 1.0) / den
    return w


# --------------------------------------------------------------------------
# variational (non-exponentiality) check
# --------------------------------------------------------------------------

def variational_integral(ch: DeadlineChannel, s: float) -> float:
    """``J(s) = int f_T(t) log f_S(s + t) dt`` for the optimal pair."""
    out = optimal_output(ch)
    logfs = lambda t: float(np.log(out.pdf(s + t)))  # noqa: E731
    return mixed_expectation(optimal_input(ch), logfs, points=(ch.tau - s,), epsabs=1e-14, epsrel=1e-14)


def variational_check(ch: DeadlineChannel, n_points: int = 512, tail: float = 20.0) -> VariationalResidual:
    """Quadratic least-squares fit of ``J`` on ``[0, tau)`` and ``[tau, tau + tail/mu]``.

    ``J`` would be affine in ``s`` on both regions if exponential passage
    were the minimising noise; the region-one curvature rules that out.
    """
    if ch.tau <= 0:
        raise ValueError("tau must be positive")
    s1 = np.linspace(0.0, ch.tau, n_points, endpoint=False)
    s2 = np.linspace(ch.tau, ch.tau + tail / ch.mu, n_points)
    coeffs = []
    resid = 0.0
    for grid in (s1, s2):
        j = np.array([variational_integral(ch, s) for s in grid])
        c, res, *_ = np.polyfit(grid, j, 2, full=True)
        coeffs.append(c[0])
        fit = np.polyval(c, grid)
        resid = max(resid, float(np.max(np.abs(fit - j))))
    return VariationalResidual(float(coeffs[0]), float(coeffs[1]), resid)
