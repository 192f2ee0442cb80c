"""Probability-law primitives.

Mixed atomic/continuous launch densities, first-passage models, an
atom-aware expectation operator and the launch/passage convolution.
All objects are immutable; randomness only ever comes from an explicitly
passed ``numpy.random.Generator``.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

QUAD_EPSABS = 1e-10
QUAD_EPSREL = 1e-10
MASS_TOL = 1e-12

# Gauss-Legendre nodes on [0, 1]; exact for polynomials up to degree 79
_GL_X, _GL_W = np.polynomial.legendre.leggauss(40)
_GL_X = 0.5 * (_GL_X + 1.0)
_GL_W = 0.5 * _GL_W


class DensityError(ValueError):
    """Raised when a density violates its invariants."""


# --------------------------------------------------------------------------
# random streams
# --------------------------------------------------------------------------

def make_stream(seed: int, *index: int) -> np.random.Generator:
    """Counter-based (Philox) stream for ``seed``, split by ``index``.

    Streams with equal ``(seed, index)`` produce identical sequences, and
    distinct indices give statistically independent substreams.
    """
    ss = np.random.SeedSequence(int(seed) & ((1 << 64) - 1), spawn_key=tuple(int(i) for i in index))
    return np.random.Generator(np.random.Philox(ss))


# --------------------------------------------------------------------------
# mixed densities
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class Atom:
    location: float
    mass: float

    def __post_init__(self):
        if not (0.0 < self.mass <= 1.0):
            raise DensityError(f"atom mass must lie in (0, 1], got {self.mass}")


@dataclass(frozen=True)
class Piece:
    """Continuous density on ``[start, stop)``.

    Without ``func`` the density is ``coef * exp(-rate * (t - start))``
    (a constant when ``rate == 0``); with ``func`` it is ``func(t)``.
    """

    start: float
    stop: float
    coef: float = 0.0
    rate: float = 0.0
    func: Callable[[np.ndarray], np.ndarray] | None = field(default=None, compare=False)

    def __post_init__(self):
        if not self.stop > self.start:
            raise DensityError(f"piece bounds must increase, got [{self.start}, {self.stop})")
        if math.isinf(self.stop) and self.func is None and self.rate <= 0 and self.coef != 0:
            raise DensityError("an unbounded piece needs a positive decay rate")
        if self.func is None and self.coef < 0:
            raise DensityError("piece density must be nonnegative")

    def pdf(self, t):
        t = np.asarray(t, dtype=float)
        inside = (t >= self.start) & (t < self.stop)
        if self.func is not None:
            vals = np.where(inside, self.func(np.where(inside, t, self.start)), 0.0)
        elif self.rate == 0.0:
            vals = np.where(inside, self.coef, 0.0)
        else:
            vals = np.where(inside, self.coef * np.exp(-self.rate * (np.where(inside, t, self.start) - self.start)), 0.0)
        return vals

    def mass_to(self, x: float) -> float:
        """Mass of the piece on ``[start, min(x, stop))``."""
        hi = min(x, self.stop)
        if hi <= self.start:
            return 0.0
        if self.func is not None:
            return _quad(lambda u: float(self.func(np.asarray(u))), self.start, hi)
        width = hi - self.start
        if self.rate == 0.0:
            return self.coef * width
        return self.coef * -math.expm1(-self.rate * width) / self.rate

    @property
    def mass(self) -> float:
        return self.mass_to(math.inf)


def _quad(f, a, b, points=()):
    inner = sorted(p for p in points if a < p < b)
    edges = [a, *inner, b]
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        val, _ = integrate.quad(f, lo, hi, epsabs=QUAD_EPSABS, epsrel=QUAD_EPSREL, limit=200)
        total += val
    return total


@dataclass(frozen=True)
class MixedDensity1D:
    """Point atoms plus a piecewise continuous density on the half line."""

    atoms: tuple[Atom, ...] = ()
    pieces: tuple[Piece, ...] = ()

    def __post_init__(self):
        atoms = tuple(sorted(self.atoms, key=lambda a: a.location))
        pieces = tuple(sorted(self.pieces, key=lambda p: p.start))
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "pieces", pieces)
        locs = [a.location for a in atoms]
        if len(set(locs)) != len(locs):
            raise DensityError("atom locations must be distinct")
        for prev, nxt in zip(pieces[:-1], pieces[1:]):
            if nxt.start < prev.stop:
                raise DensityError("pieces overlap")
        total = self.total_mass()
        if abs(total - 1.0) > MASS_TOL:
            raise DensityError(f"total mass {total!r} differs from 1")

    # --- structure ------------------------------------------------------
    def total_mass(self) -> float:
        return math.fsum([a.mass for a in self.atoms] + [p.mass for p in self.pieces])

    @property
    def breakpoints(self) -> tuple[float, ...]:
        pts = {a.location for a in self.atoms}
        for p in self.pieces:
            pts.add(p.start)
            if math.isfinite(p.stop):
                pts.add(p.stop)
        return tuple(sorted(pts))

    @property
    def support(self) -> tuple[float, float]:
        lo = [a.location for a in self.atoms] + [p.start for p in self.pieces]
        hi = [a.location for a in self.atoms] + [p.stop for p in self.pieces]
        return min(lo), max(hi)

    # --- evaluation -----------------------------------------------------
    def pdf(self, t):
        """Continuous part of the density (atoms excluded)."""
        t = np.asarray(t, dtype=float)
        out = np.zeros_like(t)
        for p in self.pieces:
            out = out + p.pdf(t)
        return out

    def cdf(self, t: float, side: str = "right") -> float:
        """``P(T <= t)`` (``side='right'``) or ``P(T < t)`` (``side='left'``)."""
        acc = [p.mass_to(t) for p in self.pieces]
        for a in self.atoms:
            if a.location < t or (side == "right" and a.location == t):
                acc.append(a.mass)
        return min(1.0, math.fsum(acc))

    def mean(self) -> float:
        return mixed_expectation(self, lambda t: t)

    def sample(self, stream: np.random.Generator, n: int) -> np.ndarray:
        if n < 1:
            raise ValueError("n must be at least 1")
        comps = [("atom", a, a.mass) for a in self.atoms] + [("piece", p, p.mass) for p in self.pieces]
        weights = np.array([c[2] for c in comps])
        which = stream.choice(len(comps), size=n, p=weights / weights.sum())
        u = stream.random(n)
        out = np.empty(n)
        for idx, (kind, comp, _) in enumerate(comps):
            sel = which == idx
            if not sel.any():
                continue
            if kind == "atom":
                out[sel] = comp.location
            else:
                out[sel] = _piece_inverse(comp, u[sel])
        return out


def _piece_inverse(p: Piece, u: np.ndarray) -> np.ndarray:
    if p.func is None and p.rate == 0.0:
        return p.start + u * (p.stop - p.start)
    if p.func is None:
        width = p.stop - p.start
        frac = -math.expm1(-p.rate * width) if math.isfinite(width) else 1.0
        return p.start - np.log1p(-u * frac) / p.rate
    # generic callable piece: tabulated inverse CDF on a fine grid
    hi = p.stop if math.isfinite(p.stop) else p.start + 50.0
    grid = np.linspace(p.start, hi, 4097)
    dens = np.asarray(p.func(grid), dtype=float)
    cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * np.diff(grid))])
    return np.interp(u * cum[-1], cum, grid)


def uniform_density(lo: float, hi: float) -> MixedDensity1D:
    return MixedDensity1D(pieces=(Piece(lo, hi, coef=1.0 / (hi - lo)),))


def point_mass(location: float = 0.0) -> MixedDensity1D:
    return MixedDensity1D(atoms=(Atom(location, 1.0),))


# --------------------------------------------------------------------------
# first-passage models
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class FirstPassageModel:
    """Atom-free first-passage law on ``[0, inf)``; subclasses fill in the maths."""

    @property
    def mean_passage(self) -> float:
        raise NotImplementedError

    def pdf(self, d):
        raise NotImplementedError

    def cdf(self, d):
        raise NotImplementedError

    def ccdf(self, d):
        return 1.0 - self.cdf(d)

    def logpdf(self, d):
        d = np.asarray(d, dtype=float)
        with np.errstate(divide="ignore"):
            return np.log(self.pdf(d))

    def sample(self, stream: np.random.Generator, size) -> np.ndarray:
        raise NotImplementedError

    @property
    def breakpoints(self) -> tuple[float, ...]:
        """Points where the density has a kink or jump."""
        return (0.0,)


@dataclass(frozen=True)
class ExponentialPassage(FirstPassageModel):
    mu: float

    def __post_init__(self):
        if not self.mu > 0:
            raise ValueError("rate mu must be positive")

    @property
    def mean_passage(self) -> float:
        return 1.0 / self.mu

    def pdf(self, d):
        d = np.asarray(d, dtype=float)
        return np.where(d >= 0, self.mu * np.exp(-self.mu * np.maximum(d, 0.0)), 0.0)

    def cdf(self, d):
        d = np.asarray(d, dtype=float)
        return np.where(d > 0, -np.expm1(-self.mu * np.maximum(d, 0.0)), 0.0)

    def ccdf(self, d):
        d = np.asarray(d, dtype=float)
        return np.where(d > 0, np.exp(-self.mu * np.maximum(d, 0.0)), 1.0)

    def logpdf(self, d):
        d = np.asarray(d, dtype=float)
        return np.where(d >= 0, math.log(self.mu) - self.mu * d, -np.inf)

    def sample(self, stream, size):
        return stream.exponential(1.0 / self.mu, size=size)


@dataclass(frozen=True)
class UniformPassage(FirstPassageModel):
    """Uniform first passage on ``[low, high]``, ``0 <= low < high``."""

    low: float
    high: float

    def __post_init__(self):
        if not (0.0 <= self.low < self.high):
            raise ValueError("need 0 <= low < high")

    @classmethod
    def with_mean(cls, mu: float) -> "UniformPassage":
        """Uniform on ``[0, 2/mu]``: mean ``1/mu``, no singularities."""
        return cls(0.0, 2.0 / mu)

    @property
    def mean_passage(self) -> float:
        return 0.5 * (self.low + self.high)

    def pdf(self, d):
        d = np.asarray(d, dtype=float)
        return np.where((d >= self.low) & (d <= self.high), 1.0 / (self.high - self.low), 0.0)

    def cdf(self, d):
        d = np.asarray(d, dtype=float)
        return np.clip((d - self.low) / (self.high - self.low), 0.0, 1.0)

    def ccdf(self, d):
        return 1.0 - self.cdf(d)

    def sample(self, stream, size):
        return stream.uniform(self.low, self.high, size=size)

    @property
    def breakpoints(self):
        return (self.low, self.high)


def eval_cdf(model: FirstPassageModel, d: float) -> float:
    return float(model.cdf(d))


def sample(model: FirstPassageModel, stream: np.random.Generator, n: int) -> np.ndarray:
    if n < 1:
        raise ValueError("n must be at least 1")
    return np.asarray(model.sample(stream, n), dtype=float)


# --------------------------------------------------------------------------
# atom-aware expectation
# --------------------------------------------------------------------------

class JumpConvention(enum.Enum):
    """How an atom sitting on a jump of the inner function is evaluated.

    ``AVERAGE`` integrates the outer function uniformly across the jump,
    so an atom under ``psi**k`` with ``psi`` jumping from ``a`` to ``b``
    contributes ``(b**(k+1) - a**(k+1)) / ((k+1)(b-a))`` per unit mass, and
    ``u(t)**k`` at the origin gives ``1/(k+1)``.
    """

    AVERAGE = "average"
    LEFT = "left"
    RIGHT = "right"


def _jump_value(outer, a, b, convention: JumpConvention):
    if convention is JumpConvention.LEFT:
        return np.asarray(outer(a), dtype=float)
    if convention is JumpConvention.RIGHT:
        return np.asarray(outer(b), dtype=float)
    if a == b:
        return np.asarray(outer(a), dtype=float)
    vals = [np.asarray(outer(a + (b - a) * x), dtype=float) for x in _GL_X]
    return sum(w * v for w, v in zip(_GL_W, vals))


def mixed_expectation(
    density: MixedDensity1D,
    integrand,
    convention: JumpConvention = JumpConvention.AVERAGE,
    *,
    inner: Callable[[float, str], float] | None = None,
    points: Sequence[float] = (),
    epsabs: float = QUAD_EPSABS,
    epsrel: float = QUAD_EPSREL,
):
    """``E[h(T)]`` for a mixed density.

    With ``inner=None`` the integrand is ``h(t) = integrand(t)`` and must be
    continuous at the atoms.  With ``inner`` given, ``h(t) =
    integrand(inner(t))`` where ``inner(t, side)`` returns the left or right
    limit at ``t``; atoms on a jump of ``inner`` are resolved by
    ``convention``.  Vector-valued integrands are supported.  A plain number
    as integrand is treated as a constant and returned exactly.
    """
    if not callable(integrand):
        return float(integrand)

    if inner is None:
        f = integrand
    else:
        def f(t):
            return integrand(inner(t, "right"))

    terms = []
    for atom in density.atoms:
        if inner is None:
            v = np.asarray(integrand(atom.location), dtype=float)
        else:
            v = _jump_value(integrand, inner(atom.location, "left"), inner(atom.location, "right"), convention)
        terms.append(atom.mass * v)

    extra = set(points) | set(density.breakpoints)
    for piece in density.pieces:
        def g(t, piece=piece):
            return piece.pdf(t) * np.asarray(f(t), dtype=float)

        inner_pts = sorted(p for p in extra if piece.start < p < piece.stop)
        edges = [piece.start, *inner_pts, piece.stop]
        for lo, hi in zip(edges[:-1], edges[1:]):
            val, _ = integrate.quad_vec(g, lo, hi, epsabs=epsabs, epsrel=epsrel, limit=400)
            terms.append(np.asarray(val, dtype=float))

    total = sum(terms) if terms else 0.0
    total = np.asarray(total, dtype=float)
    if not np.all(np.isfinite(total)):
        raise FloatingPointError("integrand is not finite on the support")
    return float(total) if total.ndim == 0 else total


def unit_step(t: float, side: str = "right") -> float:
    """``u(t)`` with explicit one-sided limits at the origin."""
    if t > 0 or (t == 0 and side == "right"):
        return 1.0
    return 0.0


# --------------------------------------------------------------------------
# convolution with a first-passage density
# --------------------------------------------------------------------------

def convolve(density: MixedDensity1D, passage: FirstPassageModel, s: float) -> float:
    """Density of ``S = T + D`` at ``s`` (atom free because ``g`` is)."""
    if s < 0:
        return 0.0
    total = [a.mass * float(passage.pdf(s - a.location)) for a in density.atoms if a.location <= s]
    kinks = {s - b for b in passage.breakpoints}
    for piece in density.pieces:
        hi = min(piece.stop, s)
        if hi <= piece.start:
            continue
        total.append(_quad(lambda t: float(piece.pdf(t) * passage.pdf(s - t)), piece.start, hi, points=kinks))
    return math.fsum(total)
