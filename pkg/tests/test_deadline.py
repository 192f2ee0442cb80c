import math

import numpy as np
import pytest
from scipy import integrate

from tokentiming.deadline import (
    CapacityGrid,
    ConvergenceError,
    DeadlineChannel,
    capacity,
    discretized_optimal_input,
    entropy_decomposition,
    numeric_capacity,
    optimal_input,
    optimal_output,
    optimal_sigma,
    variational_check,
)
from tokentiming.dist import Atom, MixedDensity1D, Piece, convolve, make_stream, point_mass, uniform_density

E = math.e


def test_sigma_values():
    assert optimal_sigma(DeadlineChannel(1.0, 0.0)) == 0.0
    assert optimal_sigma(DeadlineChannel(1.0, E)) == pytest.approx(0.5)
    assert optimal_sigma(DeadlineChannel(1.0, 1.0)) == pytest.approx(1 / (E + 1))


def test_capacity_values():
    assert capacity(DeadlineChannel(3.0, 0.0)) == 0.0
    assert capacity(DeadlineChannel(1.0, E)) == pytest.approx(math.log(2))
    assert capacity(DeadlineChannel(1.0, 10.0)) == pytest.approx(math.log(1 + 10 / E))


def test_channel_validation():
    with pytest.raises(ValueError):
        DeadlineChannel(0.0, 1.0)
    with pytest.raises(ValueError):
        DeadlineChannel(1.0, -1.0)


def test_optimal_input_masses():
    dens = optimal_input(DeadlineChannel(1.0, 1.0))
    m0, m1 = (a.mass for a in dens.atoms)
    assert m0 == pytest.approx(1 / (E + 1))
    assert m1 == pytest.approx((E - 1) / (E + 1))
    assert dens.pieces[0].mass == pytest.approx(1 / (E + 1))
    assert dens.total_mass() == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ValueError):
        optimal_input(DeadlineChannel(1.0, 0.0))


def test_optimal_input_large_mutau_is_nearly_uniform():
    dens = optimal_input(DeadlineChannel(1.0, 1e6))
    assert max(a.mass for a in dens.atoms) < 2e-6
    assert dens.pieces[0].mass == pytest.approx(1.0, abs=1e-5)


def test_optimal_output():
    out = optimal_output(DeadlineChannel(1.0, 0.0))
    assert out.entropy() == pytest.approx(1.0)
    out = optimal_output(DeadlineChannel(1.0, E))
    assert out.entropy() == pytest.approx(math.log(2 * E))
    out = optimal_output(DeadlineChannel(1.7, 0.8))
    tot = integrate.quad(out.pdf, 0, 0.8)[0] + integrate.quad(out.pdf, 0.8, np.inf)[0]
    assert tot == pytest.approx(1.0, abs=1e-10)


def test_entropy_decomposition_optimum():
    for mu, tau in ((1.0, 1.0), (2.0, 0.5), (0.5, 3.0)):
        ch = DeadlineChannel(mu, tau)
        d = entropy_decomposition(optimal_input(ch), ch)
        assert d.total == pytest.approx(math.log((E + mu * tau) / mu), abs=1e-9)
        assert d.total == pytest.approx(d.sigma * d.h_region1 + (1 - d.sigma) * d.h_region2 + d.h_binary, abs=1e-10)
        assert capacity(ch) == pytest.approx(d.total - (1 - math.log(mu)), abs=1e-9)
        sig = integrate.quad(lambda s: convolve(optimal_input(ch), ch.passage, s), 0, tau, limit=200)[0]
        assert sig == pytest.approx(optimal_sigma(ch), abs=1e-10)


def test_entropy_decomposition_atom_and_uniform():
    ch = DeadlineChannel(2.0, 1.0)
    assert entropy_decomposition(point_mass(0.0), ch).total == pytest.approx(1 - math.log(2.0), abs=1e-9)

    ch = DeadlineChannel(1.0, 1.0)
    dens = uniform_density(0, 1)
    f = lambda s: convolve(dens, ch.passage, s)  # noqa: E731
    ent = lambda s: -f(s) * math.log(f(s)) if f(s) > 0 else 0.0  # noqa: E731
    ref = integrate.quad(ent, 0, 1, epsabs=1e-13, limit=200)[0] + integrate.quad(ent, 1, 60, epsabs=1e-13, limit=200)[0]
    assert entropy_decomposition(dens, ch).total == pytest.approx(ref, abs=1e-8)


def _random_piecewise(rng, tau):
    n = int(rng.integers(1, 4))
    cuts = np.sort(rng.uniform(0, tau, n - 1))
    edges = np.concatenate([[0.0], cuts, [tau]])
    w = rng.dirichlet(np.ones(n + 1))
    atoms = (Atom(0.0, float(w[0])),) if w[0] > 1e-3 else ()
    mass_left = 1.0 - (w[0] if atoms else 0.0)
    ww = w[1:] / w[1:].sum() * mass_left
    pieces = tuple(Piece(float(a), float(b), coef=float(m / (b - a))) for a, b, m in zip(edges[:-1], edges[1:], ww) if b > a)
    return MixedDensity1D(atoms=atoms, pieces=pieces)


def test_output_entropy_never_exceeds_maximum():
    rng = make_stream(21)
    ch = DeadlineChannel(1.0, 1.5)
    hmax = math.log((E + 1.5) / 1.0)
    for _ in range(20):
        d = entropy_decomposition(_random_piecewise(rng, 1.5), ch)
        assert d.total <= hmax + 1e-8


def test_numeric_capacity_small_case():
    ch = DeadlineChannel(1.0, 1.0)
    res = numeric_capacity(ch)
    assert abs(res.capacity - capacity(ch)) < 1e-3
    assert res.capacity <= capacity(ch) + 1e-9
    assert all(b >= a - 1e-12 for a, b in zip(res.history, res.history[1:]))
    assert float(res) == res.capacity


def test_numeric_capacity_degenerate():
    assert numeric_capacity(DeadlineChannel(1.0, 0.0)).capacity == 0.0


def test_numeric_capacity_refines():
    ch = DeadlineChannel(1.0, 1.0)
    c = capacity(ch)
    errs = [abs(numeric_capacity(ch, CapacityGrid(n, 10 * n), tol=1e-13, max_iter=10**6).capacity - c) for n in (5, 10, 20)]
    assert errs[1] <= errs[0] / 2 and errs[2] <= errs[1] / 2


def test_numeric_capacity_input_shape():
    ch = DeadlineChannel(1.0, 1.0)
    res = numeric_capacity(ch)
    ref = discretized_optimal_input(ch, res.inputs)
    assert 0.5 * np.abs(res.weights - ref).sum() < 0.05
    assert res.weights[0] > 10 * np.median(res.weights) and res.weights[-1] > 10 * np.median(res.weights)


def test_numeric_capacity_nonconvergence_carries_iterate():
    with pytest.raises(ConvergenceError) as exc:
        numeric_capacity(DeadlineChannel(1.0, 1.0), CapacityGrid(200, 2000), tol=1e-15, max_iter=3)
    assert exc.value.last is not None and exc.value.last.iterations == 3


@pytest.mark.parametrize("mu,tau", [(1.0, 1.0), (2.0, 0.5), (0.7, 3.0)])
def test_variational_check(mu, tau):
    vr = variational_check(DeadlineChannel(mu, tau))
    assert vr.region1_quadratic_coeff == pytest.approx(-(mu**2) / (2 * (E + mu * tau)), abs=1e-6)
    assert abs(vr.region2_quadratic_coeff) < 1e-8
    assert 0 <= vr.fit_residual < 1e-8
