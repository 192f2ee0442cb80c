import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tokentiming.bounds import (
    ExperimentalWarning,
    GammaPair,
    LoadPoint,
    Z,
    beta_tilde,
    cq_upper,
    ct_upper,
    gamma_S0_prime,
    gamma_S0_prime_exact,
    gamma_S_lower,
    gamma_T_iid,
    h_up_gamma_bound,
    single_token_rate,
    solve_beta_star,
    three_point_kernel,
    tilted_gamma_S,
    tilted_gamma_S_prime,
)
from tokentiming.dist import ExponentialPassage, make_stream, point_mass
from tokentiming.iidorder import IIDInput, deadline_input, uniform_input
from tokentiming.mc import SimConfig, estimate_gamma, estimate_gamma_variance, estimate_h_up_exact

EXP1 = ExponentialPassage(1.0)


def test_load_point():
    p = LoadPoint(lam=3.0, mu=2.0)
    assert p.rho == 1.5
    with pytest.raises(ValueError):
        LoadPoint(lam=3.0, mu=2.0, rho=1.0)
    with pytest.raises(ValueError):
        LoadPoint(lam=2.0, mu=1.0, tau=3.0, M=5)
    assert LoadPoint(lam=2.0, mu=1.0, tau=3.0, M=6).M == 6


def test_gamma_pair():
    with pytest.raises(ValueError):
        GammaPair(1.2, 0.5)
    assert GammaPair(0.6, 0.4).satisfies_lower_bound()
    assert not GammaPair(0.9, 0.4).satisfies_lower_bound()


def test_gamma_T_iid():
    assert gamma_T_iid(IIDInput(point_mass(0.3)), 1.0) == pytest.approx(1.0)
    assert gamma_T_iid(uniform_input(1.0), 1.0) == pytest.approx(2 / math.e, abs=1e-10)
    for x in (0.3, 2.0, 7.0):
        assert gamma_T_iid(uniform_input(x), 1.0) == pytest.approx(Z(x), abs=1e-10)


def test_gamma_T_iid_with_atoms_vs_mc():
    inp = deadline_input(1.0, 2.0)
    est = estimate_gamma(SimConfig(2, EXP1, inp, 100_000, seed=3), "T")
    assert est.within(gamma_T_iid(inp, 1.0))


def test_h_up_gamma_bound_trivial():
    assert h_up_gamma_bound(5, 0.0) == 0.0
    assert h_up_gamma_bound(1, 0.7) == 0.0
    with pytest.raises(ValueError):
        h_up_gamma_bound(3, 1.5)


def test_h_up_gamma_bound_dominance_example():
    inp = uniform_input(3.0)
    est = estimate_h_up_exact(SimConfig(6, EXP1, inp, 20_000, seed=8))
    assert est.mean <= h_up_gamma_bound(6, gamma_T_iid(inp, 1.0)) + 3 * est.std_error


def test_gamma_S_lower():
    assert gamma_S_lower(1.0) == 0.5
    assert gamma_S_lower(0.0) == 0.0
    est = estimate_gamma(SimConfig(3, EXP1, uniform_input(1.0), 20_000, seed=2), "S")
    assert est.mean >= Z(1.0) / 2 - 3 * est.std_error


def test_Z_values():
    assert Z(0.0) == 1.0
    assert Z(1e-6) == pytest.approx(1.0, abs=1e-6)
    assert Z(1.0) == pytest.approx(2 / math.e)
    assert Z(1e3) / (2 / 1e3) == pytest.approx(1.0, abs=0.01)
    # series and direct branches meet smoothly at the cutoff
    assert Z(0.99999e-4) == pytest.approx(Z(1.00001e-4), abs=1e-9)


def test_Z_decreasing_and_bounded():
    xs = np.logspace(-6, 4, 400)
    z = np.array([Z(x) for x in xs])
    assert np.all(np.diff(z) < 0)
    assert np.all((z > 0) & (z <= 1))


def test_gamma_S0_prime_M2():
    for x in (0.5, 2.0, 9.0):
        assert gamma_S0_prime(1.0, x, 2) == pytest.approx(2 * Z(2 * x) - 2 * Z(x) ** 2, abs=1e-14)
        assert gamma_S0_prime_exact(1.0, x, 2) == pytest.approx(2 * Z(2 * x) - 2 * Z(x) ** 2, abs=1e-14)


def test_gamma_S0_prime_matches_reference_expression():
    for M, x in ((3, 0.4), (5, 2.0), (40, 11.0)):
        g = Z(x)
        verbatim = (M - 2) * (M - 3) * g**2 + 2 * Z(2 * x) + 24 * (M - 2) / x**3 * (x - 2 + math.exp(-x) * (2 + x)) - M * (M - 1) * g**2
        assert gamma_S0_prime(1.0, x, M) == pytest.approx(verbatim, rel=1e-10)


def test_gamma_S0_prime_limit():
    M, rho = 10**4, 1.0
    assert (M - 1) * gamma_S0_prime(1.0, M / rho, M) == pytest.approx(8 * rho**2 + 2 * rho, rel=0.01)


def test_three_point_kernel_vs_mc():
    rng = make_stream(17)
    x = 2.0
    u = rng.uniform(0, x, (2_000_000, 3))
    q = np.exp(-np.abs(u[:, 0] - u[:, 1]) - np.abs(u[:, 0] - u[:, 2]))
    assert abs(q.mean() - three_point_kernel(x)) < 4 * q.std() / math.sqrt(q.size)
    assert three_point_kernel(0.0) == 1.0
    for x in (0.0999, 0.1001):
        direct = (4 * x - 7 + math.exp(-x) * (8 + 2 * x) - math.exp(-2 * x)) / x**3
        assert three_point_kernel(x) == pytest.approx(direct, rel=1e-8)


def test_gamma_S0_prime_exact_vs_variance():
    M, tau = 5, 2.0
    v = estimate_gamma_variance(SimConfig(M, EXP1, uniform_input(tau), 100_000, seed=7))
    assert v.within(gamma_S0_prime_exact(1.0, tau, M) * M * (M - 1))


def test_gamma_S0_prime_exact_limit():
    M = 10**5
    for rho in (0.1, 1.0):
        assert (M - 1) * gamma_S0_prime_exact(1.0, M / rho, M) == pytest.approx(2 * rho, rel=0.01)


def test_beta_tilde():
    assert beta_tilde(1e-12) == pytest.approx(1.0)
    assert beta_tilde(1.0) == 0.2
    rng = make_stream(4)
    for rho in rng.uniform(1e-3, 1e3, 100):
        assert (8 * rho**2 + 2 * rho) * beta_tilde(rho) + 2 * rho == pytest.approx(4 * rho, rel=1e-12)


def test_cq_upper():
    assert cq_upper(1.0) == math.log(5.0)
    assert cq_upper(1e9) == pytest.approx(math.log(4.0), abs=1e-9)
    rhos = np.logspace(-3, 3, 50)
    vals = [cq_upper(r) for r in rhos]
    assert all(v > 0 for v in vals) and np.all(np.diff(vals) < 0)
    for rho in (0.1, 1.0, 10.0):
        assert cq_upper(rho) >= single_token_rate(rho, 2000)


def test_ct_upper():
    assert ct_upper(LoadPoint(0.0, 1.0)) == 0.0
    assert ct_upper(LoadPoint(1.0, 1.0)) == pytest.approx(math.log(5))
    assert ct_upper(LoadPoint(4.0, 2.0)) == pytest.approx(2 * ct_upper(LoadPoint(2.0, 1.0)))


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-6, 1e6))
def test_beta_tilde_in_unit_interval(rho):
    assert 0 < beta_tilde(rho) < 1


def test_tilted_family_monotone():
    g = [tilted_gamma_S(b, 1.0, 2.0, 3, samples=50_000) for b in np.linspace(-1, 2, 13)]
    assert np.all(np.diff(g) > 0)
    assert tilted_gamma_S(0.0, 1.0, 2.0, 3, samples=200_000) == pytest.approx(Z(2.0), abs=3e-3)


def test_tilted_variance_not_monotone():
    # the variance of sum Q first grows with beta at M=3, mu*tau=2
    v0 = tilted_gamma_S_prime(0.0, 1.0, 2.0, 3)
    v = tilted_gamma_S_prime(0.5, 1.0, 2.0, 3)
    assert v0 == pytest.approx(gamma_S0_prime_exact(1.0, 2.0, 3), rel=0.02)
    assert v > 1.1 * v0


def test_solve_beta_star():
    with warnings.catch_warnings(record=True) as rec:
        warnings.simplefilter("always")
        bp = solve_beta_star(1.0, 2.0, 3, samples=50_000)
    assert any(issubclass(w.category, ExperimentalWarning) for w in rec)
    assert 1 / 3 <= bp.beta <= 1
    assert bp.gamma_value == pytest.approx((1 - bp.beta) / (2 * bp.beta), abs=1e-4)
    with pytest.raises(ValueError):
        solve_beta_star(1.0, 2.0, 6)
