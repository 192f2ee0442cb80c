"""Reproduction checks grouped by result; shared by the CLI and the test-suite.

Every check returns :class:`CheckResult` rows.  Nothing here reads the clock
or unseeded randomness, so a suite run is byte-reproducible for a given seed.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from . import bounds, deadline, iidorder, mc, ordent
from .dist import ExponentialPassage, UniformPassage, make_stream

SUITES = tuple(f"theorem{i}" for i in range(1, 11))


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    measured: float
    expected: float
    tol: float
    passed: bool

    def line(self) -> str:
        flag = "PASS" if self.passed else "FAIL"
        return (
            f"{flag}  {self.suite:<9} {self.name:<44} measured={self.measured:.12g}  "
            f"expected={self.expected:.12g}  tol={self.tol:.3g}"
        )

    def as_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class Settings:
    seed: int = 7
    quick: bool = False
    workers: int = 1

    @property
    def reps(self) -> int:
        return 5_000 if self.quick else 20_000

    @property
    def variance_reps(self) -> int:
        return 20_000 if self.quick else 100_000


def _close(suite, name, measured, expected, tol) -> CheckResult:
    ok = bool(np.isfinite(measured) and abs(measured - expected) <= tol)
    return CheckResult(suite, name, float(measured), float(expected), float(tol), ok)


def _at_most(suite, name, measured, bound, slack) -> CheckResult:
    return CheckResult(suite, name, float(measured), float(bound), float(slack), bool(measured <= bound + slack))


def _at_least(suite, name, measured, bound, slack) -> CheckResult:
    return CheckResult(suite, name, float(measured), float(bound), float(slack), bool(measured >= bound - slack))


# --------------------------------------------------------------------------

def theorem1(cfg: Settings) -> list[CheckResult]:
    """Blahut–Arimoto on a 400 x 4000 grid vs ``log(1 + mu tau / e)``."""
    out = []
    for mt in (0.5, 1.0, math.e, 5.0):
        ch = deadline.DeadlineChannel(1.0, mt)
        res = deadline.numeric_capacity(ch, deadline.CapacityGrid(400, 4000))
        out.append(_close("theorem1", f"numeric_capacity[mu_tau={mt:.6g}]", res.capacity, deadline.capacity(ch), 1e-3))
    return out


def theorem2(cfg: Settings) -> list[CheckResult]:
    out = []
    for mu, tau in ((1.0, 1.0), (2.0, 0.5)):
        ch = deadline.DeadlineChannel(mu, tau)
        vr = deadline.variational_check(ch)
        want = -(mu**2) / (2.0 * (math.e + mu * tau))
        out.append(_close("theorem2", f"region1_quadratic[mu={mu:g},tau={tau:g}]", vr.region1_quadratic_coeff, want, 1e-6))
        out.append(_close("theorem2", f"region2_quadratic[mu={mu:g},tau={tau:g}]", vr.region2_quadratic_coeff, 0.0, 1e-8))
    return out


def theorem3(cfg: Settings) -> list[CheckResult]:
    """Theta oracle, the two Delta-Gamma forms, and the bound direction for non-exponential passage."""
    out = []
    rng = make_stream(cfg.seed, 3)
    worst = 0.0
    n_inst = 30 if cfg.quick else 100
    for _ in range(n_inst):
        M = int(rng.integers(2, 11))
        t = ordent.LaunchVector.from_unsorted(rng.uniform(0.0, 3.0, M))
        passage = ExponentialPassage(float(rng.uniform(0.3, 3.0)))
        m = int(rng.integers(1, M))
        pmf = ordent.theta_pmf(t, m, passage)
        ref = np.array([ordent.brute_force_theta(t, m, l, passage) for l in range(m + 1)])
        worst = max(worst, float(np.max(np.abs(pmf - ref))))
    out.append(_close("theorem3", f"theta_vs_bruteforce[{n_inst} instances]", worst, 0.0, 1e-12))

    inp = iidorder.deadline_input(1.0, 3.0)
    g = ExponentialPassage(1.0)
    alt = iidorder.delta_gamma(inp, g, 6, 2, "quadrature")
    diff = iidorder.gamma_Ml(inp, g, 6, 2) - iidorder.gamma_Ml(inp, g, 6, 3)
    out.append(_close("theorem3", "delta_gamma_forms[M=6,l=2]", alt, diff, 1e-9))

    u = UniformPassage.with_mean(1.0)
    inp = iidorder.deadline_input(1.0, 2.0)
    for M in (3, 4, 5):
        sc = mc.SimConfig(M, u, inp, cfg.reps, cfg.seed, cfg.workers)
        h = mc.estimate_ordering_entropy(sc)
        up = mc.estimate_h_up_exact(sc)
        out.append(_at_most("theorem3", f"uniform_passage_bound[M={M}]", h.mean, up.mean, 3.0 * math.hypot(h.std_error, up.std_error)))
    return out


def _equality(suite, cfg, M, inp, closed):
    sc = mc.SimConfig(M, ExponentialPassage(1.0), inp, cfg.reps, cfg.seed, cfg.workers)
    e = mc.estimate_ordering_entropy(sc)
    return _close(suite, f"mc_equality[M={M}]", e.mean, closed, 3.0 * e.std_error)


def theorem4(cfg: Settings) -> list[CheckResult]:
    mu, tau = 1.0, 1.0
    g = ExponentialPassage(mu)
    inp = iidorder.mean_constraint_input(mu, tau)
    out = []
    for M in range(1, 13):
        cf = iidorder.ordering_entropy_mean_constraint(mu, tau, M)
        out.append(_close("theorem4", f"pipeline[M={M}]", iidorder.h_up_iid(inp, g, M, "quadrature"), cf, 1e-8))
    for M in range(2, 7):
        out.append(_equality("theorem4", cfg, M, inp, iidorder.ordering_entropy_mean_constraint(mu, tau, M)))
    return out


def theorem5(cfg: Settings) -> list[CheckResult]:
    mu, tau = 1.0, 2.0
    g = ExponentialPassage(mu)
    inp = iidorder.deadline_input(mu, tau)
    out = []
    for M in range(1, 13):
        cf = iidorder.ordering_entropy_deadline(mu, tau, M)
        out.append(_close("theorem5", f"pipeline[M={M}]", iidorder.h_up_iid(inp, g, M, "quadrature"), cf, 1e-8))
    out.append(
        _close("theorem5", "dual_route[M=3]", iidorder.ordering_entropy_deadline_sum(mu, tau, 3), iidorder.ordering_entropy_deadline(mu, tau, 3), 1e-12)
    )
    for M in range(2, 7):
        out.append(_equality("theorem5", cfg, M, inp, iidorder.ordering_entropy_deadline(mu, tau, M)))
    return out


def _asymptotic(suite, case, limit):
    out = []
    for rho in (0.5, 1.0, 2.0):
        lim = limit(rho)
        fin = iidorder.finite_m_per_token(case, rho, 2000)
        out.append(_close(suite, f"finite_M2000_rel_gap[rho={rho:g}]", fin / lim - 1.0, 0.0, 0.01))
    return out


def theorem6(cfg: Settings) -> list[CheckResult]:
    return _asymptotic("theorem6", "mean", iidorder.asymptotic_mean)


def theorem7(cfg: Settings) -> list[CheckResult]:
    return _asymptotic("theorem7", "deadline", iidorder.asymptotic_deadline)


def theorem8(cfg: Settings) -> list[CheckResult]:
    """Jensen bound ``M log(1 + (M-1) gamma_T / 2)`` vs ``E_t[h_up_exact]``."""
    out = []
    g = ExponentialPassage(1.0)
    for label, inp in (("uniform", iidorder.uniform_input(3.0)), ("deadline", iidorder.deadline_input(1.0, 3.0))):
        gT = bounds.gamma_T_iid(inp, 1.0)
        for M in range(3, 9):
            est = mc.estimate_h_up_exact(mc.SimConfig(M, g, inp, cfg.reps, cfg.seed, cfg.workers))
            out.append(_at_most("theorem8", f"dominance[{label},M={M}]", est.mean, bounds.h_up_gamma_bound(M, gT), 3.0 * est.std_error))
    return out


def theorem9(cfg: Settings) -> list[CheckResult]:
    out = []
    inp = iidorder.uniform_input(1.0)
    g = ExponentialPassage(1.0)
    sc = mc.SimConfig(4, g, inp, cfg.reps, cfg.seed, cfg.workers)
    gS = mc.estimate_gamma(sc, "S")
    out.append(_at_least("theorem9", "gamma_S_vs_half_gamma_T[mu_tau=1]", gS.mean, bounds.gamma_S_lower(bounds.Z(1.0)), 3.0 * gS.std_error))
    gT = mc.estimate_gamma(sc, "T")
    out.append(_close("theorem9", "gamma_T_vs_Z[mu_tau=1]", gT.mean, bounds.Z(1.0), 3.0 * gT.std_error))

    M, tau = 5, 2.0
    v = mc.estimate_gamma_variance(mc.SimConfig(M, g, iidorder.uniform_input(tau), cfg.variance_reps, cfg.seed, cfg.workers))
    out.append(_close("theorem9", "gamma_S0_prime_reference_vs_mc[M=5,tau=2]", v.mean, bounds.gamma_S0_prime(1.0, tau, M) * M * (M - 1), 3.0 * v.std_error))
    out.append(_close("theorem9", "gamma_S0_prime_exact_vs_mc[M=5,tau=2]", v.mean, bounds.gamma_S0_prime_exact(1.0, tau, M) * M * (M - 1), 3.0 * v.std_error))
    return out


def theorem10(cfg: Settings) -> list[CheckResult]:
    out = []
    M = 10**4
    for rho in (0.1, 1.0, 10.0):
        x = M / rho
        out.append(_close("theorem10", f"M_Z_rel_gap[rho={rho:g}]", M * bounds.Z(x) / (2 * rho) - 1.0, 0.0, 0.01))
    x = M / 1.0
    out.append(_close("theorem10", "Mm1_gamma_prime_rel_gap[rho=1]", (M - 1) * bounds.gamma_S0_prime(1.0, x, M) / 10.0 - 1.0, 0.0, 0.01))
    out.append(_close("theorem10", "cq_upper[rho=1]", bounds.cq_upper(1.0), math.log(5.0), 0.0))
    rng = make_stream(cfg.seed, 10)
    worst = 0.0
    for rho in rng.uniform(1e-3, 1e3, 100):
        worst = max(worst, abs((8 * rho**2 + 2 * rho) * bounds.beta_tilde(rho) + 2 * rho - 4 * rho) / (4 * rho))
    out.append(_close("theorem10", "beta_tilde_identity[100 rho]", worst, 0.0, 1e-12))
    for rho in (0.1, 1.0, 10.0):
        out.append(_at_least("theorem10", f"cq_dominates_single_token[rho={rho:g}]", bounds.cq_upper(rho), bounds.single_token_rate(rho, 2000), 0.0))
    return out


REGISTRY: dict[str, Callable[[Settings], list[CheckResult]]] = {
    "theorem1": theorem1,
    "theorem2": theorem2,
    "theorem3": theorem3,
    "theorem4": theorem4,
    "theorem5": theorem5,
    "theorem6": theorem6,
    "theorem7": theorem7,
    "theorem8": theorem8,
    "theorem9": theorem9,
    "theorem10": theorem10,
}


def run(suite: str, cfg: Settings = Settings()) -> list[CheckResult]:
    if suite == "all":
        return [r for name in SUITES for r in REGISTRY[name](cfg)]
    if suite not in REGISTRY:
        raise KeyError(f"unknown suite {suite!r}")
    return REGISTRY[suite](cfg)
