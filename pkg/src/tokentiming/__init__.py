"""Timing-channel capacity and ordering entropy for token-based communication."""

__version__ = "0.1.0"

from .dist import (  # noqa: F401
    Atom,
    ExponentialPassage,
    FirstPassageModel,
    JumpConvention,
    MixedDensity1D,
    Piece,
    UniformPassage,
    convolve,
    eval_cdf,
    make_stream,
    mixed_expectation,
    sample,
)
from .deadline import (  # noqa: F401
    CapacityGrid,
    ConvergenceError,
    DeadlineChannel,
    capacity,
    numeric_capacity,
    optimal_input,
    optimal_output,
    optimal_sigma,
    variational_check,
)
from .ordent import (  # noqa: F401
    ArrivalRealization,
    LaunchVector,
    OrderingPMF,
    brute_force_theta,
    ell_pmf,
    feasible_count,
    h_up_exact,
    posterior_ordering_entropy,
    theta_pmf,
)
from .iidorder import (  # noqa: F401
    BinomialSpec,
    IIDInput,
    MeanConstraintInput,
    asymptotic_deadline,
    asymptotic_mean,
    deadline_input,
    delta_gamma,
    gamma_Ml,
    h_up_iid,
    mean_constraint_input,
    ordering_entropy_deadline,
    ordering_entropy_mean_constraint,
    phi,
    uniform_input,
)
from .bounds import (  # noqa: F401
    BetaPoint,
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
)
from .mc import Estimate, SimConfig, estimate_gamma, estimate_gamma_variance, estimate_ordering_entropy  # noqa: F401
