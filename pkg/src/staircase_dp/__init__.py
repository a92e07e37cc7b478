"""Staircase noise mechanisms for differential privacy."""

from ._kernels import BACKEND
from .abstract_mech import CandidateScoring, abstract_distribution, abstract_sample
from .costs import CostFunction, ExpectedCost, discrete_cost, laplace_cost, staircase_cost
from .exceptions import AuditFailure, ValidationError
from .mechanisms import (
    LaplaceMechanism,
    PrivacyParams,
    StaircaseContinuous,
    StaircaseDiscrete,
    cdf,
    density,
    geometric,
    sample,
)
from .optimizer import (
    compare_mechanisms,
    discrete_r_opt,
    gamma_heuristic,
    gamma_opt_abs,
    gamma_opt_generic,
    gamma_opt_moment,
    gamma_opt_square,
    optimal_gamma,
)
from .privacy_audit import (
    audit_ratio_continuous,
    audit_ratio_discrete,
    laplace_tradeoff,
    numeric_tradeoff,
    sampler_gof,
)
from .streams import sample_stream, uniform_stream

__version__ = "0.1.0"
