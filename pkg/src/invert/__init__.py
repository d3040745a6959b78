"""Bayesian inversion of an elliptic diffusion coefficient, three ways.

A parametric diffusion field enters a P1 finite element solver on nested
meshes; observation functionals plus Gaussian noise define a posterior over
the field's coefficients. The package estimates posterior expectations of a
solution quantity of interest with a plain independence-sampler chain, with a
chain running on a precomputed Legendre chaos surrogate, and with a multilevel
telescoping estimator, and cross-checks all three against brute-force tensor
quadrature while metering degrees of freedom and flops.
"""

from .bayes import NoiseModel, PosteriorFamily, PosteriorSpec, synthesize_data
from .errors import (
    ConfigError,
    EllipticityError,
    InfeasibleError,
    SolverFailure,
)
from .fem import (
    ForwardOperator,
    ObservationSet,
    WorkTally,
    fem_level,
    solve,
)
from .field import CoefficientField, builtin_field, eval_K
from .gpc import GpcSurrogate, build_surrogate, load_surrogate, save_surrogate
from .harness import (
    Config,
    build_problem,
    execute,
    fit_rate,
    load_config,
    selftest,
)
from .mlmcmc import MlmcmcSchedule, estimate as mlmcmc_estimate, make_schedule
from .oracle import QuadratureGrid, posterior_expectation_quadrature
from .sampler import EstimateResult, run_estimate

__version__ = "0.1.0"

__all__ = [
    "__version__",
    "builtin_field",
    "CoefficientField",
    "eval_K",
    "fem_level",
    "solve",
    "ForwardOperator",
    "ObservationSet",
    "WorkTally",
    "NoiseModel",
    "PosteriorSpec",
    "PosteriorFamily",
    "synthesize_data",
    "run_estimate",
    "EstimateResult",
    "GpcSurrogate",
    "build_surrogate",
    "save_surrogate",
    "load_surrogate",
    "MlmcmcSchedule",
    "make_schedule",
    "mlmcmc_estimate",
    "QuadratureGrid",
    "posterior_expectation_quadrature",
    "Config",
    "load_config",
    "build_problem",
    "execute",
    "fit_rate",
    "selftest",
    "ConfigError",
    "EllipticityError",
    "SolverFailure",
    "InfeasibleError",
]
