"""Nonnegativity-preserving Euler scheme for diffusions, with Gaussian competitor
schemes, reference pricers and a reproducible Monte Carlo engine."""

__version__ = "0.1.0"

from .analytic import QuadratureConfig, black_scholes_call, black_scholes_put, cir_bond_price, heston_call_price
from .engine import ExperimentConfig, McEstimate, RateEstimate, convergence_rate, run_experiment, run_table
from .errors import (
    ConfigError,
    DomainError,
    InfeasibleCorrelationError,
    InfeasibleError,
    NumericalError,
    SchemeError,
)
from .increments import (
    BivariateTwoPointLaw,
    GaussianLaw,
    LinearMixLaw,
    TwoPointLaw,
    make_bivariate_two_point,
    make_linear_mix,
    make_two_point,
    sample,
    verify_moments,
)
from .models import CEV, CIR, GBM, Affine, GarchSV, Heston, TwoFactorCIR, check_feasible, feasibility_window
from .payoffs import PathFunctional, PayoffKind, evaluate, put_call_parity_call, truncate
from .schemes import Interpolation, Scheme, interpolate, lattice_specialize, simulate_path, simulate_paths, step
from .streams import SeededStream
