"""Large deviations of the stationary measures of the damped stochastic nonlinear wave
equation: equilibria, quasipotentials, rate function and Monte Carlo verification."""

import importlib.metadata

from .action import (
    ControlPath,
    MAMOptions,
    MAMResult,
    action_gradient,
    action_J,
    quasipotential,
    quasipotential_avoiding,
    quasipotential_from_attractor,
    quasipotential_matrix,
)
from .common import (
    BudgetError,
    DivergenceError,
    InvalidStateError,
    QuadratureRangeError,
    UnsupportedNonlinearityError,
)
from .dynamics import (
    EquilibriumSet,
    Trajectory,
    classify_stability,
    feedback_control,
    find_equilibria,
    flow_controlled,
    flow_deterministic,
    heteroclinic_scan,
    perturbation_bound_fit,
)
from .example import example_experiment, example_experiment_to_file
from .fwgraph import QuasipotentialMatrix, W, enumerate_chains, rate_function, rate_function_table
from .harness import (
    ExperimentConfig,
    LdpReport,
    attractor_bound_check,
    emit,
    ldp_verify,
    stochastic_stability_check,
    tightness_check,
    transition_vs_vtilde,
)
from .model import ModelConfig
from .nonlinearity import NonlinearitySpec, fact_double_well, fact_polynomial, validate_nonlinearity
from .spectral import NoiseSpec, SpectralBasis, State, energy, norm_H, norm_Htheta, project_PN
from .stochastic import (
    Ball,
    NeighborhoodSystem,
    boundary_chain_run,
    estimate_stationary,
    estimate_transition,
    exit_time_moments,
    exponential_moment_check,
    simulate,
)


def _version() -> str:
    try:
        return importlib.metadata.version(__package__ or __name__)
    except importlib.metadata.PackageNotFoundError:  # source checkout, not installed
        return "unknown"


__version__ = _version()
