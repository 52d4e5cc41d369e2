"""Extended Kalman and density-based Monte Carlo filtering of a stochastic
one-compartment PK model, with simulation-based GA parameter estimation."""

from .dmf import ParticleEnsemble, dmf_filter, filtered_estimate, init_ensemble, obs_density, propagate, update_weights
from .ekf import EkfState, EkfStepReport, ekf_filter, ekf_step, iter_ekf, jacobians
from .errors import (
    DegenerateWeightsError,
    DomainError,
    LossEvaluationError,
    OptimizationFailedError,
    PkFilterError,
    SingularInnovationError,
    StepError,
    UndefinedECError,
)
from .ga import GaConfig, GaResult, ParamSpace, Population, run_ga
from .harness import ExperimentConfig, QuantileTable, mae, maep, quantiles, rd, run_estimation_study, run_filter_comparison
from .loss import FilterKind, LossConfig, LossFunction, loss_L, rho, simulate_replicates
from .model import (
    DEFAULT_C0,
    DEFAULT_GRID,
    DEFAULT_PARAMS,
    DEFAULT_Q0,
    NoisePair,
    PkParams,
    TimeGrid,
    Trajectory,
    drift_q,
    euler_step,
    simulate_trajectory,
)

__version__ = "0.1.0"
