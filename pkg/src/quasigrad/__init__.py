"""Outlier-robust estimation by reweighting samples over the deleted simplex.

The package reweights n samples with weights q in the set
{q : sum q_i = 1, 0 <= q_i <= 1/((1-eps) n)} so that a task objective F(q)
(spectral norm of the weighted covariance, hypercontractivity ratio, residual
noise level) becomes small. The filter and the explicit low-regret (MWU)
algorithms are provided together with landscape checks and simulators.
"""

from .core import (
    JOINT,
    MEAN_BOUNDED,
    MEAN_IDENTITY,
    REGRESSION,
    DegenerateSupportError,
    DimensionError,
    EstimateReport,
    IterationRecord,
    NonTerminationError,
    ParameterError,
    PreconditionError,
    PruningCollapseError,
    QuasigradError,
    RunTrace,
    StalledGradientError,
    TaskObjective,
    TotalCollapseError,
    WeightedDataset,
    WeightError,
    ZeroWeightError,
    deletion_cap,
    in_deleted_simplex,
    tv_discrete,
    uniform,
    uniform_on,
    weighted_moments,
)
from .geometry import (
    generalized_rayleigh_sup,
    project_kl_deleted_simplex,
    quartic_ratio_grid,
    quartic_ratio_sup,
    rayleigh_grid,
    top_eigendirection,
)
from .landscape import (
    approx_ratio_certificate,
    build_breakdown_example,
    build_hyper_counterexample,
    stationarity_check,
)
from .objectives import (
    eval_joint,
    eval_mean_bounded,
    eval_mean_identity,
    eval_regression,
    quasigradient_condition,
)
from .sim import ScenarioSpec, error_metrics, generate, sweep
from .solvers import (
    SolverConfig,
    filter_solve,
    identity_solve,
    invariance_monitor,
    mwu_solve,
    naive_prune,
    prune_and_center,
    regression_solve,
    solve,
)

__version__ = "0.1.0"
