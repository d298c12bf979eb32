"""Monocular trajectory reconstruction.

Recovers the 3D path of a moving point from timestamped sight-rays observed
by a single moving camera with known poses, by fitting temporal polynomials
through a ridge-regularized linear system.  Includes automatic order
selection, reconstructability diagnostics, and a seeded Monte Carlo
simulation harness.
"""

from .errors import (
    ConfigError,
    DegenerateGeometryError,
    DegenerateScenarioError,
    IndeterminateError,
    InsufficientDofError,
    InvalidInputError,
    MonotrajError,
    NumericalError,
    RankDeficientError,
    SchemaError,
    TimeMismatchError,
    TooFewObservationsError,
)
from .geometry import (
    CameraIntrinsics,
    CameraPose,
    Observation,
    ResidualProjector,
    compute_sight_ray,
    point_to_ray_distance,
    residual_projector,
)
from .trajectory import (
    DesignBlock,
    PolynomialTrajectory,
    design_block,
    eval_trajectory,
    min_observations,
    rescale_coefficients,
    stacked_design,
)
from .estimator import (
    METHOD_LEAST_SQUARES,
    METHOD_RIDGE,
    SolveReport,
    StackedSystem,
    assemble_system,
    hkb_ridge_parameter,
    ray_direction_errors,
    ridge_solution,
    select_order,
    solve_least_squares,
    solve_ridge,
)
from .reconstructability import (
    DegeneracyReport,
    StackedTrajectory,
    detect_degeneracy,
    null_space_residual,
    reconstructability_index,
)
from .simulate import (
    CameraPath,
    ExperimentResult,
    MethodOutcome,
    NoiseSpec,
    ScenarioSpec,
    TargetMotion,
    TrialResult,
    apply_noise,
    generate_scenario,
    mix64,
    occlude,
    run_experiment,
    trial_streams,
)
from .experiments import ExperimentConfig, load_config, parse_config, run_config

__version__ = "0.1.0"

__all__ = [
    "CameraIntrinsics",
    "CameraPath",
    "CameraPose",
    "ConfigError",
    "DegeneracyReport",
    "DegenerateGeometryError",
    "DegenerateScenarioError",
    "DesignBlock",
    "ExperimentConfig",
    "ExperimentResult",
    "IndeterminateError",
    "InsufficientDofError",
    "InvalidInputError",
    "METHOD_LEAST_SQUARES",
    "METHOD_RIDGE",
    "MethodOutcome",
    "MonotrajError",
    "NoiseSpec",
    "NumericalError",
    "Observation",
    "PolynomialTrajectory",
    "RankDeficientError",
    "ResidualProjector",
    "ScenarioSpec",
    "SchemaError",
    "SolveReport",
    "StackedSystem",
    "StackedTrajectory",
    "TargetMotion",
    "TimeMismatchError",
    "TooFewObservationsError",
    "TrialResult",
    "apply_noise",
    "assemble_system",
    "compute_sight_ray",
    "design_block",
    "detect_degeneracy",
    "eval_trajectory",
    "generate_scenario",
    "hkb_ridge_parameter",
    "load_config",
    "min_observations",
    "mix64",
    "null_space_residual",
    "occlude",
    "parse_config",
    "point_to_ray_distance",
    "ray_direction_errors",
    "reconstructability_index",
    "rescale_coefficients",
    "residual_projector",
    "ridge_solution",
    "run_config",
    "run_experiment",
    "select_order",
    "solve_least_squares",
    "solve_ridge",
    "stacked_design",
    "trial_streams",
]
