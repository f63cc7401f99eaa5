"""Joint continuous-state / discrete-mode smoothing for switched systems.

The core estimator minimizes a relaxed maximum-a-posteriori objective over
both a state trajectory and per-step mode weights on the probability
simplex: mode weights are eliminated by an accelerated projected-gradient
inner solve, and the states follow Gauss-Newton steps built from reweighted
dynamics blocks.  A hybrid hopping-robot test bench (simulator, scenario
harness, CLI) exercises the estimator end to end.
"""

from .errors import (
    BadHyperparameter,
    DimensionMismatch,
    FactorizationFailure,
    InfeasibleW,
    InitialStateOutsideDomain,
    NoValidMode,
    NonFiniteModelOutput,
    NonFiniteState,
    NonPositiveDefinite,
    SchemaMismatch,
    SwitchSmoothError,
)
from .gauss_newton import (
    BlockTridiagonal,
    ConvergenceReport,
    assemble_U,
    estimate,
    line_search,
    solve_block_tridiagonal,
    solve_direction,
)
from .harness import (
    RunMetrics,
    RunResult,
    ScenarioConfig,
    compute_metrics,
    config_from_dict,
    load_config,
    run_ablation,
    run_scenario,
    simulate_scenario,
)
from .inner import WSolveResult, project_simplex, round_to_onehot, solve_w, value_and_grad
from .model import (
    EstimationProblem,
    InnerParams,
    JacobianCheck,
    LineSearchParams,
    SwitchedSystem,
    TrajectoryEstimate,
    jacobian_selfcheck,
    validate_problem,
)
from .objective import full_objective, gaussian_nll, process_eval, student_t_nll
from .oscillators import (
    HopperParams,
    HybridAutomaton,
    LinearSpring,
    MeasurementMap,
    SimRecord,
    StiffeningSpring,
    build_system,
    linear_hopper,
    measurement_by_name,
    measurement_pos,
    measurement_relative,
    nonlinear_hopper,
    simulate,
)

__version__ = "0.1.0"

__all__ = [
    "BadHyperparameter",
    "BlockTridiagonal",
    "ConvergenceReport",
    "DimensionMismatch",
    "EstimationProblem",
    "FactorizationFailure",
    "HopperParams",
    "HybridAutomaton",
    "InfeasibleW",
    "InitialStateOutsideDomain",
    "InnerParams",
    "JacobianCheck",
    "LinearSpring",
    "LineSearchParams",
    "MeasurementMap",
    "NoValidMode",
    "NonFiniteModelOutput",
    "NonFiniteState",
    "NonPositiveDefinite",
    "RunMetrics",
    "RunResult",
    "ScenarioConfig",
    "SchemaMismatch",
    "SimRecord",
    "StiffeningSpring",
    "SwitchSmoothError",
    "SwitchedSystem",
    "TrajectoryEstimate",
    "WSolveResult",
    "assemble_U",
    "build_system",
    "compute_metrics",
    "config_from_dict",
    "estimate",
    "full_objective",
    "gaussian_nll",
    "jacobian_selfcheck",
    "line_search",
    "linear_hopper",
    "load_config",
    "measurement_by_name",
    "measurement_pos",
    "measurement_relative",
    "nonlinear_hopper",
    "process_eval",
    "project_simplex",
    "round_to_onehot",
    "run_ablation",
    "run_scenario",
    "simulate",
    "simulate_scenario",
    "solve_block_tridiagonal",
    "solve_direction",
    "solve_w",
    "student_t_nll",
    "validate_problem",
    "value_and_grad",
]
