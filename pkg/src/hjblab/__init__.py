"""hjblab: solve, simulate and numerically certify 1-D discounted stochastic
optimal control problems with measurable (possibly discontinuous)
coefficients."""

from ._kernels import BACKEND
from .coeffs import CoefficientExpr, constant, piecewise, poly
from .fields import FeedbackPolicy, SpatialGrid, ValueField, build_grid
from .problems import (
    AdvertisingParams,
    ControlGrid,
    ControlProblem,
    ControlSet,
    builtin_problem,
    load_problem,
    make_advertising_problem,
)
from .sim import (
    ConstantControl,
    CostEstimate,
    SamplePath,
    ScheduleControl,
    SimConfig,
    dynkin_residual,
    estimate_cost,
    exit_time,
    moment_check,
    simulate_path,
)
from .solver import (
    SolveReport,
    SolveResult,
    discretize_row,
    hjb_residual_field,
    policy_evaluation,
    policy_improvement,
    solve_hjb,
)
from .verify import (
    VerificationReport,
    check_lower_bound,
    check_necessary,
    check_optimality,
    check_transversality,
    run_verification,
    uniqueness_cross_check,
)

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "CoefficientExpr",
    "constant",
    "poly",
    "piecewise",
    "SpatialGrid",
    "ValueField",
    "FeedbackPolicy",
    "build_grid",
    "ControlProblem",
    "ControlSet",
    "ControlGrid",
    "AdvertisingParams",
    "make_advertising_problem",
    "builtin_problem",
    "load_problem",
    "SimConfig",
    "SamplePath",
    "CostEstimate",
    "ConstantControl",
    "ScheduleControl",
    "simulate_path",
    "exit_time",
    "estimate_cost",
    "dynkin_residual",
    "moment_check",
    "discretize_row",
    "policy_evaluation",
    "policy_improvement",
    "solve_hjb",
    "hjb_residual_field",
    "SolveReport",
    "SolveResult",
    "VerificationReport",
    "check_transversality",
    "check_lower_bound",
    "check_optimality",
    "check_necessary",
    "uniqueness_cross_check",
    "run_verification",
]
