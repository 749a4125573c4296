"""Monte Carlo experiment engine: estimators, plans and figures."""

from .estimates import (
    EstimateRecord,
    EstimationError,
    box_crossing_suite,
    circuit_suite,
    estimate_crossing,
    estimate_pc,
    kesten_inequality_check,
    one_arm_suite,
    single_tree_suite,
    wilson_interval,
)
from .plan import ExperimentPlan, PlanError, run_plan

__all__ = [
    "EstimateRecord",
    "EstimationError",
    "ExperimentPlan",
    "PlanError",
    "box_crossing_suite",
    "circuit_suite",
    "estimate_crossing",
    "estimate_pc",
    "kesten_inequality_check",
    "one_arm_suite",
    "run_plan",
    "single_tree_suite",
    "wilson_interval",
]
