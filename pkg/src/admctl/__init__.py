"""Admission control for inelastic flows on a link shared with a deadline-driven elastic flow."""

from ._kernels import BACKEND as KERNEL_BACKEND
from .errors import CalibrationError, CapacityError, DomainError, NumericError, ValidationError
from .pipeline import build_control, build_model
from .scenario import (
    ControlSpace,
    Discretization,
    ElasticReward,
    InelasticFlowSpec,
    LinkScenario,
    load_scenario,
    scenario_from_dict,
)
from .ssp import Policy, SspModel, decompose_cost, evaluate_policy, lambda_sweep, solve

__version__ = "0.1.0"

__all__ = [
    "KERNEL_BACKEND",
    "CalibrationError",
    "CapacityError",
    "DomainError",
    "NumericError",
    "ValidationError",
    "build_control",
    "build_model",
    "ControlSpace",
    "Discretization",
    "ElasticReward",
    "InelasticFlowSpec",
    "LinkScenario",
    "load_scenario",
    "scenario_from_dict",
    "Policy",
    "SspModel",
    "decompose_cost",
    "evaluate_policy",
    "lambda_sweep",
    "solve",
]
