"""Closed-loop simulator and verification harness for a singularity-free
adaptive backstepping controller of a planar bicopter."""

from .controller import (
    ControllerConfig,
    ControllerDiagnostics,
    EstimatorState,
    control_u,
)
from .model import (
    PhysicalParams,
    PlantState,
    SingularInputMap,
    plant_deriv,
)
from .presets import PRESETS, Preset, get_preset
from .sim import (
    AugmentedState,
    LyapunovBreakdown,
    NonFiniteState,
    SimRecord,
    SingularGuardTripped,
    closed_loop_deriv,
    lyapunov_v4,
    rk4_step,
    simulate,
    v4_dot_analytic,
    v4_dot_reference_correction,
)

__version__ = "0.1.0"

__all__ = [
    "AugmentedState",
    "ControllerConfig",
    "ControllerDiagnostics",
    "EstimatorState",
    "LyapunovBreakdown",
    "NonFiniteState",
    "PRESETS",
    "PhysicalParams",
    "PlantState",
    "Preset",
    "SimRecord",
    "SingularGuardTripped",
    "SingularInputMap",
    "closed_loop_deriv",
    "control_u",
    "get_preset",
    "lyapunov_v4",
    "plant_deriv",
    "rk4_step",
    "simulate",
    "v4_dot_analytic",
    "v4_dot_reference_correction",
]
