"""Attack-resilient longitudinal platooning.

Gain synthesis for a saturation-aware spacing controller, a bounded
feed-forward safety filter, a residual attack detector, a topology
coordinator, a two-lane rearrangement supervisor and a deterministic
simulation harness.
"""

from .attacks import AttackSpec, CommFrame, DeltaVec
from .control import FilterBranch, acc_control, cacc_control, safety_filter, u_ff_max
from .coordinator import TopologyMatrix, check_conditions, solve_topology, tie_break
from .detector import DetectorState, detector_step
from .dynamics import ActuationLimits, PlatoonParams, VehicleState, saturate, step
from .gains import ControllerGains, compute_c, compute_k, string_stability_ok, tune_gains

__version__ = "0.1.0"

__all__ = [
    "ActuationLimits", "AttackSpec", "CommFrame", "ControllerGains", "DeltaVec", "DetectorState",
    "FilterBranch", "PlatoonParams", "TopologyMatrix", "VehicleState", "acc_control",
    "cacc_control", "check_conditions", "compute_c", "compute_k", "detector_step",
    "safety_filter", "saturate", "solve_topology", "step", "string_stability_ok", "tie_break",
    "tune_gains", "u_ff_max",
]
