"""Per-vehicle control: linear ACC feedback, feed-forward, safety filter, ACC/CACC switch."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Callable

from .dynamics import (
    ActuationLimits,
    NonFiniteError,
    PlatoonParams,
    RelativeState,
    VehicleState,
    relative_state,
    saturate,
)
from .gains import ControllerGains


class FilterBranch(str, Enum):
    EMERGENCY_CUTOFF = "EmergencyCutoff"
    CLIPPED = "Clipped"
    PASS_THROUGH = "PassThrough"
    SWITCHED_OFF = "SwitchedOff"


@dataclass(frozen=True)
class ControlCommand:
    u_lin: float
    u_ff_raw: float
    u_ff: float
    sigma: int
    u_total: float
    filter_branch: FilterBranch


def acc_control(ego: VehicleState, pred: VehicleState, gains: ControllerGains,
                params: PlatoonParams, v_ref: float | None = None) -> float:
    """Unsaturated linear spacing law.

    ``v_ref`` overrides the cruise velocity (used while rearranging lanes).
    """
    v_ref = params.v_des if v_ref is None else v_ref
    k = gains.k
    return (-k * (ego.p - pred.p + params.d)
            - k * gains.h * (ego.v - v_ref)
            - gains.c * (ego.v - pred.v))


def speed_tracking_control(v: float, v_ref: float, gains: ControllerGains) -> float:
    """Velocity-only law used by the leader and by vehicles with nobody to follow."""
    return -gains.k * gains.h * (v - v_ref)


FeedForwardPolicy = Callable[[float], float]


def identity_policy(u_pred_received: float) -> float:
    if not math.isfinite(u_pred_received):
        raise NonFiniteError(f"received acceleration is not finite: {u_pred_received!r}")
    return u_pred_received


def compensating_policy(v_ego: float, gains: ControllerGains,
                        params: PlatoonParams) -> FeedForwardPolicy:
    """Feed-forward that also cancels the absolute damping term.

    With it the follower tracks the relative position exactly instead of
    damping absolute velocity oscillations.
    """
    extra = gains.k * gains.h * (v_ego - params.v_des)

    def policy(u_pred_received: float) -> float:
        return identity_policy(u_pred_received) + extra

    return policy


def feedforward_policy(u_pred_received: float,
                       policy: FeedForwardPolicy = identity_policy) -> float:
    return policy(u_pred_received)


def u_ff_max(v: float, gains: ControllerGains, params: PlatoonParams,
             v_ref: float | None = None) -> float:
    v_ref = params.v_des if v_ref is None else v_ref
    return gains.k * (gains.alpha * params.d + gains.h * (v - v_ref))


def safety_filter(u_ff_raw: float, rel: RelativeState, v: float, gains: ControllerGains,
                  params: PlatoonParams, v_ref: float | None = None
                  ) -> tuple[float, FilterBranch]:
    # order of the three branches matters: the cutoff wins over clipping
    if rel.p_tilde >= params.d - (gains.c / gains.k) * rel.v_tilde:
        return 0.0, FilterBranch.EMERGENCY_CUTOFF
    cap = u_ff_max(v, gains, params, v_ref)
    if u_ff_raw >= cap:
        return cap, FilterBranch.CLIPPED
    return u_ff_raw, FilterBranch.PASS_THROUGH


def cacc_control(ego: VehicleState, pred: VehicleState, u_pred_received: float | None,
                 sigma: int, gains: ControllerGains, params: PlatoonParams,
                 limits: ActuationLimits, policy: FeedForwardPolicy = identity_policy,
                 v_ref: float | None = None) -> ControlCommand:
    """Full follower command.

    ``u_pred_received=None`` models a missing frame (denial of service) and
    behaves like ``sigma=0`` for this step.
    """
    u_lin = acc_control(ego, pred, gains, params, v_ref)
    if not math.isfinite(u_lin):
        raise NonFiniteError(f"linear control is not finite: {u_lin!r}")
    if sigma == 0 or u_pred_received is None:
        raw = 0.0 if u_pred_received is None else policy(u_pred_received)
        return ControlCommand(u_lin, raw, 0.0, 0, saturate(u_lin, limits),
                              FilterBranch.SWITCHED_OFF)
    raw = policy(u_pred_received)
    u_ff, branch = safety_filter(raw, relative_state(pred, ego, params.d), ego.v,
                                 gains, params, v_ref)
    return ControlCommand(u_lin, raw, u_ff, 1, saturate(u_lin + u_ff, limits), branch)


def leader_command(v: float, v_ref: float, gains: ControllerGains, limits: ActuationLimits,
                   emergency: bool = False) -> ControlCommand:
    if emergency:
        u = limits.u_min
        return ControlCommand(u, 0.0, 0.0, 0, u, FilterBranch.SWITCHED_OFF)
    u_lin = speed_tracking_control(v, v_ref, gains)
    return ControlCommand(u_lin, 0.0, 0.0, 0, saturate(u_lin, limits),
                          FilterBranch.SWITCHED_OFF)
