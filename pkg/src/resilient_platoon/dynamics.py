"""Longitudinal point-mass dynamics shared by every vehicle in the platoon.

Vehicles are double integrators controlled in acceleration. Time stepping
uses semi-implicit Euler: the velocity is advanced and clamped to
``[0, v_max]`` first, then the position moves with the realized velocity.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

G = 9.81
DEFAULT_DT = 0.05


class NonFiniteError(ValueError):
    """Raised when a state or input contains NaN or infinity."""


def _require_finite(**values: float) -> None:
    for name, value in values.items():
        if not math.isfinite(value):
            raise NonFiniteError(f"{name} must be finite, got {value!r}")


@dataclass(frozen=True)
class ActuationLimits:
    u_min: float
    u_max: float
    v_max: float

    def __post_init__(self):
        _require_finite(u_min=self.u_min, u_max=self.u_max, v_max=self.v_max)
        if not self.u_min < 0.0 < self.u_max:
            raise ValueError(f"need u_min < 0 < u_max, got {self.u_min}, {self.u_max}")
        if self.v_max <= 0.0:
            raise ValueError(f"v_max must be positive, got {self.v_max}")

    @classmethod
    def from_g(cls, brake_g: float, accel_g: float, v_max: float) -> "ActuationLimits":
        """Limits expressed as fractions of gravity, e.g. ``from_g(0.8, 0.5, 27.78)``."""
        return cls(u_min=-brake_g * G, u_max=accel_g * G, v_max=v_max)


@dataclass(frozen=True)
class PlatoonParams:
    d: float
    v_des: float
    n: int = 2

    def __post_init__(self):
        _require_finite(d=self.d, v_des=self.v_des)
        if self.d <= 0.0:
            raise ValueError(f"desired spacing d must be positive, got {self.d}")
        if self.v_des <= 0.0:
            raise ValueError(f"v_des must be positive, got {self.v_des}")
        if self.n < 1:
            raise ValueError(f"platoon needs at least one vehicle, got n={self.n}")

    def check_against(self, limits: ActuationLimits) -> None:
        if self.v_des >= limits.v_max:
            raise ValueError(f"v_des={self.v_des} must be below v_max={limits.v_max}")


@dataclass(frozen=True)
class VehicleState:
    p: float
    v: float


@dataclass(frozen=True)
class RelativeState:
    p_tilde: float
    v_tilde: float

    def gap(self, d: float) -> float:
        """Bumper-free distance to the predecessor; negative means collision."""
        return d - self.p_tilde


def saturate(u: float, limits: ActuationLimits) -> float:
    if u < limits.u_min:
        return limits.u_min
    if u > limits.u_max:
        return limits.u_max
    return u


def step(state: VehicleState, u: float, dt: float, limits: ActuationLimits) -> VehicleState:
    """Advance one vehicle by ``dt`` under a (pre-saturated) acceleration."""
    if not (math.isfinite(state.p) and math.isfinite(state.v) and math.isfinite(u)
            and math.isfinite(dt)):
        _require_finite(p=state.p, v=state.v, u=u, dt=dt)
    if dt <= 0.0:
        raise ValueError(f"dt must be positive, got {dt}")
    v = state.v + u * dt
    if v < 0.0:
        v = 0.0
    elif v > limits.v_max:
        v = limits.v_max
    return VehicleState(p=state.p + v * dt, v=v)


def relative_state(pred: VehicleState, ego: VehicleState, d: float) -> RelativeState:
    return RelativeState(p_tilde=ego.p - pred.p + d, v_tilde=ego.v - pred.v)
