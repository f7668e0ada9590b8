"""Constant-gain Kalman observer on the relative velocity and its residual alarm.

The observer predicts the relative velocity from the ego's own acceleration
and the acceleration advertised by the predecessor, then corrects with the
measured relative velocity. Since measurements are trusted and only the
advertised acceleration can be forged, a persistent gap between prediction
and measurement flags the inbound channel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

from .dynamics import NonFiniteError

# default tuning used for the robot-scale experiments
DEFAULT_K = 0.05
DEFAULT_R_BAR = 0.75
DEFAULT_PERSISTENCE = 0.5


@dataclass(frozen=True)
class DetectorState:
    v_hat: float = 0.0
    K: float = DEFAULT_K
    r_bar: float = DEFAULT_R_BAR
    persistence: float = DEFAULT_PERSISTENCE
    exceed_clock: float = 0.0
    exceed_steps: int = 0
    sigma: int = 1
    latched: bool = False
    initialized: bool = False

    def __post_init__(self):
        if not 0.0 < self.K < 1.0:
            raise ValueError(f"Kalman gain must lie in (0, 1), got {self.K}")
        if self.r_bar <= 0.0:
            raise ValueError(f"threshold must be positive, got {self.r_bar}")
        if self.persistence < 0.0:
            raise ValueError(f"persistence must be non-negative, got {self.persistence}")


def _steps_needed(persistence: float, dt: float) -> int:
    # counted in whole steps so that 10 x 0.05 s really reaches 0.5 s
    return max(1, math.ceil(persistence / dt - 1e-9))


def detector_step(state: DetectorState, u_ego: float, u_pred_received: float,
                  v_tilde_measured: float, dt: float) -> tuple[DetectorState, float]:
    """One predict/correct cycle; returns the new state and the residual."""
    for name, x in (("u_ego", u_ego), ("u_pred_received", u_pred_received),
                    ("v_tilde_measured", v_tilde_measured), ("dt", dt)):
        if not math.isfinite(x):
            raise NonFiniteError(f"{name} must be finite, got {x!r}")
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if not state.initialized:
        return replace(state, v_hat=v_tilde_measured, initialized=True), 0.0

    prior = state.v_hat + dt * (u_ego - u_pred_received)
    # same as (1-K)*prior + K*meas, written so that prior == meas gives meas exactly
    v_hat = prior + state.K * (v_tilde_measured - prior)
    r = abs(v_hat - v_tilde_measured)

    if r > state.r_bar:
        steps = state.exceed_steps + 1
    else:
        steps = 0
    sigma, latched = state.sigma, state.latched
    if not latched and r > state.r_bar and steps >= _steps_needed(state.persistence, dt):
        sigma, latched = 0, True
    return replace(state, v_hat=v_hat, exceed_steps=steps, exceed_clock=steps * dt,
                   sigma=sigma, latched=latched), r


def reset_detector(state: DetectorState, v_tilde_measured: float | None = None) -> DetectorState:
    """Re-trust the channel; the estimate restarts from the current measurement."""
    if v_tilde_measured is None:
        return replace(state, exceed_clock=0.0, exceed_steps=0, sigma=1, latched=False,
                       initialized=False)
    return replace(state, v_hat=v_tilde_measured, exceed_clock=0.0, exceed_steps=0,
                   sigma=1, latched=False, initialized=True)


def steady_state_residual(delta: float, K: float, dt: float) -> float:
    """Residual reached under a constant bias ``delta`` on the advertised acceleration."""
    return abs(delta) * dt * (1.0 - K) / K


def residual_after(delta: float, K: float, dt: float, m: int) -> float:
    """Residual after ``m`` steps of a constant bias, starting from a zero error."""
    return abs(delta) * dt * (1.0 - K) * (1.0 - (1.0 - K) ** m) / K


def min_detectable_bias(r_bar: float, K: float, dt: float) -> float:
    """Smallest constant bias whose steady-state residual exceeds ``r_bar``."""
    return r_bar * K / (dt * (1.0 - K))
