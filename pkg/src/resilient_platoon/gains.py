"""ACC gain synthesis under actuator saturation.

Given the spacing ``d``, the cruise velocity ``v_des`` and the actuation
limits, the position gain ``k`` places the braking-saturation line below the
collision point for every admissible velocity, and the damping gain ``c`` caps
the worst-case relative position reached during an emergency stop at ``d``.
The remaining free parameter ``h`` is swept until the closed loop is string
stable and not underdamped.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .dynamics import ActuationLimits

DEFAULT_H_RESOLUTION = 0.01


class InfeasibleHeadwayError(ValueError):
    """d - h * v_des must stay positive for the gain formulas to make sense."""


class NoFeasibleGainsError(ValueError):
    pass


@dataclass(frozen=True)
class ControllerGains:
    k: float
    h: float
    c: float
    alpha: float = 1.0

    def __post_init__(self):
        if not (self.k > 0 and self.c > 0 and self.h > 0):
            raise ValueError(f"k, h, c must be positive, got {self.k}, {self.h}, {self.c}")
        if not 0.0 <= self.alpha <= 1.0:
            raise ValueError(f"alpha must lie in [0, 1], got {self.alpha}")

    def with_alpha(self, alpha: float) -> "ControllerGains":
        return replace(self, alpha=alpha)


@dataclass(frozen=True)
class StabilityReport:
    ok: bool
    slow_pole: float
    zero: float
    discriminant: float
    violations: tuple[str, ...] = ()

    def __bool__(self) -> bool:
        return self.ok


def _headway_margin(d: float, h: float, v_des: float) -> float:
    margin = d - h * v_des
    if margin <= 0.0:
        raise InfeasibleHeadwayError(
            f"d - h*v_des = {margin:.6g} <= 0 (d={d}, h={h}, v_des={v_des})"
        )
    return margin


def compute_k(d: float, h: float, v_des: float, limits: ActuationLimits) -> float:
    return -limits.u_min / _headway_margin(d, h, v_des)


def compute_c(d: float, h: float, v_des: float, limits: ActuationLimits) -> float:
    return limits.v_max / _headway_margin(d, h, v_des)


def transfer_magnitude(gains: ControllerGains, omega):
    """|G(jw)| of the predecessor-to-follower position transfer function.

    Accepts a scalar or an array of angular frequencies.
    """
    k, h, c = gains.k, gains.h, gains.c
    w2 = np.square(omega)
    num = c * c * w2 + k * k
    den = (k - w2) ** 2 + (c + h * k) ** 2 * w2
    out = np.sqrt(num / den)
    return float(out) if np.ndim(out) == 0 else out


def string_stability_ok(gains: ControllerGains) -> StabilityReport:
    """Check that the slow closed-loop pole lies below the zero and the loop is overdamped.

    Both inequalities are strict; boundary points are rejected.
    """
    k, h, c = gains.k, gains.h, gains.c
    s = c + h * k
    disc = s * s - 4.0 * k
    zero = k / c
    violations = []
    if disc <= 0.0:
        violations.append(f"underdamped: (c+hk)^2 - 4k = {disc:.6g} <= 0")
        slow = s / 2.0
    else:
        slow = 0.5 * s - 0.5 * math.sqrt(disc)
        if not slow < zero:
            violations.append(f"slow pole {slow:.6g} is not below the zero {zero:.6g}")
    return StabilityReport(
        ok=not violations, slow_pole=slow, zero=zero, discriminant=disc,
        violations=tuple(violations),
    )


def gains_for(d: float, h: float, v_des: float, limits: ActuationLimits,
              alpha: float = 1.0) -> ControllerGains:
    return ControllerGains(
        k=compute_k(d, h, v_des, limits),
        h=h,
        c=compute_c(d, h, v_des, limits),
        alpha=alpha,
    )


def is_feasible(d: float, h: float, v_des: float, limits: ActuationLimits) -> bool:
    if h <= 0.0 or d - h * v_des <= 0.0:
        return False
    return string_stability_ok(gains_for(d, h, v_des, limits)).ok


def feasible_region(d_grid: Sequence[float], h_grid: Sequence[float], v_des: float,
                    limits: ActuationLimits) -> np.ndarray:
    """Boolean grid of shape ``(len(d_grid), len(h_grid))``."""
    d_arr = np.asarray(d_grid, dtype=float)
    h_arr = np.asarray(h_grid, dtype=float)
    for name, arr in (("d_grid", d_arr), ("h_grid", h_arr)):
        if arr.ndim != 1 or arr.size == 0:
            raise ValueError(f"{name} must be a non-empty 1-D sequence")
        if np.any(np.diff(arr) <= 0):
            raise ValueError(f"{name} must be strictly increasing")
    out = np.zeros((d_arr.size, h_arr.size), dtype=bool)
    for i, d in enumerate(d_arr):
        for j, h in enumerate(h_arr):
            out[i, j] = is_feasible(float(d), float(h), v_des, limits)
    return out


def write_region_csv(path, d_grid, h_grid, region: np.ndarray) -> Path:
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["d", "h", "feasible"])
        for i, d in enumerate(d_grid):
            for j, h in enumerate(h_grid):
                writer.writerow([repr(float(d)), repr(float(h)), int(region[i, j])])
    return path


def lowest_h(d: float, v_des: float, limits: ActuationLimits,
             resolution: float = DEFAULT_H_RESOLUTION) -> float:
    """Smallest multiple of ``resolution`` that yields feasible gains."""
    if resolution <= 0:
        raise ValueError("resolution must be positive")
    h_sup = d / v_des
    n_max = int(math.ceil(h_sup / resolution))
    for i in range(1, n_max + 1):
        # rounding keeps grid points like 0.21 exact in decimal terms
        h = round(i * resolution, 12)
        if is_feasible(d, h, v_des, limits):
            return h
    raise NoFeasibleGainsError(
        f"no feasible h in (0, {h_sup:.6g}) at resolution {resolution} "
        f"for d={d}, v_des={v_des}"
    )


HRule = Callable[[float, float, ActuationLimits], float]


def tune_gains(d: float, v_des: float, limits: ActuationLimits,
               h_rule: HRule | None = None, alpha: float = 1.0,
               resolution: float = DEFAULT_H_RESOLUTION) -> ControllerGains:
    """Pick ``h`` (lowest admissible by default) and derive ``k`` and ``c`` from it."""
    if h_rule is None:
        h = lowest_h(d, v_des, limits, resolution)
    else:
        h = h_rule(d, v_des, limits)
        if not is_feasible(d, h, v_des, limits):
            raise NoFeasibleGainsError(f"h_rule returned infeasible h={h}")
    return gains_for(d, h, v_des, limits, alpha=alpha)


def p_tilde_max(v_tilde: float, v: float, gains: ControllerGains,
                limits: ActuationLimits, d: float) -> float:
    """Worst relative position reached when the predecessor brakes to a stop.

    Valid for ``v_tilde >= 0``; a value above ``d`` signals a possible collision.
    """
    brake = -limits.u_min
    return d - (gains.c / gains.k - v / brake) * v_tilde - 0.5 * v_tilde * v_tilde / brake
