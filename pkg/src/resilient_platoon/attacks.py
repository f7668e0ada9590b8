"""V2V frames and the false-data-injection models applied to them.

Only the outbound data of a compromised vehicle is altered; physical states
and on-board measurements are never touched.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from .dynamics import ActuationLimits

# randomization ranges not pinned down by the attack description
DEFAULT_FREQ_RANGE = (0.05, 2.0)
DEFAULT_TAU_RANGE = (0.1, 2.0)

KINDS = (
    "none",
    "additive",
    "constant",
    "sinusoid",
    "filtered_noise",
    "dos",
    "alternating",
    "false_topology",
)


@dataclass(frozen=True)
class DeltaVec:
    pred_id: int
    succ_id: int

    def as_tuple(self) -> tuple[int, int]:
        return (self.pred_id, self.succ_id)


@dataclass(frozen=True)
class CommFrame:
    sender_id: int
    u: float
    v: float
    p: float
    delta: DeltaVec | None = None


@dataclass(frozen=True)
class AttackSpec:
    """One attack on one outbound link.

    ``params`` holds the kind-specific values: ``bias`` (additive), ``c``
    (constant), ``a``/``phi``/``f`` (sinusoid), ``tau``/``seed`` (filtered
    noise), ``period`` (alternating), ``delta`` (false topology).
    """

    kind: str = "none"
    params: dict[str, Any] = field(default_factory=dict)
    active_from: float = 0.0
    active_to: float = math.inf
    target: str = "u"

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown attack kind {self.kind!r}; expected one of {KINDS}")
        if not (0.0 <= self.active_from < self.active_to):
            raise ValueError(
                f"need 0 <= active_from < active_to, got {self.active_from}, {self.active_to}"
            )
        if self.target not in ("u", "v"):
            raise ValueError(f"attack target must be 'u' or 'v', got {self.target!r}")
        required = {
            "additive": ("bias",),
            "constant": ("c",),
            "sinusoid": ("a", "phi", "f"),
            "filtered_noise": ("tau",),
            "alternating": ("period",),
            "false_topology": ("delta",),
        }.get(self.kind, ())
        missing = [name for name in required if name not in self.params]
        if missing:
            raise ValueError(f"{self.kind} attack is missing parameters {missing}")
        if self.kind == "filtered_noise" and self.params["tau"] <= 0:
            raise ValueError("filtered-noise time constant must be positive")
        if self.kind == "alternating" and self.params["period"] <= 0:
            raise ValueError("alternating period must be positive")
        if self.target == "v" and self.kind not in ("additive", "constant"):
            raise ValueError("velocity-channel attacks support only additive and constant kinds")

    def active(self, t: float) -> bool:
        return self.active_from <= t < self.active_to

    def check_limits(self, limits: ActuationLimits) -> None:
        """Replacement signals must stay inside the actuation envelope."""
        lo, hi = limits.u_min, limits.u_max
        if self.kind == "constant" and not lo <= self.params["c"] <= hi:
            raise ValueError(f"constant attack value {self.params['c']} outside [{lo}, {hi}]")
        if self.kind == "sinusoid" and abs(self.params["a"]) > min(hi, -lo):
            raise ValueError(f"sinusoid amplitude {self.params['a']} exceeds the actuation limits")

    def to_dict(self) -> dict[str, Any]:
        out: dict[str, Any] = {"kind": self.kind}
        params = dict(self.params)
        if "delta" in params and isinstance(params["delta"], DeltaVec):
            params["delta"] = list(params["delta"].as_tuple())
        out.update(params)
        out["active_from"] = self.active_from
        if math.isfinite(self.active_to):
            out["active_to"] = self.active_to
        if self.target != "u":
            out["target"] = self.target
        return out

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "AttackSpec":
        data = dict(data)
        kind = data.pop("kind", "none")
        active_from = float(data.pop("active_from", 0.0))
        active_to = float(data.pop("active_to", math.inf))
        target = data.pop("target", "u")
        allowed = {
            "none": set(), "dos": set(), "additive": {"bias"}, "constant": {"c"},
            "sinusoid": {"a", "phi", "f"}, "filtered_noise": {"tau", "seed"},
            "alternating": {"period"}, "false_topology": {"delta"},
        }
        if kind not in allowed:
            raise ValueError(f"unknown attack kind {kind!r}")
        unknown = set(data) - allowed[kind]
        if unknown:
            raise ValueError(f"unknown keys for {kind} attack: {sorted(unknown)}")
        if "delta" in data:
            data["delta"] = DeltaVec(*(int(x) for x in data["delta"]))
        return cls(kind=kind, params=data, active_from=active_from,
                   active_to=active_to, target=target)


NO_ATTACK = AttackSpec()


def _clamp(x: float, lo: float, hi: float) -> float:
    return lo if x < lo else hi if x > hi else x


def attack_signal(spec: AttackSpec, true_value: float, t: float, limits: ActuationLimits,
                  filter_state: float, dt: float,
                  rng: np.random.Generator | None) -> tuple[float, float]:
    """Corrupted value of one scalar channel and the updated filter memory."""
    kind, prm = spec.kind, spec.params
    lo, hi = limits.u_min, limits.u_max
    if kind == "additive":
        return _clamp(true_value + prm["bias"], lo, hi), filter_state
    if kind == "constant":
        return float(prm["c"]), filter_state
    if kind == "sinusoid":
        return prm["a"] * math.sin(prm["phi"] + 2.0 * math.pi * prm["f"] * t), filter_state
    if kind == "filtered_noise":
        if rng is None:
            raise ValueError("filtered-noise attack needs a random stream")
        e = rng.uniform(lo, hi)
        new_state = filter_state + (dt / prm["tau"]) * (e - filter_state)
        return new_state, new_state
    if kind == "alternating":
        phase = int(math.floor((t - spec.active_from) / prm["period"]))
        return (hi if phase % 2 == 0 else lo), filter_state
    return true_value, filter_state


def apply_attack(frame: CommFrame | None, t: float, spec: AttackSpec, filter_state: float,
                 rng: np.random.Generator | None, limits: ActuationLimits,
                 dt: float = 0.05) -> tuple[CommFrame | None, float]:
    """Return the frame as received by the follower, plus the filter memory.

    ``None`` stands for a dropped frame (denial of service).
    """
    if frame is None or spec.kind == "none" or not spec.active(t):
        return frame, filter_state
    if spec.kind == "dos":
        return None, filter_state
    if spec.kind == "false_topology":
        return replace(frame, delta=spec.params["delta"]), filter_state
    if spec.target == "v":
        if spec.kind == "additive":
            v = frame.v + spec.params["bias"]
        else:
            v = spec.params["c"]
        return replace(frame, v=_clamp(v, 0.0, limits.v_max)), filter_state
    value, state = attack_signal(spec, frame.u, t, limits, filter_state, dt, rng)
    # direct construction is noticeably cheaper than dataclasses.replace in long campaigns
    return CommFrame(frame.sender_id, value, frame.v, frame.p, frame.delta), state


def randomize_attack_params(kind: str, limits: ActuationLimits, rng: np.random.Generator,
                            freq_range: tuple[float, float] = DEFAULT_FREQ_RANGE,
                            tau_range: tuple[float, float] = DEFAULT_TAU_RANGE,
                            active_from: float = 0.0,
                            active_to: float = math.inf) -> AttackSpec:
    """Draw a replacement attack whose signal stays inside the actuation limits."""
    lo, hi = limits.u_min, limits.u_max
    if kind == "constant":
        params = {"c": float(rng.uniform(lo, hi))}
    elif kind == "sinusoid":
        params = {
            "a": float(rng.uniform(0.0, min(hi, -lo))),
            "phi": float(rng.uniform(0.0, 2.0 * math.pi)),
            "f": float(rng.uniform(*freq_range)),
        }
    elif kind == "filtered_noise":
        params = {"tau": float(rng.uniform(*tau_range))}
    else:
        raise ValueError(f"randomization is defined for constant, sinusoid, filtered_noise; got {kind!r}")
    return AttackSpec(kind=kind, params=params, active_from=active_from, active_to=active_to)


def link_rng(master_seed: int, *keys: int) -> np.random.Generator:
    """Independent stream addressed by (master seed, key path).

    Streams depend only on their key path, so execution order never matters.
    """
    return np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=tuple(keys)))
