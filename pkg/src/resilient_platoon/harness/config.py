"""Scenario description and its YAML loader.

Every section is optional except ``platoon`` and ``limits``. Unknown keys are
rejected so that typos never silently fall back to defaults. See
``docs/scenario_schema.md`` for the full schema.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping

import yaml

from ..attacks import AttackSpec
from ..detector import DEFAULT_K, DEFAULT_PERSISTENCE, DEFAULT_R_BAR
from ..dynamics import DEFAULT_DT, ActuationLimits, PlatoonParams
from ..gains import DEFAULT_H_RESOLUTION, ControllerGains, gains_for, tune_gains
from ..rearrange import DEFAULT_LANE_CHANGE_TIME


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class LeaderProfile:
    """Leader velocity reference, optionally with a sinusoid and a final emergency stop."""

    v_ref: float | None = None  # defaults to the platoon cruise velocity
    amplitude: float = 0.0
    period: float = 10.0
    emergency_brake_at: float | None = None
    brake_until_stop: bool = False
    post_stop: float = 2.0
    stop_speed: float = 1e-3  # below this every vehicle counts as standing still

    def __post_init__(self):
        if self.period <= 0:
            raise ConfigError("leader sinusoid period must be positive")
        if self.emergency_brake_at is not None and self.emergency_brake_at < 0:
            raise ConfigError("emergency_brake_at must be non-negative")
        if self.post_stop < 0:
            raise ConfigError("post_stop must be non-negative")
        if self.stop_speed < 0:
            raise ConfigError("stop_speed must be non-negative")

    def reference(self, t: float, v_des: float) -> float:
        base = v_des if self.v_ref is None else self.v_ref
        if self.amplitude:
            return base + self.amplitude * math.sin(2.0 * math.pi * t / self.period)
        return base

    def braking(self, t: float) -> bool:
        return self.emergency_brake_at is not None and t >= self.emergency_brake_at - 1e-12


@dataclass(frozen=True)
class AttackEntry:
    """An attack on the outbound frames of ``sender``.

    ``receiver=None`` hits whichever vehicle currently listens to the sender;
    topology attacks always reach every vehicle.
    """

    sender: int
    spec: AttackSpec
    receiver: int | None = None


@dataclass(frozen=True)
class DetectorConfig:
    enabled: bool = False
    K: float = DEFAULT_K
    r_bar: float = DEFAULT_R_BAR
    persistence: float = DEFAULT_PERSISTENCE


@dataclass(frozen=True)
class CoordinatorConfig:
    enabled: bool = False
    lane_change_time: float = DEFAULT_LANE_CHANGE_TIME
    safe_gap: float | None = None  # defaults to the desired spacing
    horizon: float = 120.0
    slow_factor: float = 0.8
    fast_factor: float = 1.2


@dataclass(frozen=True)
class ScenarioConfig:
    platoon: PlatoonParams
    limits: ActuationLimits
    gains: ControllerGains
    dt: float = DEFAULT_DT
    duration: float = 20.0
    seed: int = 0
    mode: str = "cacc"  # "acc" keeps the feed-forward off everywhere
    policy: str = "identity"
    leader: LeaderProfile = field(default_factory=LeaderProfile)
    attacks: tuple[AttackEntry, ...] = ()
    attack_velocity_channel: bool = False
    detector: DetectorConfig = field(default_factory=DetectorConfig)
    coordinator: CoordinatorConfig = field(default_factory=CoordinatorConfig)
    sensor_noise_sd: float = 0.0
    window: tuple[float, float] | None = None
    max_extension: float = 600.0

    def __post_init__(self):
        if not (self.dt > 0 and math.isfinite(self.dt)):
            raise ConfigError(f"dt must be positive, got {self.dt}")
        if not (self.duration > 0 and math.isfinite(self.duration)):
            raise ConfigError(f"duration must be positive, got {self.duration}")
        if self.mode not in ("cacc", "acc"):
            raise ConfigError(f"mode must be 'cacc' or 'acc', got {self.mode!r}")
        if self.policy not in ("identity", "compensating"):
            raise ConfigError(f"policy must be 'identity' or 'compensating', got {self.policy!r}")
        if self.sensor_noise_sd < 0:
            raise ConfigError("sensor_noise_sd must be non-negative")
        if not 0 <= self.seed < 2**64:
            raise ConfigError("seed must fit in 64 unsigned bits")
        try:
            self.platoon.check_against(self.limits)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        n = self.platoon.n
        for entry in self.attacks:
            if not 1 <= entry.sender <= n:
                raise ConfigError(f"attack sender {entry.sender} is not a vehicle (1..{n})")
            if entry.receiver is not None and not (1 <= entry.receiver <= n
                                                   and entry.receiver != entry.sender):
                raise ConfigError(f"attack link {entry.sender}->{entry.receiver} is not valid")
            if entry.spec.target == "v" and not self.attack_velocity_channel:
                raise ConfigError("velocity-channel attacks need attack_velocity_channel: true")
            try:
                entry.spec.check_limits(self.limits)
            except ValueError as exc:
                raise ConfigError(str(exc)) from exc
        if self.window is not None and not self.window[0] < self.window[1]:
            raise ConfigError("window must be (start, end) with start < end")

    @property
    def ids(self) -> list[int]:
        return list(range(1, self.platoon.n + 1))

    def with_attacks(self, attacks) -> "ScenarioConfig":
        return replace(self, attacks=tuple(attacks))


_SECTIONS = {
    "platoon": {"d", "v_des", "n"},
    "limits": {"u_min", "u_max", "v_max"},
    "gains": {"k", "h", "c", "auto", "h_resolution"},
    "leader": {"v_ref", "amplitude", "period", "emergency_brake_at", "brake_until_stop",
               "post_stop", "stop_speed"},
    "detector": {"enabled", "K", "r_bar", "persistence"},
    "coordinator": {"enabled", "lane_change_time", "safe_gap", "horizon", "slow_factor",
                    "fast_factor"},
}
_TOP = set(_SECTIONS) | {"dt", "duration", "seed", "mode", "policy", "alpha", "attacks",
                         "attack_velocity_channel", "sensor_noise_sd", "window",
                         "max_extension"}


def _section(data: Mapping[str, Any], name: str, required: bool = False) -> dict[str, Any]:
    sec = data.get(name)
    if sec is None:
        if required:
            raise ConfigError(f"missing required section {name!r}")
        return {}
    if not isinstance(sec, Mapping):
        raise ConfigError(f"section {name!r} must be a mapping")
    unknown = set(sec) - _SECTIONS[name]
    if unknown:
        raise ConfigError(f"unknown keys in {name!r}: {sorted(unknown)}")
    return dict(sec)


def _parse_attack(item: Any) -> AttackEntry:
    if not isinstance(item, Mapping):
        raise ConfigError(f"attack entries must be mappings, got {item!r}")
    item = dict(item)
    link = item.pop("link", None)
    if not isinstance(link, (list, tuple)) or len(link) != 2:
        raise ConfigError(f"attack needs link: [sender, receiver or null], got {link!r}")
    sender, receiver = link
    try:
        spec = AttackSpec.from_dict(item)
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"bad attack {item!r}: {exc}") from exc
    return AttackEntry(int(sender), spec, None if receiver is None else int(receiver))


def config_from_dict(data: Mapping[str, Any]) -> ScenarioConfig:
    if not isinstance(data, Mapping):
        raise ConfigError("scenario must be a mapping at top level")
    unknown = set(data) - _TOP
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    try:
        platoon = PlatoonParams(**_section(data, "platoon", required=True))
        limits = ActuationLimits(**_section(data, "limits", required=True))
        alpha = float(data.get("alpha", 1.0))
        g = _section(data, "gains")
        explicit = {"k", "h", "c"} & set(g)
        if explicit and g.get("auto"):
            raise ConfigError("gains: give either k/h/c or auto, not both")
        if explicit == {"k", "h", "c"}:
            gains = ControllerGains(g["k"], g["h"], g["c"], alpha)
        elif explicit == {"h"}:
            gains = gains_for(platoon.d, g["h"], platoon.v_des, limits, alpha)
        elif explicit:
            raise ConfigError("gains: give all of k, h, c, or only h, or auto")
        else:
            gains = tune_gains(platoon.d, platoon.v_des, limits, alpha=alpha,
                               resolution=g.get("h_resolution", DEFAULT_H_RESOLUTION))
        window = data.get("window")
        return ScenarioConfig(
            platoon=platoon,
            limits=limits,
            gains=gains,
            dt=float(data.get("dt", DEFAULT_DT)),
            duration=float(data.get("duration", 20.0)),
            seed=int(data.get("seed", 0)),
            mode=data.get("mode", "cacc"),
            policy=data.get("policy", "identity"),
            leader=LeaderProfile(**_section(data, "leader")),
            attacks=tuple(_parse_attack(a) for a in data.get("attacks") or ()),
            attack_velocity_channel=bool(data.get("attack_velocity_channel", False)),
            detector=DetectorConfig(**_section(data, "detector")),
            coordinator=CoordinatorConfig(**_section(data, "coordinator")),
            sensor_noise_sd=float(data.get("sensor_noise_sd", 0.0)),
            window=None if window is None else (float(window[0]), float(window[1])),
            max_extension=float(data.get("max_extension", 600.0)),
        )
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML: {exc}") from exc
    except OSError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    try:
        return config_from_dict(data)
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
