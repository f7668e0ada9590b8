"""Deterministic fixed-step platoon simulation.

Each step runs, in order: sensing, frame exchange through the attacked
channels, the residual detectors, a coordinator round when needed, the lane
supervisor while a reconfiguration is under way, the controllers, and the
dynamics. Frames carry the acceleration each vehicle applied during the
previous step together with its current velocity and position.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Any

import numpy as np

from ..attacks import CommFrame, DeltaVec, apply_attack, link_rng
from ..control import (
    FilterBranch,
    cacc_control,
    compensating_policy,
    identity_policy,
    leader_command,
)
from ..coordinator import (
    MalformedMatrixError,
    TopologyMatrix,
    detect_false_broadcast,
    isolate_compromised,
    solve_topology,
    tie_break,
)
from ..detector import DetectorState, detector_step, reset_detector
from ..dynamics import NonFiniteError, VehicleState, step
from ..rearrange import (
    Lane,
    LaneCmd,
    RoadVehicle,
    VelocityLevels,
    advance_lane_change,
    all_at_cpp,
    apply_lane_command,
    assignment_from_order,
    gap_behind,
    guarded_command,
    lane_crossings,
    supervisor_round,
)
from .config import AttackEntry, ScenarioConfig

TRACE_COLUMNS = (
    "t", "vehicle_id", "p", "v", "u_lin", "u_ff_raw", "u_ff", "u_total", "filter_branch",
    "gap", "p_tilde", "v_tilde", "sigma", "r", "lane", "v_level", "vtf",
)


class SimulationAbort(RuntimeError):
    def __init__(self, step_index: int, message: str):
        super().__init__(f"step {step_index}: {message}")
        self.step_index = step_index


@dataclass
class GapStats:
    mean: float
    std: float
    min: float
    max: float


@dataclass
class RunMetrics:
    min_gap: dict[int, float] = field(default_factory=dict)
    collision: bool = False
    collision_time: float | None = None
    collision_pair: tuple[int, int] | None = None
    gap_stats: dict[int, GapStats] = field(default_factory=dict)
    detection_latency: dict[str, float | None] = field(default_factory=dict)
    false_alarms: int = 0
    reconfiguration_time: float | None = None
    reconfiguration_started: float | None = None
    final_order: list[int] = field(default_factory=list)
    topology_suspects: list[int] = field(default_factory=list)
    min_gap_attack: float = math.inf
    min_gap_brake: float = math.inf
    max_residual_after_reconfiguration: float | None = None
    end_time: float = 0.0
    steps: int = 0

    def overall_min_gap(self) -> float:
        return min(self.min_gap.values(), default=math.inf)

    def as_rows(self) -> list[tuple[str, str, Any]]:
        """Flat (metric, key, value) rows used for CSV export."""
        rows: list[tuple[str, str, Any]] = []
        for vid, g in sorted(self.min_gap.items()):
            rows.append(("min_gap", str(vid), g))
        rows.append(("collision", "", int(self.collision)))
        rows.append(("collision_time", "", self.collision_time))
        rows.append(("collision_pair", "", None if self.collision_pair is None
                     else f"{self.collision_pair[0]}-{self.collision_pair[1]}"))
        for vid, s in sorted(self.gap_stats.items()):
            rows += [("gap_mean", str(vid), s.mean), ("gap_std", str(vid), s.std),
                     ("gap_min", str(vid), s.min), ("gap_max", str(vid), s.max)]
        for link, lat in sorted(self.detection_latency.items()):
            rows.append(("detection_latency", link, lat))
        rows.append(("false_alarms", "", self.false_alarms))
        rows.append(("reconfiguration_started", "", self.reconfiguration_started))
        rows.append(("reconfiguration_time", "", self.reconfiguration_time))
        rows.append(("final_order", "", " ".join(str(v) for v in self.final_order)))
        rows.append(("topology_suspects", "", " ".join(str(v) for v in self.topology_suspects)))
        rows.append(("min_gap_attack", "", self.min_gap_attack))
        rows.append(("min_gap_brake", "", self.min_gap_brake))
        rows.append(("max_residual_after_reconfiguration", "",
                     self.max_residual_after_reconfiguration))
        rows.append(("end_time", "", self.end_time))
        return rows


@dataclass
class _AttackRuntime:
    entry: AttackEntry
    rng: np.random.Generator | None
    state: float = 0.0
    receiver: int | None = None  # resolved when the attack first becomes active


def _attack_runtimes(config: ScenarioConfig) -> list[_AttackRuntime]:
    out = []
    for idx, entry in enumerate(config.attacks):
        rng = None
        if entry.spec.kind == "filtered_noise":
            seed = entry.spec.params.get("seed")
            rng = (np.random.default_rng(int(seed)) if seed is not None
                   else link_rng(config.seed, 0, idx))
        out.append(_AttackRuntime(entry, rng, 0.0, entry.receiver))
    return out


class _Sim:
    """Mutable state of one run; the public entry point is ``run_scenario``."""

    def __init__(self, config: ScenarioConfig, record_trace: bool):
        self.cfg = config
        self.record = record_trace
        self.ids = config.ids
        prm, gains = config.platoon, config.gains
        v0 = config.leader.reference(0.0, prm.v_des)
        self.p = {vid: -(vid - 1) * prm.d for vid in self.ids}
        self.v = {vid: v0 for vid in self.ids}
        self.u_prev = {vid: 0.0 for vid in self.ids}
        self.D = TopologyMatrix.chain(self.ids)
        self.pred = {vid: vid - 1 for vid in self.ids}
        self.attacks = _attack_runtimes(config)
        self.forbidden: set[tuple[int, int]] = set()
        self.det: dict[int, DetectorState] = {}
        self.det_src: dict[int, int] = {}
        self.residual = {vid: 0.0 for vid in self.ids}
        self.noise_rng = link_rng(config.seed, 1) if config.sensor_noise_sd > 0 else None
        self.metrics = RunMetrics()
        self.metrics.min_gap = {vid: math.inf for vid in self.ids}
        self.gap_samples: dict[int, list[float]] = {vid: [] for vid in self.ids}
        self.trace: list[tuple] = []
        self.road: dict[int, RoadVehicle] | None = None
        self.assignment: dict[int, int] | None = None
        self.pending_D: TopologyMatrix | None = None
        self.last_claims: dict[int, DeltaVec] | None = None
        self.reconfigured = False
        self.levels = VelocityLevels.for_platoon(
            prm.v_des, config.limits.v_max, config.coordinator.slow_factor,
            config.coordinator.fast_factor)
        self.brake_time = config.leader.emergency_brake_at
        self.use_detector = config.detector.enabled and config.mode == "cacc"
        self.gains = gains

    # -- helpers -----------------------------------------------------------

    def _new_detector(self) -> DetectorState:
        dc = self.cfg.detector
        return DetectorState(K=dc.K, r_bar=dc.r_bar, persistence=dc.persistence)

    def _received(self, t: float):
        """Frames as seen by any listener, plus receiver-specific overrides."""
        frames: dict[int, CommFrame | None] = {
            vid: CommFrame(vid, self.u_prev[vid], self.v[vid], self.p[vid], self.D.rows[vid])
            for vid in self.ids
        }
        specific: dict[int, dict[int, CommFrame | None]] = {}
        limits, dt = self.cfg.limits, self.cfg.dt
        for rt in self.attacks:
            e = rt.entry
            if not e.spec.active(t):
                continue
            if rt.receiver is None and e.spec.kind != "false_topology":
                rt.receiver = self._listener(e.sender)
            if e.receiver is None:
                frames[e.sender], rt.state = apply_attack(frames[e.sender], t, e.spec, rt.state,
                                                          rt.rng, limits, dt)
            else:
                per = specific.setdefault(e.sender, {})
                base = per.get(e.receiver, frames[e.sender])
                per[e.receiver], rt.state = apply_attack(base, t, e.spec, rt.state, rt.rng,
                                                         limits, dt)
        return frames, specific

    def _listener(self, sender: int) -> int | None:
        for vid, src in self._sources().items():
            if src == sender:
                return vid
        return None

    def _sources(self) -> dict[int, int]:
        """Vehicle whose frames each vehicle consumes (0 for none)."""
        if self.road is not None:
            return dict(self._vtf)
        return self.pred

    def _frame_for(self, frames, specific, sender: int, receiver: int) -> CommFrame | None:
        per = specific.get(sender)
        if per is not None and receiver in per:
            return per[receiver]
        return frames[sender]

    def _attack_on(self, sender: int, receiver: int, t: float) -> bool:
        for rt in self.attacks:
            e = rt.entry
            if (e.sender == sender and e.spec.kind not in ("none", "false_topology")
                    and e.spec.active(t) and (e.receiver is None or e.receiver == receiver)):
                return True
        return False

    # -- coordinator -------------------------------------------------------

    def _start_reconfiguration(self, new_D: TopologyMatrix, t: float) -> None:
        if new_D == self.D:
            return
        self.pending_D = new_D
        self.assignment = assignment_from_order(new_D.order())
        self.road = {vid: RoadVehicle(self.p[vid], self.v[vid], Lane.SL) for vid in self.ids}
        self._vtf = {vid: self.pred[vid] for vid in self.ids}
        if self.metrics.reconfiguration_started is None:
            self.metrics.reconfiguration_started = t

    def _finish_reconfiguration(self, t: float) -> None:
        self.D = self.pending_D
        order = self.D.order()
        self.pred = assignment_from_order(order)
        self.road = self.assignment = self.pending_D = None
        self.metrics.reconfiguration_time = t
        self.reconfigured = True
        self.metrics.max_residual_after_reconfiguration = 0.0
        # every remaining link is fresh: re-trust it, restart estimates from measurements
        for vid in self.ids:
            src = self.pred[vid]
            if src:
                st = self.det.get(vid) or self._new_detector()
                self.det[vid] = reset_detector(st, self.v[vid] - self.v[src])
                self.det_src[vid] = src
            else:
                self.det.pop(vid, None)
                self.det_src.pop(vid, None)

    def _coordinator_round(self, frames, t: float, new_latches: list[tuple[int, int]]) -> None:
        if self.road is not None:
            return
        for receiver, sender in new_latches:
            claimed = self.D.with_row(receiver, DeltaVec(0, self.D.rows[receiver].succ_id))
            self.forbidden.add((sender, receiver))
            self._start_reconfiguration(
                isolate_compromised(claimed, sender, self.forbidden, leader=self.D.leader()), t)
            return
        claims = {vid: (fr.delta if fr is not None and fr.delta is not None else self.D.rows[vid])
                  for vid, fr in frames.items()}
        if claims == dict(self.D.rows) or claims == self.last_claims:
            return
        self.last_claims = claims
        try:
            claimed = TopologyMatrix(claims)
            verdict = detect_false_broadcast(claimed)
        except MalformedMatrixError:
            bad = [vid for vid in self.ids if claims[vid] != self.D.rows[vid]]
            self.metrics.topology_suspects.extend(bad)
            return
        if verdict.status == "suspect":
            # the majority wins: keep the current topology and ignore the forged row
            self.metrics.topology_suspects.append(verdict.suspect)
            return
        if verdict.status == "not_identifiable":
            new_D = tie_break(solve_topology(claimed, self.forbidden), self.D.leader())
            self._start_reconfiguration(new_D, t)

    # -- main loop ---------------------------------------------------------

    def run(self):
        cfg = self.cfg
        dt = cfg.dt
        prm, gains, limits = cfg.platoon, self.gains, cfg.limits
        n_main = int(round(cfg.duration / dt))
        extend = cfg.leader.brake_until_stop and self.brake_time is not None
        n_cap = n_main + (int(round(cfg.max_extension / dt)) if extend else 0)
        stop_steps = None
        k = 0
        ids = self.ids
        acc_mode = cfg.mode == "acc"
        v_attack = cfg.attack_velocity_channel
        record = self.record
        window = cfg.window
        brake_at = self.brake_time
        stop_speed = cfg.leader.stop_speed
        while k < n_cap:
            t = k * dt
            if k >= n_main:
                if not extend:
                    break
                if stop_steps is None and all(self.v[vid] <= stop_speed for vid in ids):
                    stop_steps = k + int(round(cfg.leader.post_stop / dt))
                if stop_steps is not None and k >= stop_steps:
                    break
            frames, specific = self._received(t)
            sources = self._sources()

            # residual detectors on every consumed link
            new_latches = []
            if self.use_detector:
                for vid in ids:
                    src = sources[vid]
                    if not src:
                        self.residual[vid] = 0.0
                        continue
                    if self.det_src.get(vid) != src:
                        self.det[vid] = self._new_detector()
                        self.det_src[vid] = src
                    fr = self._frame_for(frames, specific, src, vid)
                    st = self.det[vid]
                    if fr is None:
                        self.det[vid] = replace(st, initialized=False)
                        self.residual[vid] = 0.0
                        continue
                    v_src = fr.v if v_attack else self.v[src]
                    meas = self.v[vid] - v_src
                    if self.noise_rng is not None:
                        meas += float(self.noise_rng.normal(0.0, cfg.sensor_noise_sd))
                    try:
                        new, r = detector_step(st, self.u_prev[vid], fr.u, meas, dt)
                    except NonFiniteError as exc:
                        raise SimulationAbort(k, str(exc)) from exc
                    self.det[vid] = new
                    self.residual[vid] = r
                    if new.latched and not st.latched:
                        new_latches.append((vid, src))
                        self._record_latch(vid, src, t)
                    if self.reconfigured and self.road is None:
                        m = self.metrics
                        m.max_residual_after_reconfiguration = max(
                            m.max_residual_after_reconfiguration, r)

            if cfg.coordinator.enabled:
                try:
                    self._coordinator_round(frames, t, new_latches)
                except ValueError as exc:
                    raise SimulationAbort(k, f"coordinator failed: {exc}") from exc

            if self.road is not None:
                self._reconfiguration_step(k, t, frames, specific)
            else:
                self._platoon_step(k, t, frames, specific, acc_mode, v_attack, record,
                                   window, brake_at)
            k += 1
        self.metrics.steps = k
        self.metrics.end_time = k * dt
        self.metrics.final_order = self.D.order()
        # vehicles that never had anyone ahead carry no gap
        self.metrics.min_gap = {vid: g for vid, g in self.metrics.min_gap.items()
                                if g != math.inf}
        for vid, samples in self.gap_samples.items():
            if samples:
                arr = np.asarray(samples)
                self.metrics.gap_stats[vid] = GapStats(float(arr.mean()), float(arr.std()),
                                                       float(arr.min()), float(arr.max()))
        for rt in self.attacks:
            kind = rt.entry.spec.kind
            if kind in ("none", "false_topology") or not self.use_detector:
                continue
            rec = rt.receiver if rt.receiver is not None else rt.entry.receiver
            key = f"{rt.entry.sender}->{rec if rec is not None else ''}"
            self.metrics.detection_latency.setdefault(key, None)
        return self.trace, self.metrics

    def _record_latch(self, receiver: int, sender: int, t: float) -> None:
        if self._attack_on(sender, receiver, t):
            key = f"{sender}->{receiver}"
            if self.metrics.detection_latency.get(key) is None:
                start = min(rt.entry.spec.active_from for rt in self.attacks
                            if rt.entry.sender == sender
                            and (rt.entry.receiver in (None, receiver)))
                self.metrics.detection_latency[key] = t - start
        else:
            self.metrics.false_alarms += 1

    def _note_gap(self, vid: int, gap: float, t: float, pair: tuple[int, int]) -> None:
        m = self.metrics
        if gap < m.min_gap[vid]:
            m.min_gap[vid] = gap
        if self.brake_time is not None and t >= self.brake_time - 1e-12:
            if gap < m.min_gap_brake:
                m.min_gap_brake = gap
        elif gap < m.min_gap_attack:
            m.min_gap_attack = gap
        if gap < 0.0 and not m.collision:
            m.collision, m.collision_time, m.collision_pair = True, t, pair
        w = self.cfg.window
        if w is None or w[0] <= t <= w[1]:
            self.gap_samples[vid].append(gap)

    def _platoon_step(self, k, t, frames, specific, acc_mode, v_attack, record, window,
                      brake_at) -> None:
        cfg = self.cfg
        prm, gains, limits, dt = cfg.platoon, self.gains, cfg.limits, cfg.dt
        braking = brake_at is not None and t >= brake_at - 1e-12
        cmds = {}
        egos = {}
        compensate = cfg.policy == "compensating"
        for vid in self.ids:
            src = self.pred[vid]
            ego = egos[vid] = VehicleState(self.p[vid], self.v[vid])
            try:
                if not src:
                    cmd = leader_command(ego.v, cfg.leader.reference(t, prm.v_des), gains,
                                         limits, emergency=braking)
                else:
                    fr = self._frame_for(frames, specific, src, vid)
                    pred_state = VehicleState(self.p[src], fr.v if (v_attack and fr is not None)
                                              else self.v[src])
                    if acc_mode:
                        sigma = 0
                    elif self.use_detector:
                        sigma = self.det[vid].sigma
                    else:
                        sigma = 1
                    policy = (compensating_policy(ego.v, gains, prm)
                              if compensate else identity_policy)
                    cmd = cacc_control(ego, pred_state, None if fr is None else fr.u, sigma,
                                       gains, prm, limits, policy)
            except NonFiniteError as exc:
                raise SimulationAbort(k, str(exc)) from exc
            cmds[vid] = cmd
            if src:
                gap = self.p[src] - self.p[vid]
                self._note_gap(vid, gap, t, (src, vid))
            if record:
                if src:
                    p_tilde = self.p[vid] - self.p[src] + prm.d
                    v_tilde = self.v[vid] - self.v[src]
                    rel = (self.p[src] - self.p[vid], p_tilde, v_tilde, cmd.sigma)
                else:
                    rel = ("", "", "", "")
                self.trace.append((t, vid, ego.p, ego.v, cmd.u_lin, cmd.u_ff_raw, cmd.u_ff,
                                   cmd.u_total, cmd.filter_branch.value, rel[0], rel[1], rel[2],
                                   rel[3], self.residual[vid], "SL", "default", src))
        for vid in self.ids:
            u = cmds[vid].u_total
            try:
                new = step(egos[vid], u, dt, limits)
            except NonFiniteError as exc:
                raise SimulationAbort(k, str(exc)) from exc
            self.p[vid], self.v[vid] = new.p, new.v
            self.u_prev[vid] = u

    def _reconfiguration_step(self, k, t, frames, specific) -> None:
        cfg = self.cfg
        prm, gains, limits, dt = cfg.platoon, self.gains, cfg.limits, cfg.dt
        cc = cfg.coordinator
        safe_gap = prm.d if cc.safe_gap is None else cc.safe_gap
        road = self.road
        for vid in self.ids:
            road[vid].p, road[vid].v = self.p[vid], self.v[vid]
        if all_at_cpp(road, self.assignment):
            self._finish_reconfiguration(t)
            # the settled platoon takes over within the same step
            self._platoon_step(k, t, frames, specific, cfg.mode == "acc",
                               cfg.attack_velocity_channel, self.record, cfg.window,
                               self.brake_time)
            return
        if t - self.metrics.reconfiguration_started > cc.horizon:
            raise SimulationAbort(k, f"reconfiguration did not finish within {cc.horizon} s")
        outs = supervisor_round(road, self.assignment, safe_gap)
        self._vtf = {vid: out.vtf for vid, out in outs.items()}
        braking = self.brake_time is not None and t >= self.brake_time - 1e-12
        before = {vid: RoadVehicle(v.p, v.v, v.lane, v.target, v.timer) for vid, v in road.items()}
        us = {}
        for vid, out in outs.items():
            if braking and self.assignment[vid] == 0:
                u = limits.u_min
            else:
                u = guarded_command(road, vid, out.vtf, self.levels.value(out.v_level),
                                    gains, prm, limits)
            us[vid] = u
            if self.record:
                vtf = out.vtf
                if vtf:
                    rel = (self.p[vtf] - self.p[vid], self.p[vid] - self.p[vtf] + prm.d,
                           self.v[vid] - self.v[vtf])
                else:
                    rel = ("", "", "")
                lane = road[vid].lane.value if not road[vid].changing else \
                    f"{road[vid].lane.value}>{road[vid].target.value}"
                self.trace.append((t, vid, self.p[vid], self.v[vid], u, 0.0, 0.0, u,
                                   FilterBranch.SWITCHED_OFF.value, rel[0], rel[1], rel[2], 0,
                                   self.residual[vid], lane, out.v_level.value, vtf))
        for vid, out in outs.items():
            veh = road[vid]
            if out.lane_cmd == LaneCmd.TO_SL and gap_behind(before, vid, Lane.SL) < safe_gap:
                raise SimulationAbort(k, f"vehicle {vid} merged without a safe gap")
            apply_lane_command(veh, out.lane_cmd, cc.lane_change_time)
            try:
                new = step(VehicleState(veh.p, veh.v), us[vid], dt, limits)
            except NonFiniteError as exc:
                raise SimulationAbort(k, str(exc)) from exc
            veh.p, veh.v = new.p, new.v
            self.p[vid], self.v[vid] = new.p, new.v
            self.u_prev[vid] = us[vid]
            advance_lane_change(veh, dt)
        t_next = (k + 1) * dt
        for a, b, _lane in lane_crossings(before, road):
            if not self.metrics.collision:
                self.metrics.collision, self.metrics.collision_time = True, t_next
                self.metrics.collision_pair = (a, b)
        # physical in-lane gaps: nearest vehicle ahead sharing a lane at the previous step
        for vid in self.ids:
            ahead = [j for j in self.ids if j != vid and before[j].p >= before[vid].p
                     and any(before[j].occupies(ln) and road[j].occupies(ln)
                             and before[vid].occupies(ln) and road[vid].occupies(ln)
                             for ln in Lane)]
            if ahead:
                j = min(ahead, key=lambda x: (before[x].p, x))
                self._note_gap(vid, road[j].p - road[vid].p, t_next, (j, vid))


def run_scenario(config: ScenarioConfig, record_trace: bool = True):
    """Simulate one scenario; returns ``(trace rows, RunMetrics)``.

    Trace rows follow ``TRACE_COLUMNS``. Pass ``record_trace=False`` to skip
    the per-step rows when only the metrics matter.
    """
    return _Sim(config, record_trace).run()
