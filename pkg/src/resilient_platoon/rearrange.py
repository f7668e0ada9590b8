"""Two-lane supervisor that physically executes a topology change.

Each vehicle decides, from what it can observe around itself, which lane to
be in, which velocity level to track and which vehicle to keep its distance
from. Vehicles are points on a straight two-lane road (slow lane SL, fast
lane FL). A lane change takes a fixed time during which the vehicle occupies
both lanes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Mapping, Sequence

from .control import acc_control, speed_tracking_control
from .dynamics import ActuationLimits, PlatoonParams, VehicleState, saturate, step
from .gains import ControllerGains

DEFAULT_LANE_CHANGE_TIME = 1.5


class Lane(str, Enum):
    SL = "SL"
    FL = "FL"


class LaneCmd(str, Enum):
    STAY = "stay"
    TO_FL = "to_FL"
    TO_SL = "to_SL"


class VLevel(str, Enum):
    SLOW = "slow"
    DEFAULT = "default"
    FAST = "fast"


class ReconfigurationTimeout(RuntimeError):
    pass


@dataclass(frozen=True)
class SupervisorInput:
    """What one vehicle knows about its surroundings.

    ``ap`` is the assigned predecessor (0 for the leader), ``op`` the closest
    vehicle ahead in either lane. ``sl_ahead`` is the nearest vehicle ahead
    occupying the slow lane, ``fl_ahead`` lists ``(id, distance)`` for the
    vehicles ahead occupying the fast lane.
    """

    ap: int
    op: int
    lane: Lane
    ap_lane: str = "unknown"
    ap_msl: bool = False
    ap_ahead: bool = True
    sl_ahead: int = 0
    fl_ahead: tuple[tuple[int, float], ...] = ()
    changing: bool = False

    @property
    def at_cpp(self) -> bool:
        return self.lane == Lane.SL and self.ap == self.op and not self.changing


@dataclass(frozen=True)
class SupervisorOutput:
    lane_cmd: LaneCmd
    v_level: VLevel
    vtf: int


@dataclass(frozen=True)
class VelocityLevels:
    slow: float
    default: float
    fast: float

    @classmethod
    def for_platoon(cls, v_des: float, v_max: float, slow_factor: float = 0.8,
                    fast_factor: float = 1.2) -> "VelocityLevels":
        return cls(slow=slow_factor * v_des, default=v_des, fast=min(fast_factor * v_des, v_max))

    def value(self, level: VLevel) -> float:
        return {VLevel.SLOW: self.slow, VLevel.DEFAULT: self.default,
                VLevel.FAST: self.fast}[VLevel(level)]


def velocity_manager(inp: SupervisorInput) -> VLevel:
    if inp.lane == Lane.SL:
        # an assigned predecessor still in the fast lane needs room to merge in front
        if inp.ap == inp.op and not (inp.ap and inp.ap_lane == "FL"):
            return VLevel.DEFAULT
        return VLevel.SLOW
    if inp.ap_lane == "SL":
        return VLevel.DEFAULT
    return VLevel.FAST


def vtf_manager(inp: SupervisorInput) -> int:
    if inp.ap == inp.op:
        return inp.ap
    if inp.lane == Lane.SL:
        return 0
    if not inp.fl_ahead:
        return 0
    return min(inp.fl_ahead, key=lambda item: (item[1], item[0]))[0]


def lane_intent(inp: SupervisorInput) -> Lane:
    """Lane the vehicle wants to be in, before any gap check."""
    if inp.ap == 0:
        # the leader overtakes whatever is ahead, then returns once the slow lane is clear
        if inp.lane == Lane.SL:
            return Lane.SL if inp.op == 0 else Lane.FL
        return Lane.SL if inp.sl_ahead == 0 else Lane.FL
    if inp.lane == Lane.SL:
        if not inp.ap_ahead:
            return Lane.SL  # wait to be overtaken
        if inp.ap_lane == "FL":
            # an assigned predecessor that is right ahead and merging back will land in front
            if inp.ap_msl and inp.op == inp.ap:
                return Lane.SL
            return Lane.FL
        return Lane.SL if inp.ap == inp.op else Lane.FL
    if inp.ap_lane == "SL" and inp.ap_ahead and inp.sl_ahead == inp.ap:
        return Lane.SL
    return Lane.FL


def lane_manager(inp: SupervisorInput, gap_behind_ok: bool) -> LaneCmd:
    if inp.changing:
        return LaneCmd.STAY
    want = lane_intent(inp)
    if want == inp.lane:
        return LaneCmd.STAY
    if want == Lane.FL:
        return LaneCmd.TO_FL
    return LaneCmd.TO_SL if gap_behind_ok else LaneCmd.STAY


def supervise(inp: SupervisorInput, gap_behind_ok: bool) -> SupervisorOutput:
    return SupervisorOutput(lane_manager(inp, gap_behind_ok), velocity_manager(inp),
                            vtf_manager(inp))


@dataclass
class RoadVehicle:
    p: float
    v: float
    lane: Lane = Lane.SL
    target: Lane | None = None
    timer: float = 0.0

    def occupies(self, lane: Lane) -> bool:
        return self.lane == lane or self.target == lane

    @property
    def changing(self) -> bool:
        return self.target is not None


def _ahead(road: Mapping[int, RoadVehicle], vid: int) -> list[int]:
    me = road[vid].p
    return [j for j, veh in road.items() if j != vid and veh.p > me]


def _nearest(road: Mapping[int, RoadVehicle], ids: Sequence[int]) -> int:
    if not ids:
        return 0
    return min(ids, key=lambda j: (road[j].p, j))


def merge_signal(road: Mapping[int, RoadVehicle], assignment: Mapping[int, int],
                 vid: int) -> bool:
    """True when ``vid`` sits in the fast lane and wants back into the slow lane."""
    veh = road[vid]
    if veh.target == Lane.SL:
        return True
    if veh.lane != Lane.FL or veh.changing:
        return False
    return lane_intent(observe(road, assignment, vid, with_msl=False)) == Lane.SL


def observe(road: Mapping[int, RoadVehicle], assignment: Mapping[int, int], vid: int,
            with_msl: bool = True) -> SupervisorInput:
    me = road[vid]
    ahead = _ahead(road, vid)
    ap = assignment[vid]
    ap_lane, ap_ahead, ap_msl = "unknown", True, False
    if ap:
        ap_lane = road[ap].lane.value
        ap_ahead = road[ap].p > me.p
        if with_msl:
            ap_msl = merge_signal(road, assignment, ap)
    return SupervisorInput(
        ap=ap,
        op=_nearest(road, ahead),
        lane=me.lane,
        ap_lane=ap_lane,
        ap_msl=ap_msl,
        ap_ahead=ap_ahead,
        sl_ahead=_nearest(road, [j for j in ahead if road[j].occupies(Lane.SL)]),
        fl_ahead=tuple(sorted((j, road[j].p - me.p) for j in ahead
                              if road[j].occupies(Lane.FL))),
        changing=me.changing,
    )


def gap_behind(road: Mapping[int, RoadVehicle], vid: int, lane: Lane) -> float:
    """Distance to the nearest vehicle behind occupying ``lane`` (inf if none)."""
    me = road[vid].p
    behind = [me - veh.p for j, veh in road.items()
              if j != vid and veh.p <= me and veh.occupies(lane)]
    return min(behind) if behind else math.inf


def nearest_in_lane_ahead(road: Mapping[int, RoadVehicle], vid: int) -> int:
    """Closest vehicle ahead sharing any lane with ``vid``."""
    me = road[vid]
    lanes = [ln for ln in Lane if me.occupies(ln)]
    cands = [j for j in _ahead(road, vid) if any(road[j].occupies(ln) for ln in lanes)]
    return _nearest(road, cands)


def guarded_command(road: Mapping[int, RoadVehicle], vid: int, vtf: int, v_ref: float,
                    gains: ControllerGains, params: PlatoonParams,
                    limits: ActuationLimits, u_ff: float = 0.0) -> float:
    """Follow ``vtf`` (or track ``v_ref``) without closing in on anyone in the own lane.

    ``u_ff`` is an already filtered feed-forward term, added only when
    following. The result never exceeds the spacing law toward the nearest
    same-lane vehicle ahead.
    """
    me = road[vid]
    ego = VehicleState(me.p, me.v)
    if vtf:
        tgt = road[vtf]
        u = acc_control(ego, VehicleState(tgt.p, tgt.v), gains, params, v_ref) + u_ff
    else:
        u = speed_tracking_control(me.v, v_ref, gains)
    blocker = nearest_in_lane_ahead(road, vid)
    if blocker and blocker != vtf:
        b = road[blocker]
        u = min(u, acc_control(ego, VehicleState(b.p, b.v), gains, params, v_ref))
    return saturate(u, limits)


def apply_lane_command(veh: RoadVehicle, cmd: LaneCmd, duration: float) -> None:
    if veh.changing or cmd == LaneCmd.STAY:
        return
    veh.target = Lane.FL if cmd == LaneCmd.TO_FL else Lane.SL
    veh.timer = duration


def advance_lane_change(veh: RoadVehicle, dt: float) -> None:
    if not veh.changing:
        return
    veh.timer -= dt
    if veh.timer <= 1e-9:
        veh.lane, veh.target, veh.timer = veh.target, None, 0.0


def lane_crossings(before: Mapping[int, RoadVehicle], after: Mapping[int, RoadVehicle]
                   ) -> list[tuple[int, int, Lane]]:
    """Pairs sharing a lane on both sides of a step whose order along the road flipped."""
    out = []
    ids = sorted(before)
    for lane in Lane:
        members = [j for j in ids if before[j].occupies(lane) and after[j].occupies(lane)]
        for a_idx, a in enumerate(members):
            for b in members[a_idx + 1:]:
                d0 = before[b].p - before[a].p
                d1 = after[b].p - after[a].p
                if d0 * d1 < 0.0 or (d0 != 0.0 and d1 == 0.0):
                    out.append((a, b, lane))
    return out


def min_lane_gap(road: Mapping[int, RoadVehicle]) -> float:
    """Smallest distance between consecutive vehicles sharing a lane."""
    best = math.inf
    for lane in Lane:
        ps = sorted(veh.p for veh in road.values() if veh.occupies(lane))
        for a, b in zip(ps, ps[1:]):
            best = min(best, b - a)
    return best


def all_at_cpp(road: Mapping[int, RoadVehicle], assignment: Mapping[int, int]) -> bool:
    return all(observe(road, assignment, vid, with_msl=False).at_cpp for vid in road)


def assignment_from_order(order: Sequence[int]) -> dict[int, int]:
    return {vid: (order[i - 1] if i else 0) for i, vid in enumerate(order)}


@dataclass
class ReconfigurationResult:
    steps: list[dict[int, SupervisorOutput]] = field(default_factory=list)
    duration: float = 0.0
    lane_changes: int = 0
    collisions: list[tuple[float, int, int]] = field(default_factory=list)
    min_gap: float = math.inf
    final: dict[int, RoadVehicle] = field(default_factory=dict)
    to_sl_without_gap: int = 0

    def order(self) -> list[int]:
        """Vehicles in the slow lane from front to back."""
        return [j for j, _ in sorted(self.final.items(), key=lambda kv: -kv[1].p)]


def supervisor_round(road: Mapping[int, RoadVehicle], assignment: Mapping[int, int],
                     safe_gap: float) -> dict[int, SupervisorOutput]:
    """Decisions of every vehicle, all taken from the same snapshot."""
    outs = {}
    for vid in sorted(road):
        inp = observe(road, assignment, vid)
        ok = gap_behind(road, vid, Lane.SL) >= safe_gap
        outs[vid] = supervise(inp, ok)
    return outs


def execute_reconfiguration(states: Mapping[int, VehicleState], old_order: Sequence[int],
                            new_order: Sequence[int], gains: ControllerGains,
                            params: PlatoonParams, limits: ActuationLimits,
                            dt: float = 0.05, horizon: float = 120.0,
                            lane_change_time: float = DEFAULT_LANE_CHANGE_TIME,
                            safe_gap: float | None = None,
                            levels: VelocityLevels | None = None,
                            lanes: Mapping[int, Lane] | None = None) -> ReconfigurationResult:
    """Drive every vehicle from ``old_order`` to its place in ``new_order``.

    Runs an ACC-only closed loop (no feed-forward) with the supervisor in
    charge until every vehicle is in the slow lane behind its assigned
    predecessor. Raises ``ReconfigurationTimeout`` after ``horizon`` seconds.

    The local lane rules handle the reorderings produced by isolating one
    vehicle (a rotation to the tail, possibly with a new leader). Arbitrary
    permutations can wait on each other in a cycle and then time out.
    """
    if sorted(old_order) != sorted(new_order) or sorted(states) != sorted(new_order):
        raise ValueError("old order, new order and states must cover the same vehicles")
    safe_gap = params.d if safe_gap is None else safe_gap
    levels = levels or VelocityLevels.for_platoon(params.v_des, limits.v_max)
    lanes = lanes or {}
    road = {vid: RoadVehicle(s.p, s.v, lanes.get(vid, Lane.SL)) for vid, s in states.items()}
    assignment = assignment_from_order(new_order)
    result = ReconfigurationResult()
    result.min_gap = min_lane_gap(road)
    t = 0.0
    n_steps = int(math.ceil(horizon / dt - 1e-9))
    for _ in range(n_steps):
        if all_at_cpp(road, assignment):
            break
        outs = supervisor_round(road, assignment, safe_gap)
        result.steps.append(outs)
        controls = {vid: guarded_command(road, vid, out.vtf, levels.value(out.v_level),
                                         gains, params, limits)
                    for vid, out in outs.items()}
        before = {vid: RoadVehicle(v.p, v.v, v.lane, v.target, v.timer)
                  for vid, v in road.items()}
        for vid, out in outs.items():
            veh = road[vid]
            if out.lane_cmd == LaneCmd.TO_SL and gap_behind(before, vid, Lane.SL) < safe_gap:
                result.to_sl_without_gap += 1
            if not veh.changing and out.lane_cmd != LaneCmd.STAY:
                result.lane_changes += 1
            apply_lane_command(veh, out.lane_cmd, lane_change_time)
            new = step(VehicleState(veh.p, veh.v), controls[vid], dt, limits)
            veh.p, veh.v = new.p, new.v
            advance_lane_change(veh, dt)
        t += dt
        for a, b, _lane in lane_crossings(before, road):
            result.collisions.append((t, a, b))
        result.min_gap = min(result.min_gap, min_lane_gap(road))
    else:
        if not all_at_cpp(road, assignment):
            stuck = [vid for vid in sorted(road)
                     if not observe(road, assignment, vid, with_msl=False).at_cpp]
            raise ReconfigurationTimeout(
                f"vehicles {stuck} not in position after {horizon} s; "
                f"lanes {[(v, road[v].lane.value) for v in sorted(road)]}")
    result.duration = t
    result.final = road
    return result
