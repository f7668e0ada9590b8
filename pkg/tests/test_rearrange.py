import math

import pytest

from resilient_platoon.attacks import DeltaVec
from resilient_platoon.coordinator import TopologyMatrix, isolate_compromised
from resilient_platoon.dynamics import ActuationLimits, PlatoonParams, VehicleState
from resilient_platoon.gains import tune_gains
from resilient_platoon.rearrange import (
    Lane,
    LaneCmd,
    ReconfigurationTimeout,
    RoadVehicle,
    SupervisorInput,
    VelocityLevels,
    VLevel,
    advance_lane_change,
    apply_lane_command,
    assignment_from_order,
    execute_reconfiguration,
    gap_behind,
    guarded_command,
    lane_crossings,
    lane_manager,
    min_lane_gap,
    observe,
    velocity_manager,
    vtf_manager,
)

ROBOT = ActuationLimits(-1.0, 1.0, 1.4)
RB_PARAMS = PlatoonParams(d=0.5, v_des=1.0)
RB_GAINS = tune_gains(0.5, 1.0, ROBOT)
HIGHWAY = ActuationLimits.from_g(0.8, 0.5, 27.78)
HW_PARAMS = PlatoonParams(d=6.0, v_des=25.0)
HW_GAINS = tune_gains(6.0, 25.0, HIGHWAY)


def steady(order, params):
    return {vid: VehicleState(-i * params.d, params.v_des) for i, vid in enumerate(order)}


def test_velocity_manager_branches():
    assert velocity_manager(SupervisorInput(ap=2, op=2, lane=Lane.SL)) == VLevel.DEFAULT
    assert velocity_manager(SupervisorInput(ap=2, op=3, lane=Lane.SL)) == VLevel.SLOW
    assert velocity_manager(SupervisorInput(ap=2, op=3, lane=Lane.FL, ap_lane="FL")) == VLevel.FAST
    assert velocity_manager(SupervisorInput(ap=2, op=3, lane=Lane.FL, ap_lane="SL")) == VLevel.DEFAULT


def test_vtf_manager_branches():
    assert vtf_manager(SupervisorInput(ap=3, op=3, lane=Lane.SL)) == 3
    assert vtf_manager(SupervisorInput(ap=3, op=1, lane=Lane.SL)) == 0
    inp = SupervisorInput(ap=3, op=1, lane=Lane.FL, fl_ahead=((7, 9.0), (5, 2.0)))
    assert vtf_manager(inp) == 5
    assert vtf_manager(SupervisorInput(ap=3, op=1, lane=Lane.FL)) == 0


def test_lane_manager_examples():
    assert lane_manager(SupervisorInput(ap=2, op=2, lane=Lane.SL), True) == LaneCmd.STAY
    assert lane_manager(SupervisorInput(ap=2, op=3, lane=Lane.FL, ap_lane="FL"), True) == LaneCmd.STAY
    leader_back = SupervisorInput(ap=0, op=0, lane=Lane.FL, sl_ahead=0)
    assert lane_manager(leader_back, True) == LaneCmd.TO_SL
    assert lane_manager(leader_back, False) == LaneCmd.STAY


def test_lane_manager_overtake_and_wait():
    # follower whose assigned predecessor is behind it waits in the slow lane
    assert lane_manager(SupervisorInput(ap=1, op=0, lane=Lane.SL, ap_lane="SL",
                                        ap_ahead=False), True) == LaneCmd.STAY
    # follower blocked by someone else pulls out
    assert lane_manager(SupervisorInput(ap=4, op=1, lane=Lane.SL, ap_lane="SL"),
                        True) == LaneCmd.TO_FL
    # a vehicle already changing lanes is left alone
    assert lane_manager(SupervisorInput(ap=4, op=1, lane=Lane.SL, changing=True),
                        True) == LaneCmd.STAY


def test_lane_change_occupies_both_lanes():
    veh = RoadVehicle(0.0, 1.0)
    apply_lane_command(veh, LaneCmd.TO_FL, 0.1)
    assert veh.occupies(Lane.SL) and veh.occupies(Lane.FL)
    advance_lane_change(veh, 0.05)
    assert veh.changing
    advance_lane_change(veh, 0.05)
    assert veh.lane == Lane.FL and not veh.changing
    assert not veh.occupies(Lane.SL)


def test_gap_helpers():
    road = {1: RoadVehicle(10.0, 1.0), 2: RoadVehicle(9.0, 1.0, Lane.FL), 3: RoadVehicle(8.5, 1.0)}
    assert gap_behind(road, 1, Lane.SL) == 1.5
    assert gap_behind(road, 3, Lane.SL) == math.inf
    assert min_lane_gap(road) == 1.5
    inp = observe(road, assignment_from_order([2, 1, 3]), 3)
    assert inp.op == 2 and inp.sl_ahead == 1 and inp.fl_ahead == ((2, 0.5),)


def test_lane_crossings():
    before = {1: RoadVehicle(1.0, 1.0), 2: RoadVehicle(0.5, 1.0)}
    after = {1: RoadVehicle(1.0, 1.0), 2: RoadVehicle(1.2, 1.0)}
    assert lane_crossings(before, after) == [(1, 2, Lane.SL)]
    after_fl = {1: RoadVehicle(1.0, 1.0), 2: RoadVehicle(1.2, 1.0, Lane.FL)}
    before_fl = {1: RoadVehicle(1.0, 1.0), 2: RoadVehicle(0.5, 1.0, Lane.FL)}
    assert lane_crossings(before_fl, after_fl) == []


def test_guarded_command_respects_blocker():
    road = {1: RoadVehicle(10.0, 1.0), 2: RoadVehicle(9.6, 1.0), 3: RoadVehicle(9.5, 1.0)}
    free = guarded_command({1: road[1], 3: road[3]}, 3, 1, 1.2, RB_GAINS, RB_PARAMS, ROBOT)
    blocked = guarded_command(road, 3, 1, 1.2, RB_GAINS, RB_PARAMS, ROBOT)
    assert blocked < free
    assert blocked == ROBOT.u_min


def test_velocity_levels():
    lv = VelocityLevels.for_platoon(25.0, 27.78)
    assert lv.slow == 20.0 and lv.default == 25.0 and lv.fast == 27.78
    assert lv.value(VLevel.SLOW) == 20.0


def test_identity_reconfiguration():
    res = execute_reconfiguration(steady([1, 2, 3], RB_PARAMS), [1, 2, 3], [1, 2, 3],
                                  RB_GAINS, RB_PARAMS, ROBOT)
    assert res.lane_changes == 0
    assert res.steps == []


@pytest.mark.parametrize("params,gains,limits", [(RB_PARAMS, RB_GAINS, ROBOT),
                                                 (HW_PARAMS, HW_GAINS, HIGHWAY)])
@pytest.mark.parametrize("old,new", [
    ([1, 2], [2, 1]),
    ([1, 2, 3, 4], [2, 3, 4, 1]),
    ([1, 2, 3], [1, 3, 2]),
    ([1, 2, 3, 4, 5], [1, 2, 4, 5, 3]),
    ([1, 2, 3, 4, 5], [3, 4, 5, 1, 2]),
])
def test_swaps_reach_cpp_safely(params, gains, limits, old, new):
    res = execute_reconfiguration(steady(old, params), old, new, gains, params, limits)
    assert res.order() == new
    assert all(v.lane == Lane.SL and not v.changing for v in res.final.values())
    assert res.collisions == []
    assert res.to_sl_without_gap == 0
    assert res.min_gap > 0
    assert res.lane_changes >= 2


def test_two_swap_leader_slows():
    res = execute_reconfiguration(steady([1, 2], RB_PARAMS), [1, 2], [2, 1],
                                  RB_GAINS, RB_PARAMS, ROBOT)
    first = res.steps[0]
    assert first[1].v_level == VLevel.SLOW
    assert first[2].lane_cmd == LaneCmd.TO_FL


def test_timeout():
    with pytest.raises(ReconfigurationTimeout):
        execute_reconfiguration(steady([1, 2, 3, 4], RB_PARAMS), [1, 2, 3, 4], [2, 3, 4, 1],
                                RB_GAINS, RB_PARAMS, ROBOT, horizon=1.0)


def test_mismatched_orders():
    with pytest.raises(ValueError):
        execute_reconfiguration(steady([1, 2], RB_PARAMS), [1, 2], [1, 3],
                                RB_GAINS, RB_PARAMS, ROBOT)


@pytest.mark.parametrize("params,gains,limits", [(RB_PARAMS, RB_GAINS, ROBOT),
                                                 (HW_PARAMS, HW_GAINS, HIGHWAY)])
@pytest.mark.parametrize("n", [2, 3, 4, 5, 6])
def test_every_isolation_order_executes(params, gains, limits, n):
    # each reordering the coordinator can produce after one untrusted link
    old = list(range(1, n + 1))
    D = TopologyMatrix.chain(old)
    for c in old:
        succ = D.rows[c].succ_id
        claimed = D.with_row(succ, DeltaVec(0, D.rows[succ].succ_id)) if succ else D
        new = isolate_compromised(claimed, c, {(c, succ)} if succ else set(), leader=1).order()
        assert new[-1] == c
        res = execute_reconfiguration(steady(old, params), old, new, gains, params, limits)
        assert res.order() == new
        assert res.collisions == [] and res.to_sl_without_gap == 0
