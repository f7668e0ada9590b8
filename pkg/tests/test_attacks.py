import math

import numpy as np
import pytest

from resilient_platoon.attacks import (
    AttackSpec,
    CommFrame,
    DeltaVec,
    apply_attack,
    attack_signal,
    link_rng,
    randomize_attack_params,
)
from resilient_platoon.dynamics import ActuationLimits

HIGHWAY = ActuationLimits.from_g(0.8, 0.5, 27.78)
ROBOT = ActuationLimits(-1.0, 1.0, 1.4)
FRAME = CommFrame(1, 0.2, 1.0, 5.0, DeltaVec(0, 2))


def test_no_attack_passes_frame():
    out, state = apply_attack(FRAME, 3.0, AttackSpec(), 0.0, None, ROBOT)
    assert out is FRAME
    assert state == 0.0


def test_constant_replacement_inside_window():
    spec = AttackSpec("constant", {"c": 1.0}, active_from=5.0, active_to=10.0)
    assert apply_attack(FRAME, 4.99, spec, 0.0, None, ROBOT)[0].u == 0.2
    assert apply_attack(FRAME, 5.0, spec, 0.0, None, ROBOT)[0].u == ROBOT.u_max
    assert apply_attack(FRAME, 10.0, spec, 0.0, None, ROBOT)[0].u == 0.2


def test_additive_clamped():
    frame = CommFrame(1, 0.5 * HIGHWAY.u_min, 25.0, 0.0)
    spec = AttackSpec("additive", {"bias": HIGHWAY.u_min})
    out, _ = apply_attack(frame, 0.0, spec, 0.0, None, HIGHWAY)
    assert out.u == HIGHWAY.u_min


def test_attack_leaves_other_fields():
    spec = AttackSpec("constant", {"c": -1.0})
    out, _ = apply_attack(FRAME, 0.0, spec, 0.0, None, ROBOT)
    assert (out.sender_id, out.v, out.p, out.delta) == (1, 1.0, 5.0, DeltaVec(0, 2))


def test_dos_and_topology():
    assert apply_attack(FRAME, 0.0, AttackSpec("dos"), 0.0, None, ROBOT)[0] is None
    spec = AttackSpec("false_topology", {"delta": DeltaVec(5, 4)})
    out, _ = apply_attack(FRAME, 0.0, spec, 0.0, None, ROBOT)
    assert out.delta == DeltaVec(5, 4)
    assert out.u == FRAME.u


def test_sinusoid_signal():
    spec = AttackSpec("sinusoid", {"a": 0.8, "phi": 0.3, "f": 0.2})
    for t in np.linspace(0, 10, 21):
        val, _ = attack_signal(spec, 0.0, t, ROBOT, 0.0, 0.05, None)
        assert val == pytest.approx(0.8 * math.sin(0.3 + 2 * math.pi * 0.2 * t))


def test_alternating_signal():
    spec = AttackSpec("alternating", {"period": 5.0}, active_from=5.0)
    vals = [attack_signal(spec, 0.0, t, ROBOT, 0.0, 0.05, None)[0]
            for t in (5.0, 9.99, 10.0, 14.9, 15.0)]
    assert vals == [1.0, 1.0, -1.0, -1.0, 1.0]


def test_filtered_noise_first_order_filter():
    spec = AttackSpec("filtered_noise", {"tau": 0.5})
    rng_a, rng_b = np.random.default_rng(7), np.random.default_rng(7)
    state = 0.0
    for _ in range(200):
        val, state_next = attack_signal(spec, 0.0, 0.0, ROBOT, state, 0.05, rng_a)
        e = rng_b.uniform(-1.0, 1.0)
        assert val == pytest.approx(state + 0.1 * (e - state))
        assert ROBOT.u_min <= val <= ROBOT.u_max
        state = state_next
    with pytest.raises(ValueError):
        attack_signal(spec, 0.0, 0.0, ROBOT, 0.0, 0.05, None)


def test_velocity_channel():
    spec = AttackSpec("additive", {"bias": 1.0}, target="v")
    out, _ = apply_attack(FRAME, 0.0, spec, 0.0, None, ROBOT)
    assert out.v == ROBOT.v_max
    assert out.u == FRAME.u
    with pytest.raises(ValueError):
        AttackSpec("sinusoid", {"a": 1, "phi": 0, "f": 1}, target="v")


def test_spec_validation():
    with pytest.raises(ValueError):
        AttackSpec("bogus")
    with pytest.raises(ValueError):
        AttackSpec("constant", {})
    with pytest.raises(ValueError):
        AttackSpec("constant", {"c": 0.0}, active_from=3.0, active_to=2.0)
    with pytest.raises(ValueError):
        AttackSpec("filtered_noise", {"tau": 0.0})
    with pytest.raises(ValueError):
        AttackSpec("constant", {"c": 2.0}).check_limits(ROBOT)
    with pytest.raises(ValueError):
        AttackSpec("sinusoid", {"a": 1.5, "phi": 0, "f": 1}).check_limits(ROBOT)


def test_spec_dict_round_trip():
    for spec in [AttackSpec("constant", {"c": 0.5}, 2.0, 9.0),
                 AttackSpec("false_topology", {"delta": DeltaVec(3, 1)}),
                 AttackSpec("additive", {"bias": 0.1}, target="v")]:
        assert AttackSpec.from_dict(spec.to_dict()) == spec
    with pytest.raises(ValueError):
        AttackSpec.from_dict({"kind": "constant", "c": 1.0, "oops": 2})


def test_randomize_is_deterministic():
    a = randomize_attack_params("sinusoid", HIGHWAY, link_rng(11, 1, 2, 3))
    b = randomize_attack_params("sinusoid", HIGHWAY, link_rng(11, 1, 2, 3))
    c = randomize_attack_params("sinusoid", HIGHWAY, link_rng(11, 1, 2, 4))
    assert a == b
    assert a != c


def test_randomized_sinusoids_within_limits():
    rng = np.random.default_rng(0)
    bound = min(HIGHWAY.u_max, -HIGHWAY.u_min)
    t = np.linspace(0, 100, 50)
    for _ in range(10_000):
        spec = randomize_attack_params("sinusoid", HIGHWAY, rng)
        p = spec.params
        assert abs(p["a"]) <= bound
        assert np.all(np.abs(p["a"] * np.sin(p["phi"] + 2 * np.pi * p["f"] * t)) <= bound)


def test_randomized_constants_within_limits():
    rng = np.random.default_rng(1)
    cs = [randomize_attack_params("constant", HIGHWAY, rng).params["c"] for _ in range(5000)]
    assert min(cs) >= -7.848 and max(cs) <= 4.905


def test_randomize_rejects_other_kinds():
    with pytest.raises(ValueError):
        randomize_attack_params("dos", ROBOT, np.random.default_rng(0))
