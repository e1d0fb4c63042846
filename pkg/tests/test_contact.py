import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resid_insert.contact import (
    PENETRATION_TOL,
    ComplianceParams,
    Outcome,
    SafetyStop,
    SlotGeometry,
    WorldState,
    apply_investigative_press,
    check_outcome,
    estimate_external_wrench,
    free_space,
    friction_cone_violation,
    goal_pose,
    initial_world,
    ram_bottom_in_slot,
    sample_initial_condition,
    solve_equilibrium,
    step_quasi_static,
)
from resid_insert.transforms import Pose

GEO = SlotGeometry()
PRM = ComplianceParams()


def _lowered(world: WorldState, dz: float, dx: float = 0.0, dy: float = 0.0) -> Pose:
    return Pose(world.commanded_pose.t + np.array([dx, dy, -dz]), world.commanded_pose.q)


def test_resting_on_lip_gives_stiffness_times_overshoot():
    # 3000 N/m times 1 mm of set-point travel into the board surface
    w = initial_world(GEO, np.array([0.0, 0.004]), 0.0)
    w2, wr = step_quasi_static(w, _lowered(w, 0.001), PRM)
    assert wr.F[2] == pytest.approx(-3.0, abs=1e-9)
    # the reported pose carries a tiny compliance tilt, hence nanometres rather than exact
    assert ram_bottom_in_slot(w2)[2] == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize("force", [5.0, 10.0, 15.0, 20.0, 25.0])
def test_end_pivot_moment_matches_lever_arm(force):
    # RAM 2 mm past the +x slot end pivots on that edge: lever is 60 mm - 2 mm
    w = initial_world(GEO, np.array([0.002, 0.0]), 0.0)
    _, peak = apply_investigative_press(w, force, PRM, enforce_range=False)
    assert peak.F[2] == pytest.approx(-force, rel=1e-6)
    assert peak.M[1] == pytest.approx(0.058 * force, rel=1e-4)


def test_pivot_moment_sign_follows_offset_side():
    for sx in (1.0, -1.0):
        w = initial_world(GEO, np.array([0.002 * sx, 0.0]), 0.0)
        _, peak = apply_investigative_press(w, 25.0, PRM)
        assert math.copysign(1.0, peak.M[1]) == sx


def test_probe_moment_increases_with_force():
    w = initial_world(GEO, np.array([-0.0015, 0.0]), 0.0)
    ms = [abs(apply_investigative_press(w, f, PRM)[1].M[1]) for f in (10.0, 15.0, 20.0, 25.0)]
    assert all(b > a for a, b in zip(ms, ms[1:]))


def test_probe_restores_world():
    w = initial_world(GEO, np.array([0.002, 0.0]), 0.0)
    w2, _ = apply_investigative_press(w, 25.0, PRM)
    assert w2 is w


def test_probe_force_range_enforced():
    w = initial_world(GEO, np.array([0.002, 0.0]), 0.0)
    with pytest.raises(ValueError):
        apply_investigative_press(w, 5.0, PRM)
    with pytest.raises(ValueError):
        apply_investigative_press(w, 26.0, PRM)


def test_probe_in_free_space_reads_nothing():
    w = initial_world(GEO, np.zeros(2), 0.01)
    _, peak = apply_investigative_press(w, 25.0, PRM)
    assert np.allclose(peak.as_vector(), 0.0)


def test_centered_drop_seats_fully():
    w = initial_world(GEO, np.zeros(2), 0.001)
    w2, _ = step_quasi_static(w, _lowered(w, 0.008), PRM)
    assert ram_bottom_in_slot(w2)[2] == pytest.approx(-GEO.depth, abs=1e-12)


def test_excess_force_raises_safety_stop_with_latched_world():
    w = initial_world(GEO, np.array([0.0, 0.004]), 0.0)
    with pytest.raises(SafetyStop) as exc:
        step_quasi_static(w, _lowered(w, 0.020), PRM)
    halted = exc.value.world
    assert halted.safety_latched
    assert abs(halted.wrench.F[2]) <= PRM.force_cap
    assert check_outcome(halted, goal_pose(GEO)) == Outcome.FAILED


def test_outcome_classification():
    goal = goal_pose(GEO)
    seated = WorldState(GEO, goal, goal)
    assert check_outcome(seated, goal) == Outcome.SUCCESS
    above = Pose(goal.t + [0.0, 0.0, 0.002], goal.q)
    assert check_outcome(WorldState(GEO, above, above), goal) == Outcome.ONGOING
    far = Pose(goal.t + [0.006, 0.0, 0.005], goal.q)
    assert check_outcome(WorldState(GEO, far, far), goal) == Outcome.FAILED


def test_wrench_noise_can_be_disabled():
    w = initial_world(GEO, np.array([0.0, 0.004]), 0.0)
    w2, wr = step_quasi_static(w, _lowered(w, 0.001), PRM)
    quiet = ComplianceParams(noise_enabled=False)
    obs = estimate_external_wrench(w2, np.random.default_rng(0), quiet)
    assert np.array_equal(obs.as_vector(), wr.as_vector())
    noisy = estimate_external_wrench(w2, np.random.default_rng(0), PRM)
    assert not np.array_equal(noisy.as_vector(), wr.as_vector())


def test_geometry_validation():
    with pytest.raises(ValueError):
        SlotGeometry(ram_width=0.006)
    with pytest.raises(ValueError):
        SlotGeometry(chamfer=0.005)


def test_initial_condition_radius_in_range():
    rng = np.random.default_rng(5)
    for _ in range(50):
        w = sample_initial_condition(rng, (0.002, 0.003), GEO, 0.0005)
        r = math.hypot(*ram_bottom_in_slot(w)[:2])
        assert 0.002 - 1e-12 <= r <= 0.003 + 1e-12


offset = st.floats(-0.004, 0.004)
target_z = st.floats(-0.009, 0.001)


@settings(max_examples=150, deadline=None)
@given(offset, offset, offset, offset, target_z)
def test_equilibrium_never_penetrates(x, y, cx, cy, cz):
    p, _ = solve_equilibrium(GEO, np.array([x, y, 0.0005]), np.array([cx, cy, cz]), PRM)
    assert free_space(GEO).penetration(p) <= PENETRATION_TOL


@settings(max_examples=150, deadline=None)
@given(offset, offset, offset, offset, target_z)
def test_equilibrium_lies_in_friction_cone(x, y, cx, cy, cz):
    c = np.array([cx, cy, cz])
    p, _ = solve_equilibrium(GEO, np.array([x, y, 0.0005]), c, PRM)
    # 1e-6 N slack covers the solver's stopping tolerance
    assert friction_cone_violation(free_space(GEO), p, c, PRM.K_trans, PRM.mu) <= 1e-6


@settings(max_examples=40, deadline=None)
@given(offset, offset, st.floats(0.0, 0.008), offset, offset)
def test_step_keeps_force_under_cap(x, y, dz, dx, dy):
    w = initial_world(GEO, np.array([x, y]), 0.0005)
    try:
        _, wr = step_quasi_static(w, _lowered(w, dz, dx, dy), PRM)
    except SafetyStop as exc:
        wr = exc.world.wrench
    assert wr.force_norm <= PRM.force_cap + 1e-9
