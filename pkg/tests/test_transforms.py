import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from resid_insert.transforms import (
    Pose,
    apply_increment,
    axis_angle_to_rotation,
    compose,
    interpolate_trajectory,
    inverse,
    matrix_to_quat,
    pose_error,
    quat_multiply,
    quat_to_matrix,
    rotation_angle,
    rotation_to_axis_angle,
    slerp,
)

finite = st.floats(-1.0, 1.0, allow_nan=False)
vec3 = st.tuples(finite, finite, finite).map(np.array)
rotvec = st.tuples(finite, finite, finite).map(lambda v: np.array(v) * 2.5)


def poses():
    return st.builds(lambda t, r: Pose.from_rotvec(t, r), vec3, rotvec)


def test_rotation_about_z_by_quarter_turn():
    q = axis_angle_to_rotation([0.0, 0.0, math.pi / 2])
    R = quat_to_matrix(q)
    assert np.allclose(R @ [1.0, 0.0, 0.0], [0.0, 1.0, 0.0], atol=1e-15)


def test_axis_angle_at_pi_has_positive_dominant_axis():
    q = axis_angle_to_rotation([0.0, -math.pi, 0.0])
    rv = rotation_to_axis_angle(q)
    assert np.allclose(rv, [0.0, math.pi, 0.0])


def test_identity_error_is_zero():
    p = Pose.from_rotvec([0.1, 0.2, 0.3], [0.2, -0.1, 0.05])
    err = pose_error(p, p)
    assert np.allclose(err.as_vector(), 0.0, atol=1e-12)


def test_pose_error_is_current_in_target_frame():
    target = Pose.from_rotvec([0.0, 0.0, 1.0], [0.0, 0.0, math.pi / 2])
    current = Pose.from_rotvec([0.0, 0.0, 1.0], [0.0, 0.0, math.pi / 2]) @ Pose.from_translation(0.01, 0, 0)
    err = pose_error(current, target)
    assert np.allclose(err.t_err, [0.01, 0.0, 0.0], atol=1e-12)
    assert np.allclose(err.theta_u, 0.0, atol=1e-12)


def test_interpolation_single_step_returns_target():
    a, b = Pose.identity(), Pose.from_translation(1.0, 2.0, 3.0)
    traj = interpolate_trajectory(a, b, 1)
    assert len(traj) == 1 and np.array_equal(traj[0].t, b.t)


def test_interpolation_endpoints_and_equal_spacing():
    a = Pose.identity()
    b = Pose.from_rotvec([0.3, 0.0, -0.3], [0.0, 0.0, 1.2])
    traj = interpolate_trajectory(a, b, 5)
    assert np.array_equal(traj[0].t, a.t) and np.array_equal(traj[-1].t, b.t)
    gaps = [np.linalg.norm(traj[i + 1].t - traj[i].t) for i in range(4)]
    assert np.allclose(gaps, gaps[0], atol=1e-12)
    angles = [rotation_angle(compose(inverse(traj[i]), traj[i + 1])) for i in range(4)]
    assert np.allclose(angles, 0.3, atol=1e-9)


def test_interpolation_rejects_zero_steps():
    with pytest.raises(ValueError):
        interpolate_trajectory(Pose.identity(), Pose.identity(), 0)


def test_increment_adds_translation_in_parent_frame():
    x = Pose.from_rotvec([0.0, 0.0, 0.0], [0.0, 0.0, math.pi / 2])
    out = apply_increment(x, [0.001, 0.0, 0.0, 0.0, 0.0, 0.0])
    assert np.allclose(out.t, [0.001, 0.0, 0.0])


@settings(max_examples=200, deadline=None)
@given(rotvec)
def test_matrix_quaternion_round_trip(rv):
    q = axis_angle_to_rotation(rv)
    q2 = matrix_to_quat(quat_to_matrix(q))
    assert min(np.abs(q - q2).max(), np.abs(q + q2).max()) < 1e-12


@settings(max_examples=200, deadline=None)
@given(poses())
def test_compose_with_inverse_is_identity(p):
    e = compose(p, inverse(p))
    assert np.allclose(e.t, 0.0, atol=1e-12)
    assert rotation_angle(e) < 1e-7


@settings(max_examples=200, deadline=None)
@given(poses(), poses(), poses())
def test_composition_is_associative(a, b, c):
    l, r = compose(compose(a, b), c), compose(a, compose(b, c))
    assert np.allclose(l.t, r.t, atol=1e-12)
    assert min(np.abs(l.q - r.q).max(), np.abs(l.q + r.q).max()) < 1e-12


@settings(max_examples=200, deadline=None)
@given(st.tuples(finite, finite, finite).map(lambda v: np.array(v) * 3.0))
def test_axis_angle_round_trip_inside_pi(rv):
    theta = np.linalg.norm(rv)
    if theta >= math.pi - 1e-6:
        rv = rv * (math.pi - 1e-3) / theta
    assert np.allclose(rotation_to_axis_angle(axis_angle_to_rotation(rv)), rv, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(rotvec, rotvec, st.floats(0.0, 1.0))
def test_slerp_angle_is_linear_in_parameter(r0, r1, s):
    q0, q1 = axis_angle_to_rotation(r0), axis_angle_to_rotation(r1)
    total = rotation_angle(Pose(np.zeros(3), quat_multiply([q0[0], -q0[1], -q0[2], -q0[3]], q1)))
    qs = slerp(q0, q1, s)
    part = rotation_angle(Pose(np.zeros(3), quat_multiply([q0[0], -q0[1], -q0[2], -q0[3]], qs)))
    assert abs(part - s * total) < 1e-6
