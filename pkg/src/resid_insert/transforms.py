"""Rigid-body pose algebra.

Quaternions are stored as ``(w, x, y, z)`` numpy arrays. A :class:`Pose`
maps points from its own frame into the parent frame:
``p_parent = R(q) @ p_child + t``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Sequence

import numpy as np

IDENTITY_Q = np.array([1.0, 0.0, 0.0, 0.0])


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = math.sqrt(float(q @ q))
    if n == 0.0:
        raise ValueError("zero-norm quaternion")
    return q / n


def quat_multiply(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    aw, ax, ay, az = a
    bw, bx, by, bz = b
    return np.array(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ]
    )


def quat_conjugate(q: np.ndarray) -> np.ndarray:
    return np.array([q[0], -q[1], -q[2], -q[3]])


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def matrix_to_quat(R: np.ndarray) -> np.ndarray:
    """Shepperd's method; returns the quaternion with w >= 0."""
    R = np.asarray(R, dtype=float)
    tr = R[0, 0] + R[1, 1] + R[2, 2]
    if tr > 0.0:
        s = 2.0 * math.sqrt(tr + 1.0)
        q = np.array(
            [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
        )
    elif R[0, 0] > R[1, 1] and R[0, 0] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[0, 0] - R[1, 1] - R[2, 2])
        q = np.array(
            [(R[2, 1] - R[1, 2]) / s, 0.25 * s, (R[0, 1] + R[1, 0]) / s, (R[0, 2] + R[2, 0]) / s]
        )
    elif R[1, 1] > R[2, 2]:
        s = 2.0 * math.sqrt(1.0 + R[1, 1] - R[0, 0] - R[2, 2])
        q = np.array(
            [(R[0, 2] - R[2, 0]) / s, (R[0, 1] + R[1, 0]) / s, 0.25 * s, (R[1, 2] + R[2, 1]) / s]
        )
    else:
        s = 2.0 * math.sqrt(1.0 + R[2, 2] - R[0, 0] - R[1, 1])
        q = np.array(
            [(R[1, 0] - R[0, 1]) / s, (R[0, 2] + R[2, 0]) / s, (R[1, 2] + R[2, 1]) / s, 0.25 * s]
        )
    if q[0] < 0.0:
        q = -q
    return quat_normalize(q)


def rotation_to_axis_angle(q: np.ndarray) -> np.ndarray:
    """Unit quaternion to rotation vector ``theta * u`` with theta in [0, pi].

    At theta == pi the axis sign is fixed so that its largest-magnitude
    component is positive.
    """
    q = quat_normalize(q)
    if q[0] < 0.0:
        q = -q
    v = q[1:]
    s = math.sqrt(float(v @ v))
    if s < 1e-15:
        return np.zeros(3)
    theta = 2.0 * math.atan2(s, q[0])
    axis = v / s
    if abs(theta - math.pi) < 1e-12:
        k = int(np.argmax(np.abs(axis)))
        if axis[k] < 0.0:
            axis = -axis
        theta = math.pi
    return theta * axis


def axis_angle_to_rotation(rotvec: Sequence[float]) -> np.ndarray:
    rv = np.asarray(rotvec, dtype=float)
    theta = math.sqrt(float(rv @ rv))
    if theta < 1e-15:
        # first-order expansion keeps tiny rotations exact to machine precision
        return quat_normalize(np.array([1.0, 0.5 * rv[0], 0.5 * rv[1], 0.5 * rv[2]]))
    half = 0.5 * theta
    return np.concatenate(([math.cos(half)], math.sin(half) * rv / theta))


@dataclass(frozen=True, eq=False)
class Pose:
    t: np.ndarray
    q: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "t", np.asarray(self.t, dtype=float).reshape(3))
        object.__setattr__(self, "q", quat_normalize(self.q))

    def __eq__(self, other: object) -> bool:
        # exact comparison; q and -q are different values here
        if not isinstance(other, Pose):
            return NotImplemented
        return bool(np.array_equal(self.t, other.t) and np.array_equal(self.q, other.q))

    def __hash__(self) -> int:
        return hash((self.t.tobytes(), self.q.tobytes()))

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.zeros(3), IDENTITY_Q)

    @classmethod
    def from_translation(cls, x: float, y: float, z: float) -> "Pose":
        return cls(np.array([x, y, z]), IDENTITY_Q)

    @classmethod
    def from_rotvec(cls, t: Sequence[float], rotvec: Sequence[float]) -> "Pose":
        return cls(np.asarray(t, dtype=float), axis_angle_to_rotation(rotvec))

    @property
    def R(self) -> np.ndarray:
        return quat_to_matrix(self.q)

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Map points (N, 3) or (3,) from this frame into the parent frame."""
        return np.asarray(points) @ self.R.T + self.t

    def inverse(self) -> "Pose":
        return inverse(self)

    def __matmul__(self, other: "Pose") -> "Pose":
        return compose(self, other)


@dataclass(frozen=True)
class PoseError:
    t_err: np.ndarray
    theta_u: np.ndarray

    def as_vector(self) -> np.ndarray:
        return np.concatenate((self.t_err, self.theta_u))


@dataclass(frozen=True)
class Twist:
    v: np.ndarray
    w: np.ndarray


def compose(a: Pose, b: Pose) -> Pose:
    return Pose(a.R @ b.t + a.t, quat_multiply(a.q, b.q))


def inverse(p: Pose) -> Pose:
    qc = quat_conjugate(p.q)
    return Pose(-(quat_to_matrix(qc) @ p.t), qc)


def pose_error(current: Pose, target: Pose) -> PoseError:
    """Pose of ``current`` expressed in the ``target`` frame.

    Zero iff the poses coincide. Driving the returned error to zero with
    ``-gain * error`` moves ``current`` onto ``target``.
    """
    rel = compose(inverse(target), current)
    return PoseError(rel.t, rotation_to_axis_angle(rel.q))


def rotation_angle(p: Pose) -> float:
    return float(np.linalg.norm(rotation_to_axis_angle(p.q)))


def slerp(q0: np.ndarray, q1: np.ndarray, s: float) -> np.ndarray:
    """Shortest-arc spherical interpolation, constant angular rate in ``s``."""
    d = float(q0 @ q1)
    if d < 0.0:
        q1, d = -q1, -d
    if d > 1.0 - 1e-12:
        return quat_normalize((1.0 - s) * q0 + s * q1)
    omega = math.acos(min(d, 1.0))
    so = math.sin(omega)
    return quat_normalize((math.sin((1.0 - s) * omega) * q0 + math.sin(s * omega) * q1) / so)


def interpolate_trajectory(x_t: Pose, x_des: Pose, steps: int) -> List[Pose]:
    """``steps`` poses from ``x_t`` to ``x_des`` inclusive.

    Translation is linear and orientation uses shortest-arc slerp. With
    ``steps == 1`` only the target is returned.
    """
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if steps == 1:
        return [x_des]
    out = [x_t]
    for k in range(1, steps - 1):
        s = k / (steps - 1)
        out.append(Pose((1.0 - s) * x_t.t + s * x_des.t, slerp(x_t.q, x_des.q, s)))
    out.append(x_des)
    return out


def apply_increment(x_t: Pose, u: Sequence[float]) -> Pose:
    """Desired pose from an incremental 6-vector command ``[dt, drotvec]``.

    The translation increment is added in the parent frame and the rotation
    increment is applied about the current EE axes.
    """
    u = np.asarray(u, dtype=float)
    return Pose(x_t.t + u[:3], quat_multiply(x_t.q, axis_angle_to_rotation(u[3:])))
