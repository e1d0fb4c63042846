"""Synthetic eye-in-hand RGB-D camera and feature-based pose estimation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Tuple

import numpy as np

from .transforms import Pose, PoseError, matrix_to_quat, rotation_to_axis_angle


class VisionError(ValueError):
    pass


class BehindCamera(VisionError):
    pass


class InvalidDepth(VisionError):
    pass


class DegenerateGeometry(VisionError):
    pass


# Camera looks straight down the EE -z axis: camera z = -EE z, camera y = -EE y.
DOWNWARD_CAMERA_Q = np.array([0.0, 1.0, 0.0, 0.0])


@dataclass(frozen=True)
class CameraModel:
    f: float = 600.0
    principal_point: Tuple[float, float] = (0.0, 0.0)
    extrinsic: Pose = field(
        default_factory=lambda: Pose(np.array([0.0, 0.04, 0.07]), DOWNWARD_CAMERA_Q)
    )
    pixel_noise_sigma: float = 0.0
    depth_noise_sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.f <= 0.0:
            raise ValueError("focal length must be positive")

    def noiseless(self) -> "CameraModel":
        return CameraModel(self.f, self.principal_point, self.extrinsic, 0.0, 0.0)


@dataclass(frozen=True)
class FeatureSet:
    labels: Tuple[str, ...]
    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.asarray(self.points, dtype=float).reshape(-1, 3)
        object.__setattr__(self, "points", pts)
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("feature labels must be unique")
        if len(self.labels) != len(pts):
            raise ValueError("one label per point")

    def as_dict(self) -> Dict[str, np.ndarray]:
        return dict(zip(self.labels, self.points))


@dataclass(frozen=True)
class ImageFeatures:
    labels: Tuple[str, ...]
    uvz: np.ndarray


def slot_features(length: float = 0.120, width: float = 0.0052) -> FeatureSet:
    """Eight labelled landmarks around a slot, in the slot frame.

    Opening corners, the two latch tips and two board fiducials beside the
    slot. The latches stand proud of the board so the set is not coplanar;
    the fiducials keep roll about the slot axis observable.
    """
    hl, hw = 0.5 * length, 0.5 * width
    labels = (
        "corner_pp", "corner_pm", "corner_mp", "corner_mm",
        "fiducial_p", "fiducial_m", "latch_p", "latch_m",
    )
    pts = np.array(
        [
            [hl, hw, 0.0],
            [hl, -hw, 0.0],
            [-hl, hw, 0.0],
            [-hl, -hw, 0.0],
            [0.030, 0.025, 0.0],
            [-0.030, -0.025, 0.0],
            [hl + 0.004, 0.0, 0.008],
            [-hl - 0.004, 0.0, 0.008],
        ]
    )
    return FeatureSet(labels, pts)


def project_features(
    camera: CameraModel,
    world_points: FeatureSet,
    camera_pose: Pose,
    rng: Optional[np.random.Generator] = None,
) -> ImageFeatures:
    """Pinhole projection of world landmarks into pixels plus measured depth."""
    pc = camera_pose.inverse().apply(world_points.points)
    if np.any(pc[:, 2] <= 0.0):
        raise BehindCamera("feature behind the camera")
    uv = camera.f * pc[:, :2] / pc[:, 2:3] + np.asarray(camera.principal_point)
    z = pc[:, 2].copy()
    if rng is not None and (camera.pixel_noise_sigma > 0.0 or camera.depth_noise_sigma > 0.0):
        uv = uv + camera.pixel_noise_sigma * rng.standard_normal(uv.shape)
        z = z + camera.depth_noise_sigma * rng.standard_normal(z.shape)
    return ImageFeatures(world_points.labels, np.column_stack((uv, z)))


def back_project(features: ImageFeatures, camera: CameraModel) -> FeatureSet:
    uvz = np.asarray(features.uvz, dtype=float)
    z = uvz[:, 2]
    if np.any(z <= 0.0):
        raise InvalidDepth("feature depth must be positive")
    xy = (uvz[:, :2] - np.asarray(camera.principal_point)) * (z / camera.f)[:, None]
    return FeatureSet(features.labels, np.column_stack((xy, z)))


@dataclass(frozen=True)
class TransformEstimate:
    pose: Pose
    rms: float


def _matched(current: FeatureSet, target: FeatureSet) -> Tuple[np.ndarray, np.ndarray]:
    if set(current.labels) != set(target.labels):
        raise ValueError("feature sets must carry the same labels")
    tgt = target.as_dict()
    return current.points, np.array([tgt[l] for l in current.labels])


def estimate_transform_rms(current: FeatureSet, target: FeatureSet) -> TransformEstimate:
    """Least-squares rigid transform mapping ``current`` onto ``target`` (Kabsch/Umeyama, no scale)."""
    A, B = _matched(current, target)
    if len(A) < 3:
        raise DegenerateGeometry("need at least three correspondences")
    ca, cb = A.mean(axis=0), B.mean(axis=0)
    A0, B0 = A - ca, B - cb
    scale = max(float(np.abs(A0).max()), 1e-300)
    sv = np.linalg.svd(A0 / scale, compute_uv=False)
    if sv[1] < 1e-9 * max(sv[0], 1e-300):
        raise DegenerateGeometry("feature points are collinear")
    H = A0.T @ B0
    U, _, Vt = np.linalg.svd(H)
    d = np.sign(np.linalg.det(Vt.T @ U.T)) or 1.0
    R = Vt.T @ np.diag([1.0, 1.0, d]) @ U.T
    t = cb - R @ ca
    resid = B - (A @ R.T + t)
    rms = float(np.sqrt((resid ** 2).sum(axis=1).mean()))
    return TransformEstimate(Pose(t, matrix_to_quat(R)), rms)


def estimate_transform(current: FeatureSet, target: FeatureSet) -> Pose:
    return estimate_transform_rms(current, target).pose


def visual_state(current: FeatureSet, target: FeatureSet) -> PoseError:
    """Translation and axis-angle error of the current camera in the desired camera frame."""
    est = estimate_transform(current, target)
    return PoseError(est.t.copy(), rotation_to_axis_angle(est.q))


def camera_pose(ee_pose: Pose, camera: CameraModel) -> Pose:
    return ee_pose @ camera.extrinsic


@dataclass
class VisionSensor:
    """Feature observations of one slot from the EE-mounted camera.

    ``target`` holds the features recorded in teach mode with the EE at the
    goal pose relative to the slot, so it is unaffected by later board
    displacement.
    """

    camera: CameraModel
    landmarks: FeatureSet
    target: FeatureSet

    @classmethod
    def taught(cls, camera: CameraModel, landmarks_slot: FeatureSet, goal_in_slot: Pose) -> "VisionSensor":
        cam = camera_pose(goal_in_slot, camera)
        target = back_project(project_features(camera, landmarks_slot, cam), camera)
        return cls(camera, landmarks_slot, target)

    def observe(self, ee_in_slot: Pose, rng: Optional[np.random.Generator]) -> FeatureSet:
        cam = camera_pose(ee_in_slot, self.camera)
        return back_project(project_features(self.camera, self.landmarks, cam, rng), self.camera)

    def state(self, ee_in_slot: Pose, rng: Optional[np.random.Generator]) -> PoseError:
        """Camera-frame error ``s_v`` at the given EE pose (slot frame)."""
        return visual_state(self.observe(ee_in_slot, rng), self.target)

    def to_ee(self, s_v: PoseError) -> PoseError:
        R = self.camera.extrinsic.R
        return PoseError(R @ s_v.t_err, R @ s_v.theta_u)
