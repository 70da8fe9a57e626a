"""IMU kinematics, camera/LiDAR measurement models and update Jacobians.

Measurement Jacobians follow the filtering convention H = -dr/dT where the
derivative is taken with respect to a left perturbation exp(delta) X of the
state; velocity columns are identically zero for both sensors.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import (
    BehindCameraError,
    DimensionMismatchError,
    MissingLandmarkError,
)
from .lie import ExtendedPose, Pose, skew, so3_exp

MIN_DEPTH = 1e-6


@dataclass
class ImuSample:
    omega_m: np.ndarray  # rad/s, body frame
    a_m: np.ndarray  # m/s^2, body frame
    t: float  # seconds


@dataclass
class CameraIntrinsics:
    f_x: float = 460.0
    f_y: float = 460.0
    u_0: float = 320.0
    v_0: float = 240.0

    def __post_init__(self):
        if self.f_x <= 0 or self.f_y <= 0:
            raise ValueError("focal lengths must be positive")


@dataclass
class LandmarkMap:
    """World-frame point landmarks addressable by integer id."""

    ids: np.ndarray
    positions: np.ndarray

    @classmethod
    def from_positions(cls, positions: np.ndarray) -> "LandmarkMap":
        positions = np.asarray(positions, dtype=float)
        return cls(np.arange(len(positions)), positions)

    def lookup(self, ids: np.ndarray) -> np.ndarray:
        order = np.argsort(self.ids)
        sorted_ids = self.ids[order]
        idx = np.searchsorted(sorted_ids, ids)
        bad = (idx >= len(sorted_ids)) | (sorted_ids[np.minimum(idx, len(sorted_ids) - 1)] != ids)
        if np.any(bad):
            raise MissingLandmarkError(f"unknown landmark ids {np.asarray(ids)[bad][:5]}")
        return self.positions[order[idx]]


@dataclass
class CameraBatch:
    landmark_ids: np.ndarray  # (n,)
    pixels: np.ndarray  # (n, 2)

    def __len__(self) -> int:
        return len(self.landmark_ids)

    def subset(self, mask: np.ndarray) -> "CameraBatch":
        return CameraBatch(self.landmark_ids[mask], self.pixels[mask])


@dataclass
class LidarBatch:
    points: np.ndarray  # (n, 3) in the LiDAR frame
    normals: np.ndarray  # (n, 3) unit plane normals, world frame
    plane_points: np.ndarray  # (n, 3) points on the planes, world frame

    def __len__(self) -> int:
        return len(self.points)

    def subset(self, mask: np.ndarray) -> "LidarBatch":
        return LidarBatch(self.points[mask], self.normals[mask], self.plane_points[mask])


@dataclass
class Extrinsics:
    t_ic: Pose  # camera in the IMU frame
    t_il: Pose  # LiDAR in the IMU frame

    @classmethod
    def identity(cls) -> "Extrinsics":
        return cls(Pose.identity(), Pose.identity())


def imu_mean_propagate(
    x: ExtendedPose,
    bias_g: np.ndarray,
    bias_a: np.ndarray,
    sample: ImuSample,
    dt: float,
    gravity: np.ndarray,
) -> ExtendedPose:
    """One integration step: exact rotation increment, 2nd-order translation.

    The specific force is rotated by the half-step attitude so the world
    acceleration is evaluated at the interval midpoint; without this the
    rotation lag injects an |omega| dt/2 x a error per step.
    """
    w = (sample.omega_m - bias_g) * dt
    rot_mid = x.rotation @ so3_exp(0.5 * w)
    acc = rot_mid @ (sample.a_m - bias_a) + gravity
    return ExtendedPose(
        x.rotation @ so3_exp(w),
        x.position + x.velocity * dt + 0.5 * acc * dt**2,
        x.velocity + acc * dt,
    )


def project(intrinsics: CameraIntrinsics, p_cam: np.ndarray) -> np.ndarray:
    """Pinhole projection of a camera-frame point to pixel coordinates."""
    if p_cam[2] <= MIN_DEPTH:
        raise BehindCameraError(f"point depth {p_cam[2]!r} <= {MIN_DEPTH}")
    return np.array(
        [
            intrinsics.f_x * p_cam[0] / p_cam[2] + intrinsics.u_0,
            intrinsics.f_y * p_cam[1] / p_cam[2] + intrinsics.v_0,
        ]
    )


def camera_frame_points(
    t: Pose, extrinsics: Extrinsics, points_world: np.ndarray
) -> np.ndarray:
    """World points expressed in the camera frame, with T the IMU pose."""
    t_c = t @ extrinsics.t_ic
    return (points_world - t_c.translation) @ t_c.rotation


def camera_residual(
    t: Pose,
    extrinsics: Extrinsics,
    intrinsics: CameraIntrinsics,
    batch: CameraBatch,
    landmarks: LandmarkMap,
    return_mask: bool = False,
):
    """Stacked pixel residuals z - h(.); features behind the camera are dropped."""
    p_w = landmarks.lookup(batch.landmark_ids)
    q = camera_frame_points(t, extrinsics, p_w)
    mask = q[:, 2] > MIN_DEPTH
    qk = q[mask]
    pred = np.column_stack(
        [
            intrinsics.f_x * qk[:, 0] / qk[:, 2] + intrinsics.u_0,
            intrinsics.f_y * qk[:, 1] / qk[:, 2] + intrinsics.v_0,
        ]
    )
    r = (batch.pixels[mask] - pred).reshape(-1)
    if return_mask:
        return r, mask
    return r


def camera_jacobian(
    x_lin: ExtendedPose,
    extrinsics: Extrinsics,
    intrinsics: CameraIntrinsics,
    batch: CameraBatch,
    landmarks: LandmarkMap,
    return_mask: bool = False,
):
    """(2k x 9) Jacobian of the negative camera residual at the linearization state."""
    p_w = landmarks.lookup(batch.landmark_ids)
    q = camera_frame_points(x_lin.pose(), extrinsics, p_w)
    mask = q[:, 2] > MIN_DEPTH
    q = q[mask]
    p_w = p_w[mask]
    k = len(q)

    inv_z = 1.0 / q[:, 2]
    dh = np.zeros((k, 2, 3))
    dh[:, 0, 0] = intrinsics.f_x * inv_z
    dh[:, 0, 2] = -intrinsics.f_x * q[:, 0] * inv_z**2
    dh[:, 1, 1] = intrinsics.f_y * inv_z
    dh[:, 1, 2] = -intrinsics.f_y * q[:, 1] * inv_z**2

    # dq/dtheta = Ric^T R^T (p_w)^ and dq/dp = -Ric^T R^T
    a = extrinsics.t_ic.rotation.T @ x_lin.rotation.T
    da = np.einsum("kij,jl->kil", dh, a)
    h = np.zeros((k, 2, 9))
    h[:, :, 0:3] = np.cross(da, p_w[:, None, :])
    h[:, :, 3:6] = -da
    out = h.reshape(2 * k, 9)
    if return_mask:
        return out, mask
    return out


def lidar_residual(t: Pose, extrinsics: Extrinsics, batch: LidarBatch) -> np.ndarray:
    """Point-to-plane residuals u^T (R_L z + p_L - q)."""
    t_l = t @ extrinsics.t_il
    world = batch.points @ t_l.rotation.T + t_l.translation
    return np.einsum("ij,ij->i", batch.normals, world - batch.plane_points)


def lidar_jacobian(
    x_lin: ExtendedPose, extrinsics: Extrinsics, batch: LidarBatch
) -> np.ndarray:
    """(n x 9) Jacobian of the negative point-to-plane residual."""
    t_l = x_lin.pose() @ extrinsics.t_il
    world = batch.points @ t_l.rotation.T + t_l.translation
    h = np.zeros((len(batch), 9))
    h[:, 0:3] = np.cross(batch.normals, world)
    h[:, 3:6] = -batch.normals
    return h
