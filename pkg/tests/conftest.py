import numpy as np
import pytest

from eikf import lie, sensors


def random_extended_pose(rng, rot_scale=0.8, pos_scale=3.0, vel_scale=1.0):
    xi = np.concatenate(
        [
            rng.normal(size=3) * rot_scale,
            rng.normal(size=3) * pos_scale,
            rng.normal(size=3) * vel_scale,
        ]
    )
    return lie.se23_exp(xi)


def camera_scene(rng, n=30, sigma=0.0, extrinsics=None, depth=(3.0, 12.0)):
    """Random state plus n landmarks in front of its camera; returns
    (state, extrinsics, intrinsics, batch, landmark_map)."""
    intr = sensors.CameraIntrinsics()
    if extrinsics is None:
        extrinsics = sensors.Extrinsics(
            t_ic=lie.Pose(lie.so3_exp(rng.normal(size=3) * 0.3), rng.normal(size=3) * 0.1),
            t_il=lie.Pose(lie.so3_exp(rng.normal(size=3) * 0.3), rng.normal(size=3) * 0.1),
        )
    x = random_extended_pose(rng)
    t_c = x.pose() @ extrinsics.t_ic
    dirs = rng.normal(size=(n, 3))
    dirs[:, 2] = np.abs(dirs[:, 2]) + 0.8
    pts_cam = dirs / np.linalg.norm(dirs, axis=1, keepdims=True) * rng.uniform(
        depth[0], depth[1], size=(n, 1)
    )
    p_w = pts_cam @ t_c.rotation.T + t_c.translation
    lm = sensors.LandmarkMap.from_positions(p_w)
    pix = np.column_stack(
        [
            intr.f_x * pts_cam[:, 0] / pts_cam[:, 2] + intr.u_0,
            intr.f_y * pts_cam[:, 1] / pts_cam[:, 2] + intr.v_0,
        ]
    )
    pix = pix + sigma * rng.standard_normal(pix.shape)
    return x, extrinsics, intr, sensors.CameraBatch(np.arange(n), pix), lm


def lidar_scene(rng, n=30, sigma=0.0, extrinsics=None, scale=8.0):
    """Random state plus n plane constraints; returns (state, extrinsics, batch)."""
    if extrinsics is None:
        extrinsics = sensors.Extrinsics(
            t_ic=lie.Pose(lie.so3_exp(rng.normal(size=3) * 0.3), rng.normal(size=3) * 0.1),
            t_il=lie.Pose(lie.so3_exp(rng.normal(size=3) * 0.3), rng.normal(size=3) * 0.1),
        )
    x = random_extended_pose(rng)
    normals = rng.normal(size=(n, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    q = rng.normal(size=(n, 3)) * scale
    tang = rng.normal(size=(n, 3))
    tang -= np.einsum("ij,ij->i", tang, normals)[:, None] * normals
    p_f = q + tang
    t_l = x.pose() @ extrinsics.t_il
    z = (p_f - t_l.translation) @ t_l.rotation + sigma * rng.standard_normal((n, 3))
    return x, extrinsics, sensors.LidarBatch(z, normals, q)


def pose_error(t_true: lie.Pose, t_hat: lie.Pose) -> float:
    """Rotation angle plus translation distance."""
    ang = np.linalg.norm(lie.so3_log(t_hat.rotation.T @ t_true.rotation))
    return float(ang + np.linalg.norm(t_hat.translation - t_true.translation))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
