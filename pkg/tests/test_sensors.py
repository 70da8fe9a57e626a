import numpy as np
import pytest

from conftest import camera_scene, lidar_scene
from eikf import lie, sensors
from eikf.errors import BehindCameraError, MissingLandmarkError
from eikf.gaussian import GRAVITY
from eikf.sensors import CameraIntrinsics, ImuSample


class TestImuMeanPropagate:
    def test_unforced_motion(self):
        x = lie.ExtendedPose(np.eye(3), np.zeros(3), np.array([1.0, 0, 0]))
        bias_g = np.array([0.01, -0.02, 0.005])
        bias_a = np.array([0.1, 0.0, -0.05])
        sample = ImuSample(bias_g.copy(), bias_a.copy(), 0.0)
        out = sensors.imu_mean_propagate(x, bias_g, bias_a, sample, 0.1, np.zeros(3))
        assert np.allclose(out.rotation, np.eye(3))
        assert np.allclose(out.position, [0.1, 0, 0])
        assert np.allclose(out.velocity, [1.0, 0, 0])

    def test_stationary_hover(self, rng):
        rot = lie.so3_exp(rng.normal(size=3))
        x = lie.ExtendedPose(rot, rng.normal(size=3), np.zeros(3))
        bias_a = np.array([0.1, -0.2, 0.3])
        sample = ImuSample(np.zeros(3), rot.T @ (-GRAVITY) + bias_a, 0.0)
        out = sensors.imu_mean_propagate(x, np.zeros(3), bias_a, sample, 0.01, GRAVITY)
        assert np.allclose(out.position, x.position, atol=1e-12)
        assert np.allclose(out.velocity, np.zeros(3), atol=1e-12)

    def test_constant_rate_rotation_oracle(self):
        omega = np.array([0.0, 0.0, 1.2])
        x = lie.ExtendedPose.identity()
        for _ in range(100):
            x = sensors.imu_mean_propagate(
                x, np.zeros(3), np.zeros(3), ImuSample(omega, np.zeros(3), 0.0), 0.01, np.zeros(3)
            )
        assert np.abs(x.rotation - lie.so3_exp(omega * 1.0)).max() < 1e-5


class TestProject:
    def test_on_axis(self):
        intr = CameraIntrinsics(f_x=1.0, f_y=1.0, u_0=0.0, v_0=0.0)
        assert np.allclose(sensors.project(intr, np.array([0.0, 0, 5])), [0, 0])

    def test_formula(self):
        intr = CameraIntrinsics()
        assert np.allclose(sensors.project(intr, np.array([1.0, 0, 2])), [550, 240])

    def test_behind_camera(self):
        with pytest.raises(BehindCameraError):
            sensors.project(CameraIntrinsics(), np.array([0.0, 0, -1]))


class TestCameraResidual:
    def test_zero_at_truth(self, rng):
        x, extr, intr, batch, lm = camera_scene(rng, n=40)
        r = sensors.camera_residual(x.pose(), extr, intr, batch, lm)
        assert np.abs(r).max() < 1e-10

    def test_single_landmark_manual(self):
        intr = CameraIntrinsics()
        extr = sensors.Extrinsics.identity()
        t = lie.Pose(np.eye(3), np.array([1.0, 2.0, 3.0]))
        p_w = np.array([[2.0, 2.0, 8.0]])
        lm = sensors.LandmarkMap.from_positions(p_w)
        q = p_w[0] - t.translation  # camera frame point (1, 0, 5)
        expected_pix = np.array(
            [intr.f_x * q[0] / q[2] + intr.u_0, intr.f_y * q[1] / q[2] + intr.v_0]
        )
        z = expected_pix + np.array([0.5, -0.25])
        batch = sensors.CameraBatch(np.array([0]), z[None, :])
        r = sensors.camera_residual(t, extr, intr, batch, lm)
        assert np.allclose(r, [0.5, -0.25])

    def test_pixel_noise_variance(self, rng):
        x, extr, intr, batch, lm = camera_scene(rng, n=10_000, sigma=1.0)
        r = sensors.camera_residual(x.pose(), extr, intr, batch, lm)
        assert abs(np.var(r) - 1.0) < 0.1

    def test_missing_landmark(self, rng):
        x, extr, intr, batch, lm = camera_scene(rng, n=10)
        bad = sensors.CameraBatch(np.array([999]), np.zeros((1, 2)))
        with pytest.raises(MissingLandmarkError):
            sensors.camera_residual(x.pose(), extr, intr, bad, lm)

    def test_behind_camera_dropped(self, rng):
        x, extr, intr, batch, lm = camera_scene(rng, n=10)
        flipped = lie.Pose(x.rotation @ lie.so3_exp(np.array([np.pi, 0, 0])), x.position)
        r, mask = sensors.camera_residual(flipped, extr, intr, batch, lm, return_mask=True)
        assert len(r) == 2 * mask.sum()
        assert mask.sum() < 10


class TestLidarResidual:
    def test_direct_substitution(self):
        extr = sensors.Extrinsics.identity()
        batch = sensors.LidarBatch(
            points=np.array([[0.0, 0, 0]]),
            normals=np.array([[0.0, 0, 1]]),
            plane_points=np.array([[0.0, 0, 2]]),
        )
        r = sensors.lidar_residual(lie.Pose.identity(), extr, batch)
        assert np.allclose(r, [-2.0])

    def test_zero_at_truth(self, rng):
        x, extr, batch = lidar_scene(rng, n=40)
        assert np.abs(sensors.lidar_residual(x.pose(), extr, batch)).max() < 1e-10

    def test_noise_variance(self, rng):
        x, extr, batch = lidar_scene(rng, n=10_000, sigma=0.2)
        r = sensors.lidar_residual(x.pose(), extr, batch)
        assert abs(np.var(r) - 0.04) < 0.004


def finite_difference_jacobian(residual_fn, x, eps=1e-6):
    r0 = residual_fn(x.pose())
    out = np.zeros((len(r0), 9))
    for k in range(9):
        d = np.zeros(9)
        d[k] = eps
        rp = residual_fn((lie.se23_exp(d) @ x).pose())
        rm = residual_fn((lie.se23_exp(-d) @ x).pose())
        out[:, k] = -(rp - rm) / (2 * eps)
    return out


class TestJacobians:
    def test_camera_velocity_columns_zero(self, rng):
        x, extr, intr, batch, lm = camera_scene(rng)
        h = sensors.camera_jacobian(x, extr, intr, batch, lm)
        assert np.all(h[:, 6:9] == 0.0)

    def test_lidar_velocity_columns_zero(self, rng):
        x, extr, batch = lidar_scene(rng)
        h = sensors.lidar_jacobian(x, extr, batch)
        assert np.all(h[:, 6:9] == 0.0)

    def test_camera_finite_difference(self, rng):
        for _ in range(20):
            x, extr, intr, batch, lm = camera_scene(rng, n=15)
            h = sensors.camera_jacobian(x, extr, intr, batch, lm)
            fd = finite_difference_jacobian(
                lambda t: sensors.camera_residual(t, extr, intr, batch, lm), x
            )
            assert np.abs(h - fd).max() / max(np.abs(fd).max(), 1.0) < 1e-4

    def test_lidar_finite_difference(self, rng):
        for _ in range(20):
            x, extr, batch = lidar_scene(rng, n=15)
            h = sensors.lidar_jacobian(x, extr, batch)
            fd = finite_difference_jacobian(
                lambda t: sensors.lidar_residual(t, extr, batch), x
            )
            assert np.abs(h - fd).max() / max(np.abs(fd).max(), 1.0) < 1e-4

    def test_projection_derivative_on_axis(self):
        """On the optical axis the pixel derivative reduces to diag(f)/z."""
        intr = CameraIntrinsics()
        extr = sensors.Extrinsics.identity()
        p_z = 5.0
        lm = sensors.LandmarkMap.from_positions(np.array([[0.0, 0.0, p_z]]))
        batch = sensors.CameraBatch(np.array([0]), np.array([[intr.u_0, intr.v_0]]))
        x = lie.ExtendedPose.identity()
        h = sensors.camera_jacobian(x, extr, intr, batch, lm)
        assert np.allclose(h[:, 3:6], -np.array([[intr.f_x, 0, 0], [0, intr.f_y, 0]]) / p_z)

    def test_lidar_identity_position_block(self):
        extr = sensors.Extrinsics.identity()
        batch = sensors.LidarBatch(
            points=np.array([[1.0, 2, 3]]),
            normals=np.array([[0.0, 0, 1]]),
            plane_points=np.array([[0.0, 0, 0]]),
        )
        h = sensors.lidar_jacobian(lie.ExtendedPose.identity(), extr, batch)
        assert np.allclose(h[0, 3:6], [0.0, 0, -1])

    def test_gauss_newton_step_reduces_residual(self, rng):
        """End-to-end sign check: one GN step from a small perturbation."""
        for scene in ("camera", "lidar"):
            if scene == "camera":
                x, extr, intr, batch, lm = camera_scene(rng, n=30)

                def resid(t):
                    return sensors.camera_residual(t, extr, intr, batch, lm)

                def jac(xp):
                    return sensors.camera_jacobian(xp, extr, intr, batch, lm)

            else:
                x, extr, batch = lidar_scene(rng, n=30)

                def resid(t):
                    return sensors.lidar_residual(t, extr, batch)

                def jac(xp):
                    return sensors.lidar_jacobian(xp, extr, batch)

            d = rng.normal(size=9)
            d *= 1e-3 / np.linalg.norm(d)
            x_pert = lie.se23_exp(d) @ x
            r0 = resid(x_pert.pose())
            h = jac(x_pert)
            step = np.linalg.lstsq(h, r0, rcond=None)[0]
            x_new = lie.se23_exp(step) @ x_pert
            r1 = resid(x_new.pose())
            assert np.linalg.norm(r1) < np.linalg.norm(r0) / 100.0
