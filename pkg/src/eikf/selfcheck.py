"""Fast in-memory property checks behind `eikf selftest`.

Reduced-size versions of the test-suite properties; everything runs without
touching the filesystem.
"""

from __future__ import annotations

import numpy as np

from . import consistent, gaussian, kernels, lie, sensors


def _random_scene(rng, n=25):
    intr = sensors.CameraIntrinsics()
    extr = sensors.Extrinsics(
        t_ic=lie.Pose(lie.so3_exp(rng.normal(size=3) * 0.3), rng.normal(size=3) * 0.1),
        t_il=lie.Pose(lie.so3_exp(rng.normal(size=3) * 0.3), rng.normal(size=3) * 0.1),
    )
    x = lie.se23_exp(
        np.concatenate([rng.normal(size=3) * 0.4, rng.normal(size=3) * 2, rng.normal(size=3)])
    )
    t_c = x.pose() @ extr.t_ic
    dirs = rng.normal(size=(n, 3))
    dirs[:, 2] = np.abs(dirs[:, 2]) + 1.0
    pts = dirs / np.linalg.norm(dirs, axis=1, keepdims=True) * rng.uniform(3, 10, (n, 1))
    p_w = pts @ t_c.rotation.T + t_c.translation
    lm = sensors.LandmarkMap.from_positions(p_w)
    pix = np.column_stack(
        [
            intr.f_x * pts[:, 0] / pts[:, 2] + intr.u_0,
            intr.f_y * pts[:, 1] / pts[:, 2] + intr.v_0,
        ]
    )
    batch = sensors.CameraBatch(np.arange(n), pix)
    return x, extr, intr, batch, lm


def _lidar_scene(rng, n=25, sigma=0.0):
    extr = sensors.Extrinsics.identity()
    x = lie.se23_exp(
        np.concatenate([rng.normal(size=3) * 0.4, rng.normal(size=3) * 2, rng.normal(size=3)])
    )
    normals = rng.normal(size=(n, 3))
    normals /= np.linalg.norm(normals, axis=1, keepdims=True)
    q = rng.normal(size=(n, 3)) * 8
    tang = rng.normal(size=(n, 3))
    tang -= np.einsum("ij,ij->i", tang, normals)[:, None] * normals
    p_f = q + tang
    z = (p_f - x.position) @ x.rotation + sigma * rng.standard_normal((n, 3))
    return x, extr, sensors.LidarBatch(z, normals, q)


def check_lie_roundtrip():
    rng = np.random.default_rng(0)
    for _ in range(200):
        xi = rng.normal(size=9)
        nrm = np.linalg.norm(xi[:3])
        if nrm > np.pi - 0.1:
            xi[:3] *= (np.pi - 0.1) / nrm
        back = lie.se23_log(lie.se23_exp(xi))
        assert np.abs(back - xi).max() < 1e-9, "exp/log roundtrip failed"
    for _ in range(50):
        x = lie.se23_exp(rng.normal(size=9) * 0.7)
        y = lie.se23_exp(rng.normal(size=9) * 0.7)
        lhs = lie.adjoint(x @ y)
        rhs = lie.adjoint(x) @ lie.adjoint(y)
        assert np.abs(lhs - rhs).max() < 1e-10, "adjoint homomorphism failed"


def check_camera_jacobian():
    rng = np.random.default_rng(1)
    eps = 1e-6
    for _ in range(5):
        x, extr, intr, batch, lm = _random_scene(rng)
        h = sensors.camera_jacobian(x, extr, intr, batch, lm)
        fd = np.zeros_like(h)
        for k in range(9):
            d = np.zeros(9)
            d[k] = eps
            rp = sensors.camera_residual((lie.se23_exp(d) @ x).pose(), extr, intr, batch, lm)
            rm = sensors.camera_residual((lie.se23_exp(-d) @ x).pose(), extr, intr, batch, lm)
            fd[:, k] = -(rp - rm) / (2 * eps)
        rel = np.abs(h - fd).max() / max(np.abs(fd).max(), 1.0)
        assert rel < 1e-4, f"camera jacobian finite-difference mismatch {rel:.2e}"


def check_lidar_jacobian():
    rng = np.random.default_rng(2)
    eps = 1e-6
    for _ in range(5):
        x, extr, batch = _lidar_scene(rng)
        h = sensors.lidar_jacobian(x, extr, batch)
        fd = np.zeros_like(h)
        for k in range(9):
            d = np.zeros(9)
            d[k] = eps
            rp = sensors.lidar_residual((lie.se23_exp(d) @ x).pose(), extr, batch)
            rm = sensors.lidar_residual((lie.se23_exp(-d) @ x).pose(), extr, batch)
            fd[:, k] = -(rp - rm) / (2 * eps)
        rel = np.abs(h - fd).max() / max(np.abs(fd).max(), 1.0)
        assert rel < 1e-4, f"lidar jacobian finite-difference mismatch {rel:.2e}"


def check_sigma_fourth_mc():
    rng = np.random.default_rng(3)
    l1 = rng.normal(size=(9, 9)) * 0.04
    p = l1 @ l1.T + 0.005 * np.eye(9)
    l2 = rng.normal(size=(9, 9)) * 0.3
    s = l2 @ l2.T
    pred = gaussian.sigma_fourth(s, p)
    n = 200_000
    xi = rng.multivariate_normal(np.zeros(9), p, size=n)
    nn = rng.multivariate_normal(np.zeros(9), s, size=n)

    def ad_apply(a, v):
        th, pp, w = a[:, :3], a[:, 3:6], a[:, 6:9]
        x, y, z = v[:, :3], v[:, 3:6], v[:, 6:9]
        return np.concatenate(
            [np.cross(th, x), np.cross(pp, x) + np.cross(th, y), np.cross(w, x) + np.cross(th, z)],
            axis=1,
        )

    a1 = ad_apply(xi, nn)
    n4 = nn - 0.5 * a1 + ad_apply(xi, a1) / 6.0
    mc = n4.T @ n4 / n
    err = np.abs(mc - pred).max()
    tol = 4 * np.abs(s).max() * np.sqrt(2.0 / n)
    assert err < tol, f"sigma_fourth MC mismatch {err:.3e} > {tol:.3e}"


def check_consistent_recovery():
    rng = np.random.default_rng(4)
    x, extr, intr, batch, lm = _random_scene(rng, n=40)
    res = consistent.consistent_pose(batch, intr, lm)
    t_c = x.pose() @ extr.t_ic
    err = np.linalg.norm(res.pose.translation - t_c.translation) + np.linalg.norm(
        lie.so3_log(res.pose.rotation.T @ t_c.rotation)
    )
    assert err < 1e-7, f"camera consistent recovery error {err:.2e}"
    x2, _, lbatch = _lidar_scene(rng, n=40)
    res2 = consistent.consistent_pose(lbatch)
    err2 = np.linalg.norm(res2.pose.translation - x2.position) + np.linalg.norm(
        lie.so3_log(res2.pose.rotation.T @ x2.rotation)
    )
    assert err2 < 1e-8, f"lidar consistent recovery error {err2:.2e}"


def check_inekf_equivalence():
    from . import filters

    rng = np.random.default_rng(5)
    for _ in range(10):
        x, extr, batch = _lidar_scene(rng, n=15, sigma=0.05)
        model = filters.LidarModel(batch, extr, 0.05)
        l = rng.normal(size=(15, 15)) * 0.03
        cov = l @ l.T + 1e-3 * np.eye(15)
        belief = filters.BeliefState(x, np.zeros(3), np.zeros(3), cov)
        post, _ = filters.iterated_update(
            belief, model, filters.UpdateConfig(l_max=1), mu0=belief.mean
        )
        # direct gain-form single step
        h9 = model.jacobian(belief.mean)
        h = np.zeros((h9.shape[0], 15))
        h[:, :9] = h9
        r = model.residual(belief.mean.pose())
        s = h @ cov @ h.T + 0.05**2 * np.eye(len(r))
        k = cov @ h.T @ np.linalg.inv(s)
        d = k @ r
        ref = lie.se23_exp(d[:9]) @ belief.mean
        err = np.abs(ref.matrix() - post.mean.matrix()).max()
        assert err < 1e-12, f"single-step equivalence error {err:.2e}"


def check_kernel_parity():
    if kernels.predict_window_compiled is None:
        return
    rng = np.random.default_rng(6)
    rot = lie.so3_exp(rng.normal(size=3))
    l = rng.normal(size=(15, 15)) * 0.05
    cov = l @ l.T + 1e-3 * np.eye(15)
    args = (
        rot, rng.normal(size=3) * 10, rng.normal(size=3),
        np.zeros(3), np.zeros(3), cov,
        rng.normal(size=(50, 3)), rng.normal(size=(50, 3)), np.full(50, 0.01),
        np.array([0.0, 0.0, -9.81]), 0.01, 0.01, 0.001, 0.001,
    )
    a = kernels.predict_window_py(*args)
    b = kernels.predict_window_compiled(*args)
    for x, y in zip(a, b):
        rel = np.abs(x - y).max() / max(np.abs(x).max(), 1e-300)
        assert rel < 1e-9, f"kernel parity violation {rel:.2e}"


def check_noise_variance():
    rng = np.random.default_rng(7)
    x, extr, intr, batch, lm = _random_scene(rng, n=2000)
    pix = batch.pixels + 1.0 * rng.standard_normal(batch.pixels.shape)
    sysm = consistent.build_camera_system(
        sensors.CameraBatch(batch.landmark_ids, pix), lm, intr
    )
    sig = consistent.estimate_noise_variance(sysm.a, sysm.b, sysm.g, sysm.ones)
    assert 0.7 < sig < 1.3, f"noise variance estimate {sig:.3f} far from 1.0"


CHECKS = [
    ("lie-roundtrip-adjoint", check_lie_roundtrip),
    ("camera-jacobian-fd", check_camera_jacobian),
    ("lidar-jacobian-fd", check_lidar_jacobian),
    ("sigma-fourth-mc", check_sigma_fourth_mc),
    ("consistent-noise-free", check_consistent_recovery),
    ("single-step-gain-equivalence", check_inekf_equivalence),
    ("kernel-backend-parity", check_kernel_parity),
    ("noise-variance-estimate", check_noise_variance),
]
