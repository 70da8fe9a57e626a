"""Closed-form sqrt(n)-consistent pose estimators for PnP and point-to-plane ICP.

Both sensors reduce to an overdetermined linear system b = A x + noise whose
regressor A contains measurement noise. Plain least squares is therefore
biased; subtracting the estimated noise contribution from the normal
equations restores consistency, and the unconstrained solution is projected
onto SE(3) by an orthogonal Procrustes step.

Parametrizations differ per sensor: the camera solves for the world-to-camera
pair vec([R^T | -R^T p]) with a depth-normalizing scale, while the LiDAR
solves directly for [vec(R); p]. vec() stacks columns.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import (
    DegenerateGeometryError,
    DegenerateRotationBlockError,
    IllConditionedError,
    SingularPencilError,
    TooFewFeaturesError,
)
from .lie import ExtendedPose, Pose, se3_exp
from .sensors import (
    CameraBatch,
    CameraIntrinsics,
    Extrinsics,
    LandmarkMap,
    LidarBatch,
    lidar_jacobian,
    lidar_residual,
)

MIN_FEATURES = 6
# The direct 12-parameter LiDAR system needs 12 rows to be determined.
LIDAR_CLOSED_FORM_MIN = 12
COND_LIMIT = 1e12


@dataclass
class CameraLinearSystem:
    a: np.ndarray  # (2n, 11)
    b: np.ndarray  # (2n,)
    g: np.ndarray  # (2n, 11) noise coefficient matrix
    ones: np.ndarray  # (2n,) noise coefficient of b
    p_bar_f: np.ndarray  # (3,) landmark centroid


@dataclass
class LidarLinearSystem:
    a: np.ndarray  # (n, 12)
    b: np.ndarray  # (n,)
    q_bar: np.ndarray  # (12, 12) = diag(UU^T/n x3, 0)

    def noise_coefficient(self) -> tuple[np.ndarray, np.ndarray]:
        """Explicit (G, b-noise-coefficient) pair with G^T G = n q_bar.

        Only needed when calling estimate_noise_variance directly; the
        pipeline uses the closed-form Gram matrices instead.
        """
        n = len(self.a)
        u = self.a[:, 9:12]
        g = np.zeros((3 * n, 12))
        for k in range(3):
            g[k::3, 3 * k : 3 * k + 3] = u
        return g, np.zeros(3 * n)


@dataclass
class ConsistentPoseResult:
    pose: Pose  # sensor pose in the world frame (sensor-to-world)
    sigma_hat: float  # estimated measurement noise s.d.
    n_used: int


def build_camera_system(
    batch: CameraBatch, landmarks: LandmarkMap, intrinsics: CameraIntrinsics
) -> CameraLinearSystem:
    """Linear system in the 11 scaled pose unknowns, from centered pixels."""
    n = len(batch)
    if n < MIN_FEATURES:
        raise TooFewFeaturesError(f"camera solver needs >= {MIN_FEATURES} features, got {n}")
    p = landmarks.lookup(batch.landmark_ids)
    p_bar = p.mean(axis=0)
    pc = p - p_bar
    u = batch.pixels[:, 0] - intrinsics.u_0
    v = batch.pixels[:, 1] - intrinsics.v_0

    a = np.zeros((2 * n, 11))
    a[0::2, 0:3] = -u[:, None] * pc
    a[0::2, 3:6] = intrinsics.f_x * p
    a[0::2, 6] = intrinsics.f_x
    a[1::2, 0:3] = -v[:, None] * pc
    a[1::2, 7:10] = intrinsics.f_y * p
    a[1::2, 10] = intrinsics.f_y

    b = np.empty(2 * n)
    b[0::2] = u
    b[1::2] = v

    g = np.zeros((2 * n, 11))
    g[0::2, 0:3] = -pc
    g[1::2, 0:3] = -pc

    return CameraLinearSystem(a=a, b=b, g=g, ones=np.ones(2 * n), p_bar_f=p_bar)


def build_lidar_system(batch: LidarBatch) -> LidarLinearSystem:
    n = len(batch)
    if n < MIN_FEATURES:
        raise TooFewFeaturesError(f"lidar solver needs >= {MIN_FEATURES} points, got {n}")
    u = batch.normals
    uut = u.T @ u
    w = np.linalg.eigvalsh(uut)
    if w[0] < 1e-8 * max(w[-1], 1e-30):
        raise DegenerateGeometryError("plane normals do not span R^3")

    z = batch.points
    a = np.zeros((n, 12))
    a[:, 0:3] = z[:, 0:1] * u
    a[:, 3:6] = z[:, 1:2] * u
    a[:, 6:9] = z[:, 2:3] * u
    a[:, 9:12] = u
    b = np.einsum("ij,ij->i", u, batch.plane_points)

    q_bar = np.zeros((12, 12))
    for k in range(3):
        q_bar[3 * k : 3 * k + 3, 3 * k : 3 * k + 3] = uut / n

    return LidarLinearSystem(a=a, b=b, q_bar=q_bar)


def _data_gram(a: np.ndarray, b: np.ndarray, scale: float) -> np.ndarray:
    k = a.shape[1]
    m = np.empty((k + 1, k + 1))
    m[:k, :k] = a.T @ a
    m[:k, k] = a.T @ b
    m[k, :k] = m[:k, k]
    m[k, k] = b @ b
    return m / scale


def estimate_noise_variance(
    a: np.ndarray, b: np.ndarray, g: np.ndarray, ones_vec: np.ndarray
) -> float:
    """Noise s.d. as the smallest generalized eigenvalue of the data pencil.

    In expectation [A b]^T [A b] = [A_o b_o]^T [A_o b_o] + sigma^2 [G 1]^T [G 1]
    and the noise-free Gram matrix annihilates [x_true; -1], so sigma^2 is the
    smallest nonnegative eigenvalue of the pencil, solved on the subspace
    where the right-hand matrix is nondegenerate.
    """
    scale = max(len(a), 1)
    nmat = _data_gram(g, ones_vec, scale)
    return _sigma_from_grams(_data_gram(a, b, scale), nmat)


def _sigma_from_grams(m: np.ndarray, nmat: np.ndarray) -> float:
    w, v = np.linalg.eigh(nmat)
    big = w > 1e-12 * max(w[-1], 1e-300)
    if not np.any(big):
        raise SingularPencilError("noise coefficient matrix is zero")
    vr = v[:, big]
    v0 = v[:, ~big]
    mr = vr.T @ m @ vr
    if v0.shape[1]:
        m00 = v0.T @ m @ v0
        m0r = v0.T @ m @ vr
        try:
            mr = mr - m0r.T @ np.linalg.solve(m00, m0r)
        except np.linalg.LinAlgError as exc:
            raise SingularPencilError("degenerate pencil reduction") from exc
    try:
        lam = scipy.linalg.eigh(mr, np.diag(w[big]), eigvals_only=True)
    except scipy.linalg.LinAlgError as exc:
        raise SingularPencilError("generalized eigensolve failed") from exc
    lam = lam[np.isfinite(lam)]
    lam = lam[lam > -1e-6 * max(abs(lam).max(), 1.0)]
    if len(lam) == 0:
        raise SingularPencilError("no finite nonnegative eigenvalue")
    return math.sqrt(max(float(lam.min()), 0.0))


def _corrected_solve(ata: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    if np.linalg.cond(ata) > COND_LIMIT:
        raise IllConditionedError("bias-corrected normal matrix is ill-conditioned")
    return np.linalg.solve(ata, rhs)


def bias_eliminated_camera_solve(sys: CameraLinearSystem, sigma_hat: float) -> np.ndarray:
    """11-vector estimate of the alpha-scaled camera pose parameters."""
    s2 = sigma_hat**2
    lhs = sys.a.T @ sys.a - s2 * (sys.g.T @ sys.g)
    rhs = sys.a.T @ sys.b - s2 * (sys.g.T @ sys.ones)
    return _corrected_solve(lhs, rhs)


def recover_scale_and_assemble(x11: np.ndarray, sys: CameraLinearSystem) -> np.ndarray:
    """Undo the depth normalization: 11-vector -> vec([R^T | -R^T p]).

    The scale alpha is fixed by det(R) = 1 (cube root of the rotation-block
    determinant); its sign is chosen so the mean projected depth is positive.
    """
    w = np.vstack([x11[3:6], x11[7:10], x11[0:3]])  # alpha * R^T (rows r1,r2,r3)
    det = float(np.linalg.det(w))
    if abs(det) < 1e-12:
        raise DegenerateRotationBlockError("rotation block determinant near zero")
    alpha = math.copysign(abs(det) ** (1.0 / 3.0), det)
    rt = w / alpha
    t1 = x11[6] / alpha
    t2 = x11[10] / alpha
    t3 = 1.0 / abs(alpha) - rt[2] @ sys.p_bar_f
    return np.concatenate([rt.flatten(order="F"), [t1, t2, t3]])


def project_to_se3(x12: np.ndarray, parametrization: str = "inverse") -> Pose:
    """Orthogonal projection of a 12-vector onto SE(3).

    "inverse": x12 = vec([R^T | -R^T p])  (camera convention)
    "direct":  x12 = vec([R | p])         (LiDAR convention)
    """
    w = x12[:9].reshape(3, 3, order="F")
    t = x12[9:12]
    u, _, vt = np.linalg.svd(w)
    q = u @ vt
    if np.linalg.det(q) < 0:
        q = u @ np.diag([1.0, 1.0, -1.0]) @ vt
    if parametrization == "inverse":
        rot = q.T
        return Pose(rot, -rot @ t)
    if parametrization == "direct":
        return Pose(q, t.copy())
    raise ValueError(f"unknown parametrization {parametrization!r}")


def bias_eliminated_lidar_solve(
    sys: LidarLinearSystem, sigma_hat: float
) -> ConsistentPoseResult:
    n = len(sys.a)
    lhs = sys.a.T @ sys.a / n - sigma_hat**2 * sys.q_bar
    rhs = sys.a.T @ sys.b / n
    x12 = _corrected_solve(lhs, rhs)
    return ConsistentPoseResult(
        pose=project_to_se3(x12, "direct"), sigma_hat=sigma_hat, n_used=n
    )


def _octahedral_rotations() -> list[np.ndarray]:
    rots = []
    for perm in itertools.permutations(range(3)):
        for signs in itertools.product((1.0, -1.0), repeat=3):
            m = np.zeros((3, 3))
            for i, (j, s) in enumerate(zip(perm, signs)):
                m[i, j] = s
            if np.linalg.det(m) > 0.5:
                rots.append(m)
    return rots


_COARSE_ROTATIONS = _octahedral_rotations()


def _refine_point_to_plane(batch: LidarBatch, t0: Pose, iters: int = 40) -> tuple[Pose, float]:
    extr = Extrinsics.identity()
    t = t0
    for _ in range(iters):
        r = lidar_residual(t, extr, batch)
        h = lidar_jacobian(
            ExtendedPose(t.rotation, t.translation, np.zeros(3)), extr, batch
        )[:, :6]
        try:
            d = np.linalg.solve(h.T @ h, h.T @ r)
        except np.linalg.LinAlgError:
            break
        t = se3_exp(d) @ t
        if np.linalg.norm(d) < 1e-12:
            break
    return t, float(np.sum(lidar_residual(t, extr, batch) ** 2))


def small_sample_lidar_pose(batch: LidarBatch) -> Pose:
    """Pose for 6 <= n < 12 points, where the 12-parameter system is rank deficient.

    Deterministic multi-start Gauss-Newton on the point-to-plane objective:
    coarse axis-aligned rotations with the per-rotation optimal translation,
    refined and scored by residual cost.
    """
    uut = batch.normals.T @ batch.normals
    best: tuple[Pose, float] | None = None
    for r0 in _COARSE_ROTATIONS:
        proj = np.einsum(
            "ij,ij->i", batch.normals, batch.plane_points - batch.points @ r0.T
        )
        p0 = np.linalg.solve(uut, (batch.normals * proj[:, None]).sum(axis=0))
        cand, cost = _refine_point_to_plane(batch, Pose(r0, p0))
        if best is None or cost < best[1]:
            best = (cand, cost)
    assert best is not None
    return best[0]


def consistent_pose(
    batch,
    intrinsics: CameraIntrinsics | None = None,
    landmarks: LandmarkMap | None = None,
    sigma_override: float | None = None,
) -> ConsistentPoseResult:
    """Dispatch the closed-form solver; returns the sensor pose in the world.

    The caller composes with the sensor extrinsic to obtain the body pose.
    sigma_override skips noise-variance estimation (e.g. known simulation
    ground truth).
    """
    if isinstance(batch, CameraBatch):
        if intrinsics is None or landmarks is None:
            raise ValueError("camera batch needs intrinsics and landmarks")
        sys = build_camera_system(batch, landmarks, intrinsics)
        if sigma_override is not None:
            sigma = sigma_override
        else:
            # [G 1]^T [G 1] in closed form: G's only nonzero columns hold the
            # centered landmark coordinates, so G^T 1 vanishes identically.
            scale = len(sys.a)
            nmat = np.zeros((12, 12))
            nmat[:3, :3] = 2.0 * (sys.g[0::2, 0:3].T @ sys.g[0::2, 0:3]) / scale
            nmat[11, 11] = len(sys.a) / scale
            sigma = _sigma_from_grams(_data_gram(sys.a, sys.b, scale), nmat)
        x11 = bias_eliminated_camera_solve(sys, sigma)
        x12 = recover_scale_and_assemble(x11, sys)
        return ConsistentPoseResult(
            pose=project_to_se3(x12, "inverse"), sigma_hat=sigma, n_used=len(batch)
        )
    if isinstance(batch, LidarBatch):
        sys = build_lidar_system(batch)
        if sigma_override is not None:
            sigma = sigma_override
        else:
            scale = len(sys.a)
            nmat = np.zeros((13, 13))
            nmat[:12, :12] = len(sys.a) * sys.q_bar / scale
            sigma = _sigma_from_grams(_data_gram(sys.a, sys.b, scale), nmat)
        if len(batch) < LIDAR_CLOSED_FORM_MIN:
            return ConsistentPoseResult(
                pose=small_sample_lidar_pose(batch), sigma_hat=sigma, n_used=len(batch)
            )
        return bias_eliminated_lidar_solve(sys, sigma)
    raise TypeError(f"unsupported batch type {type(batch)!r}")
