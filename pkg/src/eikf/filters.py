"""Predict/update family on SE2(3).

Update variants:
    ekf     -- error-state EKF baseline (right-multiplicative SO(3) error)
    iekf    -- iterated EKF baseline (Gauss-Newton on the EKF parametrization)
    inekf   -- invariant update, single iteration from the predicted mean
    eikf_i  -- invariant iterated update, initialized at the predicted mean
    eikf_c  -- practical dispatcher: consistent-pose single-step update for
               large batches, invariant iterated update otherwise

The iterated update is Gauss-Newton on the group expressed in Kalman form:
mu[l+1] = exp(K (r + H delta[l])) Xbar with K = Pbar J^-T H^T S^-1. The solve
uses the equivalent information form J F H^T Sigma^-1 (F the inverse GN
Hessian), which costs O(n) for n measurement rows and yields the posterior
covariance directly as F. Biases are augmented states: H has zero bias
columns and the bias rows of the gain act through the prior cross-covariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from . import consistent as cons
from . import kernels
from .errors import (
    DegenerateGeometryError,
    DegenerateRotationBlockError,
    EmptyBatchError,
    EmptyWindowError,
    IllConditionedError,
    LogDomainError,
    NonMonotonicTimeError,
    NumericalFailureError,
    SingularPencilError,
    TooFewFeaturesError,
)
from .gaussian import GRAVITY, BeliefState, NoiseParams
from .errors import AngleAtPiError
from .lie import (
    ExtendedPose,
    Pose,
    dexp_inv,
    se3_exp,
    se3_log,
    se23_exp,
    se23_log,
    skew,
    so3_exp,
    so3_log,
)
from .sensors import (
    CameraBatch,
    CameraIntrinsics,
    Extrinsics,
    ImuSample,
    LandmarkMap,
    LidarBatch,
    camera_jacobian,
    camera_residual,
    lidar_jacobian,
    lidar_residual,
)

LOG_DOMAIN_MARGIN = 1e-6

CONSISTENT_FALLBACK_ERRORS = (
    TooFewFeaturesError,
    SingularPencilError,
    IllConditionedError,
    DegenerateGeometryError,
    DegenerateRotationBlockError,
    LogDomainError,
)


@dataclass
class UpdateConfig:
    l_max: int = 3
    tau: float = 1e-6
    n_threshold: int = 50
    variant: str = "eikf_c"
    cost_mode: str = "paper"  # "paper" | "map"
    sigma_mode: str = "estimated"  # "estimated" | "true"
    sigma_floor: float = 1e-6

    def __post_init__(self):
        if self.l_max < 1:
            raise ValueError("l_max must be >= 1")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.cost_mode not in ("paper", "map"):
            raise ValueError(f"unknown cost_mode {self.cost_mode!r}")


@dataclass
class UpdateReport:
    iterations_used: int = 0
    final_cost: float = math.nan
    costs: list = field(default_factory=list)
    gain_norm: float = 0.0
    features_used: int = 0
    features_dropped: int = 0
    path: str = ""
    sigma_hat: float = math.nan


class CameraModel:
    """Camera batch bound to its landmarks, intrinsics, extrinsic and noise."""

    kind = "camera"

    def __init__(
        self,
        batch: CameraBatch,
        landmarks: LandmarkMap,
        intrinsics: CameraIntrinsics,
        extrinsics: Extrinsics,
        sigma: float,
    ):
        self.batch = batch
        self.landmarks = landmarks
        self.intrinsics = intrinsics
        self.extrinsics = extrinsics
        self.sigma = sigma

    @property
    def n_features(self) -> int:
        return len(self.batch)

    @property
    def extrinsic(self) -> Pose:
        return self.extrinsics.t_ic

    def visible_subset(self, pose: Pose) -> "CameraModel":
        _, mask = camera_residual(
            pose, self.extrinsics, self.intrinsics, self.batch, self.landmarks,
            return_mask=True,
        )
        if np.all(mask):
            return self
        return CameraModel(
            self.batch.subset(mask), self.landmarks, self.intrinsics,
            self.extrinsics, self.sigma,
        )

    def residual(self, pose: Pose) -> np.ndarray:
        return camera_residual(
            pose, self.extrinsics, self.intrinsics, self.batch, self.landmarks
        )

    def jacobian(self, x_lin: ExtendedPose) -> np.ndarray:
        return camera_jacobian(
            x_lin, self.extrinsics, self.intrinsics, self.batch, self.landmarks
        )

    def jacobian_ekf(self, rot: np.ndarray, pos: np.ndarray) -> np.ndarray:
        """Jacobian in the EKF error parametrization R = Rhat exp(dtheta)."""
        p_w = self.landmarks.lookup(self.batch.landmark_ids)
        q = (p_w - (rot @ self.extrinsics.t_ic.translation + pos)) @ (
            rot @ self.extrinsics.t_ic.rotation
        )
        k = len(q)
        inv_z = 1.0 / q[:, 2]
        dh = np.zeros((k, 2, 3))
        dh[:, 0, 0] = self.intrinsics.f_x * inv_z
        dh[:, 0, 2] = -self.intrinsics.f_x * q[:, 0] * inv_z**2
        dh[:, 1, 1] = self.intrinsics.f_y * inv_z
        dh[:, 1, 2] = -self.intrinsics.f_y * q[:, 1] * inv_z**2
        c = np.einsum("kij,jl->kil", dh, self.extrinsics.t_ic.rotation.T)
        w = (p_w - pos) @ rot  # Rhat^T (p_f - phat)
        h = np.zeros((k, 2, 9))
        h[:, :, 0:3] = np.cross(c, w[:, None, :])
        h[:, :, 3:6] = -np.einsum("kij,jl->kil", c, rot.T)
        return h.reshape(2 * k, 9)

    def consistent_estimate(self, sigma_override=None) -> cons.ConsistentPoseResult:
        return cons.consistent_pose(
            self.batch, self.intrinsics, self.landmarks, sigma_override=sigma_override
        )


class LidarModel:
    kind = "lidar"

    def __init__(self, batch: LidarBatch, extrinsics: Extrinsics, sigma: float):
        self.batch = batch
        self.extrinsics = extrinsics
        self.sigma = sigma

    @property
    def n_features(self) -> int:
        return len(self.batch)

    @property
    def extrinsic(self) -> Pose:
        return self.extrinsics.t_il

    def visible_subset(self, pose: Pose) -> "LidarModel":
        return self

    def residual(self, pose: Pose) -> np.ndarray:
        return lidar_residual(pose, self.extrinsics, self.batch)

    def jacobian(self, x_lin: ExtendedPose) -> np.ndarray:
        return lidar_jacobian(x_lin, self.extrinsics, self.batch)

    def jacobian_ekf(self, rot: np.ndarray, pos: np.ndarray) -> np.ndarray:
        body = self.batch.points @ self.extrinsics.t_il.rotation.T + (
            self.extrinsics.t_il.translation
        )
        h = np.zeros((len(self.batch), 9))
        h[:, 0:3] = np.cross(self.batch.normals @ rot, body)
        h[:, 3:6] = -self.batch.normals
        return h

    def consistent_estimate(self, sigma_override=None) -> cons.ConsistentPoseResult:
        return cons.consistent_pose(self.batch, sigma_override=sigma_override)


def _cho_factor_jittered(mat: np.ndarray):
    """Cholesky with escalating diagonal jitter for near-degenerate matrices."""
    try:
        return scipy.linalg.cho_factor(mat, check_finite=False)
    except scipy.linalg.LinAlgError:
        pass
    scale = max(float(np.trace(mat)) / mat.shape[0], 1e-300)
    for rel in (1e-12, 1e-9, 1e-6):
        try:
            return scipy.linalg.cho_factor(
                mat + rel * scale * np.eye(mat.shape[0]), check_finite=False
            )
        except scipy.linalg.LinAlgError:
            continue
    raise NumericalFailureError("matrix not positive definite")


def _spd_inverse(mat: np.ndarray) -> np.ndarray:
    c = _cho_factor_jittered(mat)
    return scipy.linalg.cho_solve(c, np.eye(mat.shape[0]), check_finite=False)


def _spd_solve(mat: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    c = _cho_factor_jittered(mat)
    return scipy.linalg.cho_solve(c, rhs, check_finite=False)


def _log_delta(mu: ExtendedPose, x_bar: ExtendedPose) -> np.ndarray:
    try:
        delta = se23_log(mu @ x_bar.inverse())
    except AngleAtPiError as exc:
        raise LogDomainError("iterate left the log domain of the prior mean") from exc
    if np.linalg.norm(delta[:3]) >= math.pi - LOG_DOMAIN_MARGIN:
        raise LogDomainError("rotation increment too close to pi")
    return delta


def predict(
    belief: BeliefState,
    imu_window: list[ImuSample],
    params: NoiseParams,
    gravity: np.ndarray = GRAVITY,
    dt_first: float | None = None,
) -> BeliefState:
    """Prediction over an IMU window.

    The mean is integrated sample by sample; the covariance is propagated per
    sub-step with the 4th-order process noise recomputed from the running
    prior. Each sample is applied over the interval ending at its timestamp;
    `dt_first` sets the first interval (defaults to the following gap).
    """
    if len(imu_window) == 0:
        raise EmptyWindowError("predict needs at least one IMU sample")
    times = np.array([s.t for s in imu_window])
    diffs = np.diff(times)
    if np.any(diffs <= 0):
        raise NonMonotonicTimeError("IMU timestamps must be strictly increasing")
    if dt_first is None:
        if len(imu_window) < 2:
            raise EmptyWindowError("single-sample window needs an explicit dt_first")
        dt_first = float(diffs[0])
    dts = np.concatenate([[dt_first], diffs])
    omegas = np.stack([s.omega_m for s in imu_window])
    accs = np.stack([s.a_m for s in imu_window])

    rot, pos, vel, cov = kernels.predict_window(
        belief.mean.rotation,
        belief.mean.position,
        belief.mean.velocity,
        belief.bias_g,
        belief.bias_a,
        belief.cov,
        omegas,
        accs,
        dts,
        np.asarray(gravity, dtype=float),
        params.sigma_g,
        params.sigma_a,
        params.sigma_bg,
        params.sigma_ba,
    )
    return BeliefState(ExtendedPose(rot, pos, vel), belief.bias_g.copy(), belief.bias_a.copy(), cov)


def _information_step(
    belief: BeliefState,
    model,
    mu: ExtendedPose,
    bias: np.ndarray,
    sigma: float,
    p_inv: np.ndarray,
):
    """One Gauss-Newton/Kalman step linearized at mu; returns the new iterate."""
    x_bar = belief.mean
    delta = _log_delta(mu, x_bar)
    model_l = model.visible_subset(mu.pose())
    r = model_l.residual(mu.pose())
    if len(r) == 0:
        raise EmptyBatchError("no measurements visible at the linearization point")
    h = model_l.jacobian(mu)
    j9 = dexp_inv(delta)

    inv_s2 = 1.0 / sigma**2
    hth = h.T @ h
    lam = np.zeros((15, 15))
    lam[:9, :9] = j9.T @ p_inv[:9, :9] @ j9 + inv_s2 * hth
    lam[:9, 9:] = j9.T @ p_inv[:9, 9:]
    lam[9:, :9] = lam[:9, 9:].T
    lam[9:, 9:] = p_inv[9:, 9:]
    lam = 0.5 * (lam + lam.T)

    rhs = np.zeros(15)
    rhs[:9] = inv_s2 * (h.T @ (r + h @ delta))
    sol = _spd_solve(lam, rhs)
    d = np.empty(15)
    d[:9] = j9 @ sol[:9]
    d[9:] = sol[9:]

    mu_next = se23_exp(d[:9]) @ x_bar
    bias_next = np.concatenate([belief.bias_g, belief.bias_a]) + d[9:]

    # ||K||_F^2 = tr(J F (H^T Sigma^-2 H) F J^T) on the augmented state
    f = _spd_inverse(lam)
    jf = f.copy()
    jf[:9, :] = j9 @ f[:9, :]
    gain_norm = math.sqrt(max(np.einsum("ij,jk,ik->", jf[:, :9], hth, jf[:, :9]) * inv_s2**2, 0.0))
    n_rows_per = 2 if model.kind == "camera" else 1
    used = len(r) // n_rows_per
    return mu_next, bias_next, lam, f, gain_norm, used


def update_cost(
    mu: ExtendedPose,
    bias: np.ndarray,
    belief: BeliefState,
    model,
    sigma: float,
    mode: str = "paper",
    p_inv: np.ndarray | None = None,
) -> float:
    """Iteration cost for the termination test.

    "paper" weights the prior term by (J^T Pbar^-1 J)^-1 as printed in the
    iterated-update algorithm; "map" uses the MAP weight Pbar^-1.
    """
    if p_inv is None:
        p_inv = _spd_inverse(belief.cov)
    delta = _log_delta(mu, belief.mean)
    d_aug = np.concatenate([delta, bias - np.concatenate([belief.bias_g, belief.bias_a])])
    model_c = model.visible_subset(mu.pose())
    r = model_c.residual(mu.pose())
    r_term = float(r @ r) / sigma**2
    if mode == "map":
        return float(d_aug @ p_inv @ d_aug) + r_term
    j9 = dexp_inv(delta)
    j_aug = np.eye(15)
    j_aug[:9, :9] = j9
    info = j_aug.T @ p_inv @ j_aug
    weight = _spd_inverse(0.5 * (info + info.T))
    return float(d_aug @ weight @ d_aug) + r_term


def iterated_update(
    belief: BeliefState,
    model,
    cfg: UpdateConfig,
    mu0: ExtendedPose | None = None,
) -> tuple[BeliefState, UpdateReport]:
    """Iterated Gauss-Newton update in Kalman form.

    Terminates when the cost change drops below tau or after l_max
    iterations; the posterior covariance comes from the last linearization.
    """
    if model.n_features == 0:
        raise EmptyBatchError("empty measurement batch")
    x_bar = belief.mean
    mu = mu0 if mu0 is not None else x_bar
    _log_delta(mu, x_bar)  # domain check on the initialization
    bias = np.concatenate([belief.bias_g, belief.bias_a])
    sigma = max(model.sigma, cfg.sigma_floor)
    p_inv = _spd_inverse(belief.cov)

    dropped = model.n_features - model.visible_subset(mu.pose()).n_features
    costs = [update_cost(mu, bias, belief, model, sigma, cfg.cost_mode, p_inv)]
    lam = None
    f = None
    gain_norm = 0.0
    used = 0
    iters = 0
    for _ in range(cfg.l_max):
        mu, bias, lam, f, gain_norm, used = _information_step(
            belief, model, mu, bias, sigma, p_inv
        )
        iters += 1
        costs.append(update_cost(mu, bias, belief, model, sigma, cfg.cost_mode, p_inv))
        if abs(costs[-1] - costs[-2]) <= cfg.tau:
            break

    post = BeliefState(mu, bias[:3].copy(), bias[3:].copy(), 0.5 * (f + f.T))
    report = UpdateReport(
        iterations_used=iters,
        final_cost=costs[-1],
        costs=costs,
        gain_norm=gain_norm,
        features_used=used,
        features_dropped=dropped,
        path="iterated",
    )
    return post, report


def eikf_update(
    belief: BeliefState,
    model,
    cfg: UpdateConfig,
) -> tuple[BeliefState, UpdateReport]:
    """Single-step update linearized at the consistent pose estimate.

    The measurement covariance is rebuilt from the estimated noise level
    (or the configured true level); exactly one gain evaluation, O(n).
    """
    if model.n_features == 0:
        raise EmptyBatchError("empty measurement batch")
    sigma_override = model.sigma if cfg.sigma_mode == "true" else None
    res = model.consistent_estimate(sigma_override=sigma_override)
    t_hat = res.pose @ model.extrinsic.inverse()
    mu = ExtendedPose(t_hat.rotation, t_hat.translation, belief.mean.velocity.copy())
    sigma = max(res.sigma_hat, cfg.sigma_floor)

    p_inv = _spd_inverse(belief.cov)
    bias = np.concatenate([belief.bias_g, belief.bias_a])
    dropped = model.n_features - model.visible_subset(mu.pose()).n_features
    mu1, bias1, lam, f, gain_norm, used = _information_step(
        belief, model, mu, bias, sigma, p_inv
    )
    post = BeliefState(mu1, bias1[:3].copy(), bias1[3:].copy(), 0.5 * (f + f.T))
    report = UpdateReport(
        iterations_used=1,
        final_cost=update_cost(mu1, bias1, belief, model, sigma, cfg.cost_mode, p_inv),
        costs=[],
        gain_norm=gain_norm,
        features_used=used,
        features_dropped=dropped,
        path="consistent",
        sigma_hat=res.sigma_hat,
    )
    return post, report


def practical_eikf_step(
    belief: BeliefState,
    imu_window: list[ImuSample],
    model,
    cfg: UpdateConfig,
    params: NoiseParams,
    gravity: np.ndarray = GRAVITY,
    dt_first: float | None = None,
) -> tuple[BeliefState, UpdateReport]:
    """Full predict-update cycle with the batch-size dispatch.

    Batches larger than n_threshold take the consistent-initialization path;
    smaller ones run the iterated update from the predicted mean. An empty
    batch degenerates to prediction only. Consistent-solver failures fall
    back to the iterated path.
    """
    pred = predict(belief, imu_window, params, gravity, dt_first)
    if model is None or model.n_features == 0:
        return pred, UpdateReport(path="predict_only")
    if model.n_features > cfg.n_threshold:
        try:
            return eikf_update(pred, model, cfg)
        except CONSISTENT_FALLBACK_ERRORS:
            pass
    return iterated_update(pred, model, cfg, mu0=pred.mean)


# ---------------------------------------------------------------------------
# EKF / IEKF baselines (right-multiplicative SO(3) error, vector p/v errors)
# ---------------------------------------------------------------------------


def ekf_predict(
    belief: BeliefState,
    imu_window: list[ImuSample],
    params: NoiseParams,
    gravity: np.ndarray = GRAVITY,
    dt_first: float | None = None,
) -> BeliefState:
    """Standard error-state EKF propagation (same mean integrator)."""
    if len(imu_window) == 0:
        raise EmptyWindowError("predict needs at least one IMU sample")
    times = np.array([s.t for s in imu_window])
    diffs = np.diff(times)
    if np.any(diffs <= 0):
        raise NonMonotonicTimeError("IMU timestamps must be strictly increasing")
    if dt_first is None:
        if len(imu_window) < 2:
            raise EmptyWindowError("single-sample window needs an explicit dt_first")
        dt_first = float(diffs[0])
    dts = np.concatenate([[dt_first], diffs])

    from .sensors import imu_mean_propagate

    x = belief.mean
    cov = belief.cov.copy()
    for sample, dt in zip(imu_window, dts):
        w = sample.omega_m - belief.bias_g
        a = sample.a_m - belief.bias_a
        f = np.eye(15)
        f[0:3, 0:3] = np.eye(3) - skew(w) * dt
        f[0:3, 9:12] = -np.eye(3) * dt
        f[3:6, 6:9] = np.eye(3) * dt
        f[6:9, 0:3] = -(x.rotation @ skew(a)) * dt
        f[6:9, 12:15] = -x.rotation * dt
        cov = f @ cov @ f.T
        cov[0:3, 0:3] += params.sigma_g**2 * dt * np.eye(3)
        cov[6:9, 6:9] += params.sigma_a**2 * dt * np.eye(3)
        cov[9:12, 9:12] += params.sigma_bg**2 * dt * np.eye(3)
        cov[12:15, 12:15] += params.sigma_ba**2 * dt * np.eye(3)
        x = imu_mean_propagate(x, belief.bias_g, belief.bias_a, sample, dt, gravity)
    return BeliefState(x, belief.bias_g.copy(), belief.bias_a.copy(), 0.5 * (cov + cov.T))


def _ekf_boxminus(state, x_bar: ExtendedPose, bias_bar: np.ndarray) -> np.ndarray:
    rot, pos, vel, bias = state
    d = np.empty(15)
    d[0:3] = so3_log(x_bar.rotation.T @ rot)
    d[3:6] = pos - x_bar.position
    d[6:9] = vel - x_bar.velocity
    d[9:15] = bias - bias_bar
    return d


def baseline_update(
    belief: BeliefState,
    model,
    cfg: UpdateConfig,
) -> tuple[BeliefState, UpdateReport]:
    """EKF (l_max=1) / iterated EKF update in the error-state parametrization."""
    if model.n_features == 0:
        raise EmptyBatchError("empty measurement batch")
    x_bar = belief.mean
    bias_bar = np.concatenate([belief.bias_g, belief.bias_a])
    sigma = max(model.sigma, cfg.sigma_floor)
    inv_s2 = 1.0 / sigma**2
    p_inv = _spd_inverse(belief.cov)

    state = (x_bar.rotation, x_bar.position, x_bar.velocity, bias_bar)

    def cost(st):
        rot, pos, vel, bias = st
        pose = Pose(rot, pos)
        model_c = model.visible_subset(pose)
        r = model_c.residual(pose)
        d = _ekf_boxminus(st, x_bar, bias_bar)
        return float(d @ p_inv @ d) + float(r @ r) * inv_s2

    costs = [cost(state)]
    lam = np.eye(15)
    used = 0
    dropped = model.n_features - model.visible_subset(x_bar.pose()).n_features
    iters = 0
    for _ in range(cfg.l_max):
        rot, pos, vel, bias = state
        pose = Pose(rot, pos)
        model_l = model.visible_subset(pose)
        r = model_l.residual(pose)
        if len(r) == 0:
            raise EmptyBatchError("no measurements visible at the linearization point")
        h9 = model_l.jacobian_ekf(rot, pos)
        delta = _ekf_boxminus(state, x_bar, bias_bar)
        lam = p_inv + np.pad(inv_s2 * (h9.T @ h9), ((0, 6), (0, 6)))
        lam = 0.5 * (lam + lam.T)
        rhs = np.zeros(15)
        rhs[:9] = inv_s2 * (h9.T @ (r + h9 @ delta[:9]))
        d = _spd_solve(lam, rhs)
        state = (
            x_bar.rotation @ so3_exp(d[0:3]),
            x_bar.position + d[3:6],
            x_bar.velocity + d[6:9],
            bias_bar + d[9:15],
        )
        used = len(r) // (2 if model.kind == "camera" else 1)
        iters += 1
        costs.append(cost(state))
        if abs(costs[-1] - costs[-2]) <= cfg.tau:
            break

    f = _spd_inverse(lam)
    rot, pos, vel, bias = state
    post = BeliefState(
        ExtendedPose(rot, pos, vel), bias[:3].copy(), bias[3:].copy(), 0.5 * (f + f.T)
    )
    report = UpdateReport(
        iterations_used=iters,
        final_cost=costs[-1],
        costs=costs,
        features_used=used,
        features_dropped=dropped,
        path="baseline",
    )
    return post, report


# ---------------------------------------------------------------------------
# Virtual-pose fusion and measurement-only refinement
# ---------------------------------------------------------------------------


def fused_map_with_virtual_pose(
    belief: BeliefState,
    t_virtual: Pose,
    info6: np.ndarray,
    tol: float = 1e-12,
    max_iter: int = 50,
) -> BeliefState:
    """MAP fusion of the prior with a virtual SE(3) pose measurement.

    Minimizes |log(X Xbar^-1)|^2_{Pbar^-1} + |log(T_v T(X)^-1)|^2_{info6}
    by Gauss-Newton from the prior mean (the first step is the closed-form
    fused increment; further steps converge to the exact minimizer).
    Velocity and biases move only through the prior cross-covariance.
    """
    p_inv = _spd_inverse(belief.cov)
    x_cur = belief.mean
    bias_bar = np.concatenate([belief.bias_g, belief.bias_a])
    bias = bias_bar.copy()
    i_sel = np.zeros((6, 15))
    i_sel[:, :6] = np.eye(6)

    lam = None
    for _ in range(max_iter):
        delta9 = _log_delta(x_cur, belief.mean)
        delta = np.concatenate([delta9, bias - bias_bar])
        j_p = np.eye(15)
        j_p[:9, :9] = dexp_inv(delta9)
        try:
            d_tilde = se3_log(t_virtual @ x_cur.pose().inverse())
        except AngleAtPiError as exc:
            raise LogDomainError("virtual pose outside the log domain") from exc
        j_m = dexp_inv(-d_tilde) @ i_sel  # d l / d eps = -j_m
        lam = j_p.T @ p_inv @ j_p + j_m.T @ info6 @ j_m
        lam = 0.5 * (lam + lam.T)
        rhs = -j_p.T @ (p_inv @ delta) + j_m.T @ (info6 @ d_tilde)
        eps = _spd_solve(lam, rhs)
        x_cur = se23_exp(eps[:9]) @ x_cur
        bias = bias + eps[9:]
        if np.linalg.norm(eps) < tol:
            break

    cov = _spd_inverse(lam)
    return BeliefState(x_cur, bias[:3].copy(), bias[3:].copy(), 0.5 * (cov + cov.T))


def refine_pose_mle(
    model, t_init: Pose, tol: float = 1e-12, max_iter: int = 100
) -> Pose:
    """Measurement-only Gauss-Newton on SE(3) to the maximum-likelihood pose."""
    t = t_init
    for _ in range(max_iter):
        model_l = model.visible_subset(t)
        r = model_l.residual(t)
        if len(r) == 0:
            raise EmptyBatchError("no measurements visible during refinement")
        h6 = model_l.jacobian(ExtendedPose(t.rotation, t.translation, np.zeros(3)))[:, :6]
        d = np.linalg.solve(h6.T @ h6, h6.T @ r)
        t = se3_exp(d) @ t
        if np.linalg.norm(d) < tol:
            break
    return t


def fisher_information(model, t_pose: Pose) -> np.ndarray:
    """6x6 pose Fisher information H^T Sigma^-1 H at the given pose."""
    model_l = model.visible_subset(t_pose)
    h6 = model_l.jacobian(
        ExtendedPose(t_pose.rotation, t_pose.translation, np.zeros(3))
    )[:, :6]
    return (h6.T @ h6) / model.sigma**2


def make_model(batch, landmarks, intrinsics, extrinsics, params: NoiseParams):
    """Wrap a measurement batch in the matching sensor model."""
    if isinstance(batch, CameraBatch):
        return CameraModel(batch, landmarks, intrinsics, extrinsics, params.sigma_c)
    if isinstance(batch, LidarBatch):
        return LidarModel(batch, extrinsics, params.sigma_l)
    raise TypeError(f"unsupported batch type {type(batch)!r}")
