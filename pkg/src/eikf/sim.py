"""Ground-truth synthesis and the Monte-Carlo scenario harness.

The reference trajectory follows the closed-form position
p(t) = [70 sin(0.15 t), 80 cos(0.15 t), 7 sin(0.75 t)] with constant body
rates [0.2, 0.3, 0.1] rad/s. Velocity and acceleration are analytic
derivatives; the attitude integrates the constant rate exactly.

Scene layout (placement is free; chosen so the measurement count stays
usable along the whole path):
  * VIO: the camera is mounted with its optical axis along the constant
    body-rate axis, so the world-frame viewing direction never changes
    (the image only rolls); landmarks sit in a cone around that direction.
  * LIO: six large box faces plus random plane patches near the path; the
    LiDAR has no field-of-view limit, so every plane is hit each scan.
"""

from __future__ import annotations

import hashlib
import json
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import filters
from .errors import AllDivergedError, AngleAtPiError, ConfigError
from .gaussian import GRAVITY, BeliefState, NoiseParams
from .lie import ExtendedPose, Pose, so3_exp, so3_log
from .sensors import (
    CameraBatch,
    CameraIntrinsics,
    Extrinsics,
    ImuSample,
    LandmarkMap,
    LidarBatch,
)

TRAJ_AMPLITUDE = np.array([70.0, 80.0, 7.0])
TRAJ_FREQ = np.array([0.15, 0.15, 0.75])
BODY_RATE = np.array([0.2, 0.3, 0.1])

FILTER_VARIANTS = ("ekf", "iekf", "inekf", "eikf_i", "eikf_c")


@dataclass
class ScenarioConfig:
    scenario: str = "vio"  # "vio" | "lio"
    duration_s: float = 30.0
    imu_rate_hz: float = 100.0
    cam_rate_hz: float = 20.0
    lidar_rate_hz: float = 50.0
    landmark_count: int = 100
    trials: int = 25
    seed: int = 0
    filters: tuple = ("iekf", "inekf", "eikf_c", "eikf_i")
    trajectory_variant: str = "cos"  # "cos" per the main text, "sin" alternate
    noise: NoiseParams = field(default_factory=NoiseParams)
    deviation_position: tuple = (0.5, 0.5, 0.5)
    deviation_rpy: tuple = (math.pi / 6, math.pi / 6, -math.pi / 6)
    deviation_scale: float = 1.0
    sweep_axis: str = "none"  # none | landmarks | noise | init_scale
    sweep_values: tuple = ()
    n_threshold: int = 50
    l_max: int = 3
    tau: float = 1e-6
    cost_mode: str = "paper"
    sigma_mode: str = "estimated"
    image_width: int = 640
    image_height: int = 480
    intrinsics: CameraIntrinsics = field(default_factory=CameraIntrinsics)
    vio_cone_half_angle_deg: float = 16.0
    vio_range_m: tuple = (400.0, 700.0)
    lio_box_half_xy_m: float = 150.0
    lio_box_half_z_m: float = 30.0
    lio_patch_range_m: tuple = (10.0, 50.0)
    divergence_threshold_m: float = 1e3

    def __post_init__(self):
        if self.scenario not in ("vio", "lio"):
            raise ConfigError(f"unknown scenario {self.scenario!r}")
        for name in ("imu_rate_hz", "cam_rate_hz", "lidar_rate_hz"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        sensor_rate = self.sensor_rate_hz
        ratio = self.imu_rate_hz / sensor_rate
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError("sensor rate must divide the IMU rate")
        if self.trials < 1:
            raise ConfigError("trials must be >= 1")
        if self.sweep_axis not in ("none", "landmarks", "noise", "init_scale"):
            raise ConfigError(f"unknown sweep axis {self.sweep_axis!r}")
        for f in self.filters:
            if f not in FILTER_VARIANTS:
                raise ConfigError(f"unknown filter variant {f!r}")
        if self.trajectory_variant not in ("cos", "sin"):
            raise ConfigError("trajectory_variant must be 'cos' or 'sin'")

    @property
    def sensor_rate_hz(self) -> float:
        return self.cam_rate_hz if self.scenario == "vio" else self.lidar_rate_hz

    def update_config(self) -> filters.UpdateConfig:
        return filters.UpdateConfig(
            l_max=self.l_max,
            tau=self.tau,
            n_threshold=self.n_threshold,
            cost_mode=self.cost_mode,
            sigma_mode=self.sigma_mode,
        )

    def to_dict(self) -> dict:
        d = asdict(self)
        d["filters"] = list(self.filters)
        d["sweep_values"] = list(self.sweep_values)
        for key in ("deviation_position", "deviation_rpy", "vio_range_m", "lio_patch_range_m"):
            d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        try:
            if "noise" in d and isinstance(d["noise"], dict):
                d["noise"] = NoiseParams(**d["noise"])
            if "intrinsics" in d and isinstance(d["intrinsics"], dict):
                d["intrinsics"] = CameraIntrinsics(**d["intrinsics"])
            for key in (
                "filters",
                "sweep_values",
                "deviation_position",
                "deviation_rpy",
                "vio_range_m",
                "lio_patch_range_m",
            ):
                if key in d:
                    d[key] = tuple(d[key])
            return cls(**d)
        except (TypeError, ValueError) as exc:
            raise ConfigError(str(exc)) from exc

    def config_hash(self) -> str:
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


@dataclass
class TrialResult:
    trial: int
    times: np.ndarray
    orient_err_deg: dict
    pos_err_m: dict
    update_ms: dict
    diverged: dict


def ground_truth(t: float, cfg: ScenarioConfig):
    """True extended pose, body rate and world acceleration at time t."""
    w = TRAJ_FREQ
    amp = TRAJ_AMPLITUDE
    sx, cx = math.sin(w[0] * t), math.cos(w[0] * t)
    sz, cz = math.sin(w[2] * t), math.cos(w[2] * t)
    if cfg.trajectory_variant == "cos":
        y, vy, ay = amp[1] * cx, -amp[1] * w[1] * sx, -amp[1] * w[1] ** 2 * cx
    else:
        y, vy, ay = amp[1] * sx, amp[1] * w[1] * cx, -amp[1] * w[1] ** 2 * sx
    pos = np.array([amp[0] * sx, y, amp[2] * sz])
    vel = np.array([amp[0] * w[0] * cx, vy, amp[2] * w[2] * cz])
    acc = np.array([-amp[0] * w[0] ** 2 * sx, ay, -amp[2] * w[2] ** 2 * sz])
    rot = so3_exp(BODY_RATE * t)
    return ExtendedPose(rot, pos, vel), BODY_RATE.copy(), acc


def default_extrinsics() -> Extrinsics:
    """Camera optical axis aligned with the body-rate axis; LiDAR tilted."""
    axis = BODY_RATE / np.linalg.norm(BODY_RATE)
    e1 = np.cross([0.0, 0.0, 1.0], axis)
    e1 /= np.linalg.norm(e1)
    e2 = np.cross(axis, e1)
    r_ic = np.column_stack([e1, e2, axis])
    t_ic = Pose(r_ic, np.array([0.05, -0.05, 0.03]))
    t_il = Pose(so3_exp(np.array([0.15, -0.1, 0.2])), np.array([0.1, 0.0, 0.05]))
    return Extrinsics(t_ic, t_il)


@dataclass
class Scene:
    landmarks: LandmarkMap | None
    plane_normals: np.ndarray | None
    plane_points: np.ndarray | None
    plane_tangents: np.ndarray | None  # (n, 2, 3)
    extrinsics: Extrinsics


def make_scene(cfg: ScenarioConfig, seed_seq: np.random.SeedSequence) -> Scene:
    rng = np.random.default_rng(seed_seq)
    extr = default_extrinsics()
    if cfg.scenario == "vio":
        n = cfg.landmark_count
        axis = BODY_RATE / np.linalg.norm(BODY_RATE)
        half = math.radians(cfg.vio_cone_half_angle_deg)
        cos_t = rng.uniform(math.cos(half), 1.0, size=n)
        phi = rng.uniform(0.0, 2 * math.pi, size=n)
        sin_t = np.sqrt(1.0 - cos_t**2)
        local = np.column_stack([sin_t * np.cos(phi), sin_t * np.sin(phi), cos_t])
        e1 = np.cross([0.0, 0.0, 1.0], axis)
        e1 /= np.linalg.norm(e1)
        e2 = np.cross(axis, e1)
        basis = np.column_stack([e1, e2, axis])
        # Two depth shells: the far shell breaks the attitude/position
        # degeneracy of the narrow viewing cone via relative parallax.
        near = rng.uniform(*cfg.vio_range_m, size=n)
        far = rng.uniform(3.0 * cfg.vio_range_m[0], 3.0 * cfg.vio_range_m[1], size=n)
        dists = np.where(np.arange(n) % 2 == 0, near, far)
        positions = (local @ basis.T) * dists[:, None]
        return Scene(LandmarkMap.from_positions(positions), None, None, None, extr)

    n = cfg.landmark_count
    hx = cfg.lio_box_half_xy_m
    hz = cfg.lio_box_half_z_m
    normals = [
        [1, 0, 0], [-1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1], [0, 0, -1],
    ]
    points = [
        [-hx, 0, 0], [hx, 0, 0], [0, -hx, 0], [0, hx, 0], [0, 0, -hz], [0, 0, hz],
    ]
    normals = np.array(normals, dtype=float)
    points = np.array(points, dtype=float)
    extra = max(n - 6, 0)
    if extra:
        ts = rng.uniform(0.0, cfg.duration_s, size=extra)
        centers = np.stack([ground_truth(t, cfg)[0].position for t in ts])
        dirs = rng.normal(size=(extra, 3))
        dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
        centers = centers + dirs * rng.uniform(*cfg.lio_patch_range_m, size=(extra, 1))
        u = rng.normal(size=(extra, 3))
        u /= np.linalg.norm(u, axis=1, keepdims=True)
        normals = np.vstack([normals, u])
        points = np.vstack([points, centers])
    normals = normals[:n]
    points = points[:n]
    helper = np.where(np.abs(normals[:, 2:3]) < 0.9, [[0.0, 0.0, 1.0]], [[1.0, 0.0, 0.0]])
    t1 = np.cross(normals, helper)
    t1 /= np.linalg.norm(t1, axis=1, keepdims=True)
    t2 = np.cross(normals, t1)
    tangents = np.stack([t1, t2], axis=1)
    return Scene(None, normals, points, tangents, extr)


def synthesize_imu(cfg: ScenarioConfig, params: NoiseParams, rng) -> list[ImuSample]:
    """IMU stream at interval midpoints with discrete noise sigma*sqrt(rate).

    Sampling the continuous model at midpoints keeps the per-step
    constant-input integrator second-order accurate.
    """
    rate = cfg.imu_rate_hz
    dt = 1.0 / rate
    count = int(round(cfg.duration_s * rate))
    sqrt_rate = math.sqrt(rate)
    bias_g = np.zeros(3)
    bias_a = np.zeros(3)
    samples = []
    for i in range(count):
        t_mid = (i + 0.5) * dt
        x, omega, acc = ground_truth(t_mid, cfg)
        bias_g = bias_g + params.sigma_bg / sqrt_rate * rng.standard_normal(3)
        bias_a = bias_a + params.sigma_ba / sqrt_rate * rng.standard_normal(3)
        omega_m = omega + bias_g + params.sigma_g * sqrt_rate * rng.standard_normal(3)
        a_m = (
            x.rotation.T @ (acc - GRAVITY)
            + bias_a
            + params.sigma_a * sqrt_rate * rng.standard_normal(3)
        )
        samples.append(ImuSample(omega_m, a_m, t_mid))
    return samples


def synthesize_camera(
    cfg: ScenarioConfig, scene: Scene, t: float, params: NoiseParams, rng
) -> CameraBatch:
    """Project visible landmarks through the true camera pose, add pixel noise."""
    x, _, _ = ground_truth(t, cfg)
    t_c = x.pose() @ scene.extrinsics.t_ic
    q = (scene.landmarks.positions - t_c.translation) @ t_c.rotation
    intr = cfg.intrinsics
    with np.errstate(divide="ignore", invalid="ignore"):
        u = intr.f_x * q[:, 0] / q[:, 2] + intr.u_0
        v = intr.f_y * q[:, 1] / q[:, 2] + intr.v_0
    visible = (
        (q[:, 2] > 0.1)
        & (u >= 0.0)
        & (u <= cfg.image_width)
        & (v >= 0.0)
        & (v <= cfg.image_height)
    )
    ids = scene.landmarks.ids[visible]
    pix = np.column_stack([u[visible], v[visible]])
    pix = pix + params.sigma_c * rng.standard_normal(pix.shape)
    return CameraBatch(ids, pix)


def synthesize_lidar(
    cfg: ScenarioConfig, scene: Scene, t: float, params: NoiseParams, rng
) -> LidarBatch:
    """Sample one point per plane, express in the LiDAR frame, add noise."""
    x, _, _ = ground_truth(t, cfg)
    t_l = x.pose() @ scene.extrinsics.t_il
    n = len(scene.plane_normals)
    offsets = rng.uniform(-1.5, 1.5, size=(n, 2))
    p_f = (
        scene.plane_points
        + offsets[:, 0:1] * scene.plane_tangents[:, 0]
        + offsets[:, 1:2] * scene.plane_tangents[:, 1]
    )
    z = (p_f - t_l.translation) @ t_l.rotation
    z = z + params.sigma_l * rng.standard_normal(z.shape)
    return LidarBatch(z, scene.plane_normals.copy(), scene.plane_points.copy())


def rpy_to_rotation(rpy) -> np.ndarray:
    """ZYX convention: R = Rz(yaw) Ry(pitch) Rx(roll)."""
    roll, pitch, yaw = rpy
    return (
        so3_exp(np.array([0.0, 0.0, yaw]))
        @ so3_exp(np.array([0.0, pitch, 0.0]))
        @ so3_exp(np.array([roll, 0.0, 0.0]))
    )


def initial_belief(cfg: ScenarioConfig, parametrization: str = "invariant") -> BeliefState:
    """Truth composed with the scaled deviation; covariance sized to match.

    The deviation is a world-frame attitude perturbation plus a position
    offset. For the invariant filters that distribution must be expressed in
    the right-invariant error coordinates, where the attitude perturbation
    leaks into the position/velocity blocks through the lever arms p^ and v^.
    """
    x0, _, _ = ground_truth(0.0, cfg)
    s = cfg.deviation_scale
    r_dev = rpy_to_rotation(np.array(cfg.deviation_rpy) * s)
    dp = np.array(cfg.deviation_position) * s
    mean = ExtendedPose(r_dev @ x0.rotation, x0.position + dp, x0.velocity.copy())

    sig_att = np.diag(np.maximum(np.abs(np.array(cfg.deviation_rpy)) * s, 1e-3) ** 2)
    sig_pos = np.diag(np.maximum(np.abs(dp), 1e-3) ** 2)
    sig_vel = 0.05**2 * np.eye(3)

    cov = np.zeros((15, 15))
    if parametrization == "invariant":
        from .lie import skew

        t = np.zeros((9, 9))
        t[0:3, 0:3] = -np.eye(3)
        t[3:6, 0:3] = -skew(mean.position)
        t[3:6, 3:6] = -np.eye(3)
        t[6:9, 0:3] = -skew(mean.velocity)
        t[6:9, 6:9] = -np.eye(3)
        dev = np.zeros((9, 9))
        dev[0:3, 0:3] = sig_att
        dev[3:6, 3:6] = sig_pos
        dev[6:9, 6:9] = sig_vel
        cov[0:9, 0:9] = t @ dev @ t.T
    elif parametrization == "ekf":
        cov[0:3, 0:3] = mean.rotation.T @ sig_att @ mean.rotation
        cov[3:6, 3:6] = sig_pos
        cov[6:9, 6:9] = sig_vel
    else:
        raise ConfigError(f"unknown parametrization {parametrization!r}")
    cov[9:12, 9:12] = 0.01**2 * np.eye(3)
    cov[12:15, 12:15] = 0.01**2 * np.eye(3)
    return BeliefState(mean, np.zeros(3), np.zeros(3), 0.5 * (cov + cov.T))


def _pose_errors(belief: BeliefState, truth: ExtendedPose) -> tuple[float, float]:
    try:
        ang = np.linalg.norm(so3_log(belief.mean.rotation.T @ truth.rotation))
    except AngleAtPiError:
        ang = math.pi
    return math.degrees(ang), float(np.linalg.norm(belief.mean.position - truth.position))


def _step_filter(variant, belief, window, model, cfg, ucfg, params, dt_first):
    if variant in ("ekf", "iekf"):
        pred = filters.ekf_predict(belief, window, params, GRAVITY, dt_first)
        if model is None or model.n_features == 0:
            return pred
        bcfg = replace(ucfg, l_max=1 if variant == "ekf" else ucfg.l_max)
        return filters.baseline_update(pred, model, bcfg)[0]
    if variant in ("inekf", "eikf_i"):
        pred = filters.predict(belief, window, params, GRAVITY, dt_first)
        if model is None or model.n_features == 0:
            return pred
        icfg = replace(ucfg, l_max=1 if variant == "inekf" else ucfg.l_max)
        return filters.iterated_update(pred, model, icfg, mu0=pred.mean)[0]
    if variant == "eikf_c":
        return filters.practical_eikf_step(
            belief, window, model, ucfg, params, GRAVITY, dt_first
        )[0]
    raise ConfigError(f"unknown filter variant {variant!r}")


def run_trial(cfg: ScenarioConfig, scene: Scene, trial: int, seed_seq) -> TrialResult:
    params = cfg.noise
    rng = np.random.default_rng(seed_seq)
    imu = synthesize_imu(cfg, params, rng)
    imu_dt = 1.0 / cfg.imu_rate_hz
    sensor_dt = 1.0 / cfg.sensor_rate_hz
    steps = int(round(cfg.duration_s * cfg.sensor_rate_hz))
    per_update = int(round(cfg.imu_rate_hz / cfg.sensor_rate_hz))

    beliefs = {
        v: initial_belief(cfg, "ekf" if v in ("ekf", "iekf") else "invariant")
        for v in cfg.filters
    }
    diverged = {v: False for v in cfg.filters}
    times = np.arange(1, steps + 1) * sensor_dt
    orient = {v: np.full(steps, np.inf) for v in cfg.filters}
    pos = {v: np.full(steps, np.inf) for v in cfg.filters}
    upd_ms = {v: np.zeros(steps) for v in cfg.filters}
    ucfg = cfg.update_config()

    for k in range(steps):
        t_k = times[k]
        window = imu[k * per_update : (k + 1) * per_update]
        if cfg.scenario == "vio":
            batch = synthesize_camera(cfg, scene, t_k, params, rng)
            model = filters.CameraModel(
                batch, scene.landmarks, cfg.intrinsics, scene.extrinsics, params.sigma_c
            )
        else:
            batch = synthesize_lidar(cfg, scene, t_k, params, rng)
            model = filters.LidarModel(batch, scene.extrinsics, params.sigma_l)
        truth, _, _ = ground_truth(t_k, cfg)
        for v in cfg.filters:
            if diverged[v]:
                continue
            t0 = time.perf_counter()
            try:
                beliefs[v] = _step_filter(
                    v, beliefs[v], window, model, cfg, ucfg, params, imu_dt
                )
            except Exception:
                diverged[v] = True
                continue
            upd_ms[v][k] = (time.perf_counter() - t0) * 1e3
            ang, dist = _pose_errors(beliefs[v], truth)
            orient[v][k] = ang
            pos[v][k] = dist
            if dist > cfg.divergence_threshold_m or not math.isfinite(dist):
                diverged[v] = True
    return TrialResult(trial, times, orient, pos, upd_ms, diverged)


def scene_seed(cfg: ScenarioConfig) -> tuple:
    return (cfg.seed, 0)


def trial_seed(cfg: ScenarioConfig, trial: int) -> tuple:
    # The scene is shared across trials; each trial gets its own noise stream.
    return (cfg.seed, 1 + trial)


def _run_trial_packed(args):
    cfg_dict, trial = args
    cfg = ScenarioConfig.from_dict(cfg_dict)
    scene = make_scene(cfg, np.random.SeedSequence(scene_seed(cfg)))
    return run_trial(cfg, scene, trial, np.random.SeedSequence(trial_seed(cfg, trial)))


def run_scenario(cfg: ScenarioConfig, jobs: int = 1) -> list[TrialResult]:
    """Monte-Carlo execution: same scene and truth, fresh noise per trial."""
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            return list(
                pool.map(
                    _run_trial_packed,
                    [(cfg.to_dict(), i) for i in range(cfg.trials)],
                )
            )
    scene = make_scene(cfg, np.random.SeedSequence(scene_seed(cfg)))
    return [
        run_trial(cfg, scene, i, np.random.SeedSequence(trial_seed(cfg, i)))
        for i in range(cfg.trials)
    ]


def sweep_configs(cfg: ScenarioConfig) -> list[tuple[float, ScenarioConfig]]:
    if cfg.sweep_axis == "none" or not cfg.sweep_values:
        return [(math.nan, cfg)]
    out = []
    for v in cfg.sweep_values:
        point = replace(cfg, sweep_axis="none", sweep_values=())
        if cfg.sweep_axis == "landmarks":
            point = replace(point, landmark_count=int(v))
        elif cfg.sweep_axis == "noise":
            key = "sigma_c" if cfg.scenario == "vio" else "sigma_l"
            point = replace(point, noise=replace(cfg.noise, **{key: float(v)}))
        elif cfg.sweep_axis == "init_scale":
            point = replace(point, deviation_scale=float(v))
        out.append((float(v), point))
    return out


def run_sweep(cfg: ScenarioConfig, jobs: int = 1) -> list[tuple[float, list[TrialResult]]]:
    return [(v, run_scenario(point, jobs)) for v, point in sweep_configs(cfg)]


def rmse(results: list[TrialResult], quantity: str):
    """Per-timestamp RMSE over non-diverged trials plus its time average.

    Returns (times, {filter: series}, {filter: scalar average}).
    """
    if quantity not in ("orientation_deg", "position_m"):
        raise ValueError(f"unknown quantity {quantity!r}")
    if not results:
        raise AllDivergedError("no trials")
    times = results[0].times
    variants = list(results[0].orient_err_deg)
    series = {}
    scalars = {}
    for v in variants:
        stack = []
        for r in results:
            if not r.diverged[v]:
                err = r.orient_err_deg[v] if quantity == "orientation_deg" else r.pos_err_m[v]
                stack.append(err)
        if not stack:
            raise AllDivergedError(f"all trials diverged for {v}")
        arr = np.stack(stack)
        series[v] = np.sqrt(np.mean(arr**2, axis=0))
        scalars[v] = float(np.mean(series[v]))
    return times, series, scalars


def divergence_rate(results: list[TrialResult], variant: str) -> float:
    return sum(r.diverged[variant] for r in results) / max(len(results), 1)
