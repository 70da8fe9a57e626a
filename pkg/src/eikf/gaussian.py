"""Concentrated-Gaussian beliefs on SE2(3) and covariance propagation.

The belief covariance is 15x15 and ordered [xi(9); bias_g(3); bias_a(3)]
where xi = log(X Xbar^-1) is the right-invariant error. The 4th-order
process-noise construction follows the bracket operators

    <<A>>    = -tr(A) I + A
    <<A, B>> = <<A>> <<B>> + <<B A>>
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatchError
from .lie import ExtendedPose, adjoint, skew

GRAVITY = np.array([0.0, 0.0, -9.81])


@dataclass
class NoiseParams:
    """Sensor noise magnitudes (continuous-time densities, per-sqrt-Hz units)."""

    sigma_g: float = 0.01  # rad/s/sqrt(Hz)
    sigma_a: float = 0.01  # m/s^2/sqrt(Hz)
    sigma_bg: float = 0.001  # rad/s^2/sqrt(Hz)
    sigma_ba: float = 0.001  # m/s^3/sqrt(Hz)
    sigma_c: float = 1.0  # pixels
    sigma_l: float = 0.2  # meters

    def __post_init__(self):
        for name in ("sigma_g", "sigma_a", "sigma_bg", "sigma_ba", "sigma_c", "sigma_l"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")


@dataclass
class BeliefState:
    """Right-concentrated Gaussian on SE2(3) with augmented IMU biases."""

    mean: ExtendedPose
    bias_g: np.ndarray = field(default_factory=lambda: np.zeros(3))
    bias_a: np.ndarray = field(default_factory=lambda: np.zeros(3))
    cov: np.ndarray = field(default_factory=lambda: np.eye(15))

    def copy(self) -> "BeliefState":
        m = self.mean
        return BeliefState(
            ExtendedPose(m.rotation.copy(), m.position.copy(), m.velocity.copy()),
            self.bias_g.copy(),
            self.bias_a.copy(),
            self.cov.copy(),
        )

    def symmetrized(self) -> "BeliefState":
        out = self.copy()
        out.cov = 0.5 * (out.cov + out.cov.T)
        return out


def bracket1(a: np.ndarray) -> np.ndarray:
    return -np.trace(a) * np.eye(3) + a


def bracket2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return bracket1(a) @ bracket1(b) + bracket1(b @ a)


def expected_skew_sandwich(m: np.ndarray, p_xy: np.ndarray) -> np.ndarray:
    """E[x^ M y^T] for zero-mean jointly Gaussian x, y with E[x y^T] = p_xy.

    Reduces to <<P, M>> when x = y and M is symmetric.
    """
    tr_m = np.trace(m)
    tr_p = np.trace(p_xy)
    return (
        (tr_m * tr_p - np.trace(m @ p_xy)) * np.eye(3)
        - tr_p * m.T
        - tr_m * p_xy.T
        + m.T @ p_xy.T
        + p_xy.T @ m.T
    )


def sigma_fourth(sigma_nprime: np.ndarray, p_bar: np.ndarray) -> np.ndarray:
    """4th-order process-noise covariance.

    Models the noise multiplier (I - ad/2 + ad^2/6) of the error dynamics:
    Sigma_4th = Sigma + (D Sigma + Sigma D^T)/6 + B/4 with D = E[ad^2] and
    B = E[ad n' n'^T ad^T], the ad evaluated at the prior error.
    """
    if sigma_nprime.shape != (9, 9) or p_bar.shape != (9, 9):
        raise DimensionMismatchError("sigma_fourth expects 9x9 inputs")

    def blk(mat, i, j):
        return mat[3 * i : 3 * i + 3, 3 * j : 3 * j + 3]

    p_tt = blk(p_bar, 0, 0)
    d = np.zeros((9, 9))
    d[0:3, 0:3] = bracket1(p_tt)
    d[3:6, 3:6] = bracket1(p_tt)
    d[6:9, 6:9] = bracket1(p_tt)
    d[3:6, 0:3] = bracket1(blk(p_bar, 0, 1) + blk(p_bar, 0, 1).T)
    d[6:9, 0:3] = bracket1(blk(p_bar, 0, 2) + blk(p_bar, 0, 2).T)

    # Row i of ad_xi n' is xi_i^ n'_theta + [i != theta] theta^ n'_i, so each
    # B block is a sum of four sandwich expectations.
    b = np.zeros((9, 9))
    for i in range(3):
        s_i = 0.0 if i == 0 else 1.0
        for j in range(3):
            s_j = 0.0 if j == 0 else 1.0
            term = expected_skew_sandwich(blk(sigma_nprime, 0, 0), blk(p_bar, j, i))
            if s_j:
                term = term + expected_skew_sandwich(blk(sigma_nprime, 0, j), blk(p_bar, 0, i))
            if s_i:
                term = term + expected_skew_sandwich(blk(sigma_nprime, i, 0), blk(p_bar, j, 0))
            if s_i and s_j:
                term = term + expected_skew_sandwich(blk(sigma_nprime, i, j), p_tt)
            b[3 * i : 3 * i + 3, 3 * j : 3 * j + 3] = term

    out = sigma_nprime + (d @ sigma_nprime + sigma_nprime @ d.T) / 6.0 + b / 4.0
    return 0.5 * (out + out.T)


def noise_sigma_nprime(belief: BeliefState, params: NoiseParams) -> np.ndarray:
    """Covariance of the world-frame IMU noise Ad_Xbar n (bias error included)."""
    d = np.zeros((9, 9))
    d[0:3, 0:3] = params.sigma_g**2 * np.eye(3) + belief.cov[9:12, 9:12]
    d[6:9, 6:9] = params.sigma_a**2 * np.eye(3) + belief.cov[12:15, 12:15]
    ad = adjoint(belief.mean)
    out = ad @ d @ ad.T
    return 0.5 * (out + out.T)


def drift_matrix(gravity: np.ndarray) -> np.ndarray:
    """Linear drift A of the invariant error dynamics; nilpotent with A^3 = 0."""
    a = np.zeros((9, 9))
    a[3:6, 6:9] = np.eye(3)
    a[6:9, 0:3] = skew(gravity)
    return a


def state_transition(dt: float, gravity: np.ndarray) -> np.ndarray:
    """exp(A dt) = I + A dt + A^2 dt^2/2, exact because A^3 = 0."""
    a = drift_matrix(gravity)
    return np.eye(9) + a * dt + (a @ a) * (dt**2 / 2.0)


def discrete_process_noise(dt: float, sigma_4th: np.ndarray, gravity: np.ndarray) -> np.ndarray:
    """Closed-form integral of Phi(s) Sigma Phi(s)^T over one step.

    Sigma_4th is held constant over the step; the integrand is a degree-4
    matrix polynomial in s, so the integral is exact.
    """
    a = drift_matrix(gravity)
    a2 = a @ a
    s = sigma_4th
    t0 = s
    t1 = a @ s + s @ a.T
    t2 = a @ s @ a.T + 0.5 * (a2 @ s + s @ a2.T)
    t3 = 0.5 * (a2 @ s @ a.T + a @ s @ a2.T)
    t4 = 0.25 * (a2 @ s @ a2.T)
    out = (
        dt * t0
        + dt**2 / 2.0 * t1
        + dt**3 / 3.0 * t2
        + dt**4 / 4.0 * t3
        + dt**5 / 5.0 * t4
    )
    return 0.5 * (out + out.T)


def propagate_covariance(
    belief: BeliefState,
    dt: float,
    params: NoiseParams,
    gravity: np.ndarray = GRAVITY,
) -> np.ndarray:
    """One prediction step of the 15x15 covariance.

    The 9x9 error block follows Phi P Phi^T + Q_d with the 4th-order Q_d;
    biases are a random walk (identity transition, sigma^2 dt inflation).
    """
    p = belief.cov
    p_xi = p[0:9, 0:9]
    sig_n = noise_sigma_nprime(belief, params)
    sig4 = sigma_fourth(sig_n, p_xi)
    phi = state_transition(dt, gravity)
    qd = discrete_process_noise(dt, sig4, gravity)

    out = p.copy()
    out[0:9, 0:9] = phi @ p_xi @ phi.T + qd
    out[0:9, 9:15] = phi @ p[0:9, 9:15]
    out[9:15, 0:9] = out[0:9, 9:15].T
    out[9:12, 9:12] = p[9:12, 9:12] + params.sigma_bg**2 * dt * np.eye(3)
    out[12:15, 12:15] = p[12:15, 12:15] + params.sigma_ba**2 * dt * np.eye(3)
    return 0.5 * (out + out.T)
