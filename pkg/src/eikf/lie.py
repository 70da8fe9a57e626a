"""Matrix Lie group algebra for SO(3), SE(3) and the extended poses SE2(3).

Tangent vectors use one canonical ordering throughout the package:

    9-vector  xi = [theta; rho_p; rho_v]   (rotation, position, velocity)
    6-vector  xi = [theta; rho_p]

The ordering matches the block layout of the adjoint, rotation block first.
All functions are pure and operate on plain numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import AngleAtPiError, DimensionMismatchError

SMALL_ANGLE = 1e-6

# Bernoulli coefficients B_i / i! for the inverse left Jacobian series
# (B_1 = -1/2 convention; odd terms beyond the first vanish).
_BERNOULLI_COEFFS = (
    1.0,
    -0.5,
    1.0 / 12.0,
    0.0,
    -1.0 / 720.0,
    0.0,
    1.0 / 30240.0,
    0.0,
    -1.0 / 1209600.0,
)


def skew(v: np.ndarray) -> np.ndarray:
    """Cross-product matrix v^ so that v^ w = v x w."""
    x, y, z = v
    return np.array([[0.0, -z, y], [z, 0.0, -x], [-y, x, 0.0]])


def unskew(m: np.ndarray) -> np.ndarray:
    return np.array([m[2, 1], m[0, 2], m[1, 0]])


def so3_exp(theta: np.ndarray) -> np.ndarray:
    """Rodrigues formula; 2nd-order series below the small-angle threshold."""
    theta = np.asarray(theta, dtype=float)
    angle = math.sqrt(float(theta @ theta))
    s = skew(theta)
    if angle < SMALL_ANGLE:
        return np.eye(3) + s + 0.5 * (s @ s)
    return (
        np.eye(3)
        + (math.sin(angle) / angle) * s
        + ((1.0 - math.cos(angle)) / angle**2) * (s @ s)
    )


def so3_log(rot: np.ndarray) -> np.ndarray:
    """Rotation vector of R, with norm < pi.

    Raises AngleAtPiError within 1e-9 of the pi boundary, where the
    logarithm is not unique.
    """
    w = unskew(rot - rot.T) / 2.0  # sin(angle) * axis
    s = float(np.linalg.norm(w))
    c = (float(np.trace(rot)) - 1.0) / 2.0
    angle = math.atan2(s, c)
    if angle < SMALL_ANGLE:
        return w * (1.0 + angle**2 / 6.0)
    if angle > math.pi - 1e-9:
        raise AngleAtPiError(f"rotation angle {angle!r} too close to pi")
    if angle > 3.0:
        # Near pi the antisymmetric part loses precision; recover the axis
        # from the symmetric part instead.
        b = (rot + rot.T) / 2.0 - c * np.eye(3)  # (1-cos) * a a^T
        j = int(np.argmax(np.diag(b)))
        axis = b[:, j] / math.sqrt((1.0 - c) * b[j, j])
        if axis @ w < 0.0:
            axis = -axis
        return angle * axis
    return (angle / s) * w


def so3_left_jacobian(theta: np.ndarray) -> np.ndarray:
    angle = math.sqrt(float(theta @ theta))
    s = skew(theta)
    if angle < SMALL_ANGLE:
        return np.eye(3) + 0.5 * s + (s @ s) / 6.0
    return (
        np.eye(3)
        + ((1.0 - math.cos(angle)) / angle**2) * s
        + ((angle - math.sin(angle)) / angle**3) * (s @ s)
    )


def so3_left_jacobian_inv(theta: np.ndarray) -> np.ndarray:
    angle = math.sqrt(float(theta @ theta))
    s = skew(theta)
    if angle < SMALL_ANGLE:
        return np.eye(3) - 0.5 * s + (s @ s) / 12.0
    half = 0.5 * angle
    coeff = 1.0 / angle**2 - math.cos(half) / (2.0 * angle * math.sin(half))
    return np.eye(3) - 0.5 * s + coeff * (s @ s)


@dataclass
class Pose:
    """Element of SE(3): rotation matrix plus translation."""

    rotation: np.ndarray
    translation: np.ndarray

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def __matmul__(self, other: "Pose") -> "Pose":
        return Pose(
            self.rotation @ other.rotation,
            self.rotation @ other.translation + self.translation,
        )

    def apply(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation.T + self.translation


@dataclass
class ExtendedPose:
    """Element of SE2(3): rotation, position and velocity of the body."""

    rotation: np.ndarray
    position: np.ndarray
    velocity: np.ndarray

    @classmethod
    def identity(cls) -> "ExtendedPose":
        return cls(np.eye(3), np.zeros(3), np.zeros(3))

    def matrix(self) -> np.ndarray:
        m = np.eye(5)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.position
        m[:3, 4] = self.velocity
        return m

    def pose(self) -> Pose:
        return Pose(self.rotation, self.position)

    def inverse(self) -> "ExtendedPose":
        rt = self.rotation.T
        return ExtendedPose(rt, -rt @ self.position, -rt @ self.velocity)

    def __matmul__(self, other: "ExtendedPose") -> "ExtendedPose":
        return ExtendedPose(
            self.rotation @ other.rotation,
            self.rotation @ other.position + self.position,
            self.rotation @ other.velocity + self.velocity,
        )


def se23_exp(xi: np.ndarray) -> ExtendedPose:
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (9,):
        raise DimensionMismatchError(f"expected 9-vector, got shape {xi.shape}")
    jl = so3_left_jacobian(xi[:3])
    return ExtendedPose(so3_exp(xi[:3]), jl @ xi[3:6], jl @ xi[6:9])


def se23_log(x: ExtendedPose) -> np.ndarray:
    theta = so3_log(x.rotation)
    jinv = so3_left_jacobian_inv(theta)
    return np.concatenate([theta, jinv @ x.position, jinv @ x.velocity])


def se3_exp(xi: np.ndarray) -> Pose:
    xi = np.asarray(xi, dtype=float)
    if xi.shape != (6,):
        raise DimensionMismatchError(f"expected 6-vector, got shape {xi.shape}")
    return Pose(so3_exp(xi[:3]), so3_left_jacobian(xi[:3]) @ xi[3:6])


def se3_log(t: Pose) -> np.ndarray:
    theta = so3_log(t.rotation)
    return np.concatenate([theta, so3_left_jacobian_inv(theta) @ t.translation])


def adjoint(x: ExtendedPose) -> np.ndarray:
    """9x9 adjoint of an extended pose, acting on tangent 9-vectors."""
    ad = np.zeros((9, 9))
    r = x.rotation
    ad[0:3, 0:3] = r
    ad[3:6, 3:6] = r
    ad[6:9, 6:9] = r
    ad[3:6, 0:3] = skew(x.position) @ r
    ad[6:9, 0:3] = skew(x.velocity) @ r
    return ad


def little_ad(x: np.ndarray) -> np.ndarray:
    """ad operator of a tangent vector (6- or 9-dimensional)."""
    x = np.asarray(x, dtype=float)
    th = skew(x[:3])
    if x.shape == (9,):
        ad = np.zeros((9, 9))
        ad[0:3, 0:3] = th
        ad[3:6, 3:6] = th
        ad[6:9, 6:9] = th
        ad[3:6, 0:3] = skew(x[3:6])
        ad[6:9, 0:3] = skew(x[6:9])
        return ad
    if x.shape == (6,):
        ad = np.zeros((6, 6))
        ad[0:3, 0:3] = th
        ad[3:6, 3:6] = th
        ad[3:6, 0:3] = skew(x[3:6])
        return ad
    raise DimensionMismatchError(f"expected 6- or 9-vector, got shape {x.shape}")


def dexp_inv(xi: np.ndarray, order: int = 4) -> np.ndarray:
    """Truncated inverse left Jacobian, Sum_i (B_i / i!) ad_xi^i.

    `order` counts series terms beyond the identity. This is the linear map
    satisfying log(exp(x) exp(xi)) ~= xi + dexp_inv(xi) x for small x.
    """
    if order < 0:
        raise ValueError("order must be nonnegative")
    ad = little_ad(xi)
    n = ad.shape[0]
    out = np.eye(n)
    power = np.eye(n)
    for i in range(1, order + 1):
        power = power @ ad
        c = (
            _BERNOULLI_COEFFS[i]
            if i < len(_BERNOULLI_COEFFS)
            else _bernoulli_over_factorial(i)
        )
        if c != 0.0:
            out = out + c * power
    return out


def _bernoulli_over_factorial(i: int) -> float:
    from scipy.special import bernoulli

    return float(bernoulli(i)[i]) / math.factorial(i)


def bch_compose_left_small(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """First-order BCH: log(exp(x) exp(y)) for small x."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    return dexp_inv(y) @ x + y


def is_rotation(r: np.ndarray, tol: float = 1e-9) -> bool:
    return (
        r.shape == (3, 3)
        and np.allclose(r.T @ r, np.eye(3), atol=tol)
        and abs(np.linalg.det(r) - 1.0) < tol
    )
