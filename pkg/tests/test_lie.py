import math

import numpy as np
import pytest
from scipy.linalg import expm

from eikf import lie
from eikf.errors import AngleAtPiError


def se23_hat(xi):
    m = np.zeros((5, 5))
    m[:3, :3] = lie.skew(xi[:3])
    m[:3, 3] = xi[3:6]
    m[:3, 4] = xi[6:9]
    return m


def test_so3_exp_identity():
    assert np.allclose(lie.so3_exp(np.zeros(3)), np.eye(3))


def test_so3_exp_quarter_turn_x():
    expected = np.array([[1, 0, 0], [0, 0, -1], [0, 1, 0]], dtype=float)
    assert np.allclose(lie.so3_exp(np.array([math.pi / 2, 0, 0])), expected, atol=1e-12)


def test_so3_exp_matches_matrix_exponential(rng):
    for _ in range(20):
        theta = rng.normal(size=3)
        theta *= 0.3 / np.linalg.norm(theta)
        assert np.allclose(lie.so3_exp(theta), expm(lie.skew(theta)), atol=1e-12)


def test_so3_log_trivial_and_roundtrip():
    assert np.allclose(lie.so3_log(np.eye(3)), np.zeros(3))
    theta = np.array([0.1, -0.2, 0.05])
    assert np.allclose(lie.so3_log(lie.so3_exp(theta)), theta, atol=1e-12)


def test_so3_log_raises_at_pi():
    with pytest.raises(AngleAtPiError):
        lie.so3_log(lie.so3_exp(np.array([math.pi, 0.0, 0.0])))


def test_se23_exp_trivial_cases():
    x = lie.se23_exp(np.zeros(9))
    assert np.allclose(x.matrix(), np.eye(5))
    x = lie.se23_exp(np.array([0, 0, 0, 1, 2, 3, 4, 5, 6.0]))
    assert np.allclose(x.rotation, np.eye(3))
    assert np.allclose(x.position, [1, 2, 3])
    assert np.allclose(x.velocity, [4, 5, 6])


def test_se23_exp_matches_matrix_exponential(rng):
    for _ in range(20):
        xi = rng.normal(size=9)
        nrm = np.linalg.norm(xi[:3])
        if nrm > 2.5:
            xi[:3] *= 2.5 / nrm
        assert np.allclose(lie.se23_exp(xi).matrix(), expm(se23_hat(xi)), atol=1e-12)


def test_se23_log_roundtrip_unit_angle(rng):
    xi = rng.normal(size=9)
    xi[:3] *= 1.0 / np.linalg.norm(xi[:3])
    assert np.abs(lie.se23_log(lie.se23_exp(xi)) - xi).max() < 1e-10


def test_se23_log_pure_velocity():
    x = lie.ExtendedPose(np.eye(3), np.zeros(3), np.array([1.0, 0, 0]))
    assert np.allclose(lie.se23_log(x), [0, 0, 0, 0, 0, 0, 1, 0, 0])


def test_roundtrip_property(rng):
    for _ in range(1000):
        xi = rng.normal(size=9) * rng.uniform(0.1, 2.0)
        nrm = np.linalg.norm(xi[:3])
        if nrm > math.pi - 0.1:
            xi[:3] *= (math.pi - 0.1) / nrm
        assert np.abs(lie.se23_log(lie.se23_exp(xi)) - xi).max() < 1e-9


def test_adjoint_identity_and_block():
    assert np.allclose(lie.adjoint(lie.ExtendedPose.identity()), np.eye(9))
    x = lie.ExtendedPose(np.eye(3), np.array([0.0, 0.0, 1.0]), np.zeros(3))
    y = np.zeros(9)
    y[0] = 1.0
    out = lie.adjoint(x) @ y
    # position block is p^ R e1 = e3 x e1 = +e2 (consistent with the
    # conjugation identity checked below)
    expected = np.zeros(9)
    expected[0] = 1.0
    expected[4] = 1.0
    assert np.allclose(out, expected)


def test_adjoint_conjugation(rng):
    for _ in range(25):
        x = lie.se23_exp(rng.normal(size=9) * 0.8)
        y = rng.normal(size=9) * 0.3
        lhs = lie.se23_exp(lie.adjoint(x) @ y).matrix()
        rhs = (x @ lie.se23_exp(y) @ x.inverse()).matrix()
        assert np.abs(lhs - rhs).max() < 1e-10


def test_adjoint_homomorphism(rng):
    for _ in range(50):
        x = lie.se23_exp(rng.normal(size=9) * 0.8)
        y = lie.se23_exp(rng.normal(size=9) * 0.8)
        assert np.abs(lie.adjoint(x @ y) - lie.adjoint(x) @ lie.adjoint(y)).max() < 1e-10


def test_little_ad_cases(rng):
    assert np.allclose(lie.little_ad(np.zeros(9)), np.zeros((9, 9)))
    x = np.zeros(9)
    x[0] = 1.0
    y = np.zeros(9)
    y[1] = 1.0
    out = lie.little_ad(x) @ y
    assert np.allclose(out[:3], [0, 0, 1])
    # commutator oracle: (ad_x y)^ = x^ y^ - y^ x^
    for _ in range(20):
        a = rng.normal(size=9)
        b = rng.normal(size=9)
        lhs = se23_hat(lie.little_ad(a) @ b)
        rhs = se23_hat(a) @ se23_hat(b) - se23_hat(b) @ se23_hat(a)
        assert np.abs(lhs - rhs).max() < 1e-12


def test_dexp_inv_series_terms(rng):
    assert np.allclose(lie.dexp_inv(np.zeros(9)), np.eye(9))
    xi = rng.normal(size=9)
    assert np.allclose(lie.dexp_inv(xi, order=1), np.eye(9) - 0.5 * lie.little_ad(xi))


def test_dexp_inv_matches_numerically_inverted_left_jacobian(rng):
    """Finite-difference left Jacobian of exp, inverted, vs the series."""
    xi = rng.normal(size=9)
    xi *= 0.2 / np.linalg.norm(xi)
    eps = 1e-7
    j = np.zeros((9, 9))
    for k in range(9):
        d = np.zeros(9)
        d[k] = eps
        j[:, k] = lie.se23_log(lie.se23_exp(xi + d) @ lie.se23_exp(xi).inverse()) / eps
    assert np.abs(lie.dexp_inv(xi, order=4) - np.linalg.inv(j)).max() < 1e-8


def test_bch_trivial_cases(rng):
    y = rng.normal(size=9) * 0.5
    assert np.allclose(lie.bch_compose_left_small(np.zeros(9), y), y)
    x = rng.normal(size=9) * 0.5
    assert np.allclose(lie.bch_compose_left_small(x, np.zeros(9)), x)


def test_bch_second_order_error(rng):
    """Halving ||x|| must shrink the approximation error by at least 3.5x."""
    y = rng.normal(size=9)
    y[:3] *= 0.5 / np.linalg.norm(y[:3])
    direction = rng.normal(size=9)
    direction /= np.linalg.norm(direction)
    errs = []
    for eps in (1e-2, 5e-3, 2.5e-3):
        x = eps * direction
        truth = lie.se23_log(lie.se23_exp(x) @ lie.se23_exp(y))
        errs.append(np.linalg.norm(truth - lie.bch_compose_left_small(x, y)))
    assert errs[0] / errs[1] > 3.5
    assert errs[1] / errs[2] > 3.5


def test_se3_exp_log_roundtrip(rng):
    for _ in range(50):
        xi = rng.normal(size=6)
        nrm = np.linalg.norm(xi[:3])
        if nrm > math.pi - 0.1:
            xi[:3] *= (math.pi - 0.1) / nrm
        assert np.abs(lie.se3_log(lie.se3_exp(xi)) - xi).max() < 1e-9


def test_pose_compose_inverse(rng):
    a = lie.se3_exp(rng.normal(size=6))
    b = lie.se3_exp(rng.normal(size=6))
    assert np.allclose((a @ b).matrix(), a.matrix() @ b.matrix())
    assert np.allclose((a @ a.inverse()).matrix(), np.eye(4), atol=1e-12)
