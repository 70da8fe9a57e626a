import numpy as np
import pytest

from eikf import gaussian, lie
from eikf.gaussian import GRAVITY, BeliefState, NoiseParams


def random_psd(rng, n, scale=1.0):
    l = rng.normal(size=(n, n)) * scale
    return l @ l.T


def make_belief(rng, cov_scale=0.05):
    mean = lie.se23_exp(rng.normal(size=9))
    cov = random_psd(rng, 15, cov_scale) + 1e-6 * np.eye(15)
    return BeliefState(mean, np.zeros(3), np.zeros(3), cov)


def test_bracket1():
    assert np.allclose(gaussian.bracket1(np.eye(3)), -2 * np.eye(3))
    assert np.allclose(gaussian.bracket1(np.zeros((3, 3))), np.zeros((3, 3)))
    assert np.allclose(gaussian.bracket1(np.diag([1.0, 2, 3])), np.diag([-5.0, -4, -3]))


def test_bracket2(rng):
    assert np.allclose(gaussian.bracket2(np.zeros((3, 3)), np.zeros((3, 3))), 0.0)
    assert np.allclose(gaussian.bracket2(np.eye(3), np.eye(3)), 2 * np.eye(3))
    for _ in range(10):
        a = rng.normal(size=(3, 3))
        b = rng.normal(size=(3, 3))
        tr = np.trace
        ref = (-tr(a) * np.eye(3) + a) @ (-tr(b) * np.eye(3) + b) + (
            -tr(b @ a) * np.eye(3) + b @ a
        )
        assert np.abs(gaussian.bracket2(a, b) - ref).max() < 1e-12


def test_sigma_fourth_limits(rng):
    sig = random_psd(rng, 9)
    assert np.allclose(gaussian.sigma_fourth(sig, np.zeros((9, 9))), sig)
    p = random_psd(rng, 9)
    assert np.allclose(gaussian.sigma_fourth(np.zeros((9, 9)), p), 0.0)


def ad_apply(xi, v):
    th, p, w = xi[:, :3], xi[:, 3:6], xi[:, 6:9]
    a, b, c = v[:, :3], v[:, 3:6], v[:, 6:9]
    return np.concatenate(
        [np.cross(th, a), np.cross(p, a) + np.cross(th, b), np.cross(w, a) + np.cross(th, c)],
        axis=1,
    )


def test_sigma_fourth_matches_sampling_oracle(rng):
    """Monte-Carlo estimate of E[(I - ad/2 + ad^2/6) n n^T (.)^T]."""
    p = random_psd(rng, 9, 0.04) + 0.003 * np.eye(9)
    sig = random_psd(rng, 9, 0.3)
    pred = gaussian.sigma_fourth(sig, p)
    n = 1_000_000
    xi = rng.multivariate_normal(np.zeros(9), p, size=n)
    noise = rng.multivariate_normal(np.zeros(9), sig, size=n)
    a1 = ad_apply(xi, noise)
    n4 = noise - 0.5 * a1 + ad_apply(xi, a1) / 6.0
    mc = n4.T @ n4 / n
    se = np.abs(sig).max() * np.sqrt(2.0 / n)
    assert np.abs(mc - pred).max() < 3 * se


def test_sigma_fourth_symmetry_and_growth(rng):
    sig = random_psd(rng, 9, 0.3)
    prev = 0.0
    base = random_psd(rng, 9, 0.05)
    for c in (1.0, 2.0, 4.0):
        out = gaussian.sigma_fourth(sig, c * base)
        assert np.abs(out - out.T).max() < 1e-10
        corr = np.linalg.norm(out - sig)
        assert corr > prev
        prev = corr


def test_noise_sigma_nprime_identity_and_similarity(rng):
    params = NoiseParams()
    belief = BeliefState(lie.ExtendedPose.identity(), cov=np.zeros((15, 15)))
    out = gaussian.noise_sigma_nprime(belief, params)
    expected = np.zeros((9, 9))
    expected[0:3, 0:3] = params.sigma_g**2 * np.eye(3)
    expected[6:9, 6:9] = params.sigma_a**2 * np.eye(3)
    assert np.allclose(out, expected)
    # Table-I values at identity mean, zero bias covariance
    assert np.allclose(np.diag(out)[:3], 1e-4)
    assert np.allclose(np.diag(out)[6:], 1e-4)

    rot_only = BeliefState(
        lie.ExtendedPose(lie.so3_exp(rng.normal(size=3)), np.zeros(3), np.zeros(3)),
        cov=np.zeros((15, 15)),
    )
    out_rot = gaussian.noise_sigma_nprime(rot_only, params)
    assert np.allclose(
        np.sort(np.linalg.eigvalsh(out_rot)), np.sort(np.linalg.eigvalsh(expected)), atol=1e-12
    )


def test_state_transition_structure():
    g = GRAVITY
    assert np.allclose(gaussian.state_transition(0.0, g), np.eye(9))
    phi = gaussian.state_transition(0.01, g)
    assert np.allclose(phi[3:6, 6:9], 0.01 * np.eye(3))
    assert np.allclose(phi[6:9, 0:3], 0.01 * lie.skew(g))
    a = gaussian.drift_matrix(g)
    assert np.allclose(a @ a @ a, np.zeros((9, 9)))  # exactly nilpotent


def test_state_transition_semigroup():
    g = GRAVITY
    lhs = gaussian.state_transition(0.013, g) @ gaussian.state_transition(0.027, g)
    assert np.abs(lhs - gaussian.state_transition(0.04, g)).max() < 1e-12


def test_discrete_process_noise_cases(rng):
    g = GRAVITY
    assert np.allclose(gaussian.discrete_process_noise(0.1, np.zeros((9, 9)), g), 0.0)
    qd = gaussian.discrete_process_noise(0.3, np.eye(9), np.zeros(3))
    assert np.allclose(qd[0:3, 0:3], 0.3 * np.eye(3))


def test_discrete_process_noise_quadrature_oracle(rng):
    sig = random_psd(rng, 9, 0.4)
    dt = 0.01  # one IMU interval; trapezoid error scales with dt^3
    qd = gaussian.discrete_process_noise(dt, sig, GRAVITY)
    taus = np.linspace(0.0, dt, 1001)
    acc = np.zeros((9, 9))
    for i, tau in enumerate(taus):
        phi = gaussian.state_transition(tau, GRAVITY)
        w = 0.5 if i in (0, len(taus) - 1) else 1.0
        acc += w * phi @ sig @ phi.T
    acc *= dt / (len(taus) - 1)
    assert np.abs(qd - acc).max() < 1e-9 * np.linalg.norm(qd)


def test_propagate_covariance_basics(rng):
    params = NoiseParams()
    belief = make_belief(rng)
    out0 = gaussian.propagate_covariance(belief, 0.0, params)
    assert np.allclose(out0, belief.cov, atol=1e-12)
    out = gaussian.propagate_covariance(belief, 0.01, params)
    growth = np.diag(out - belief.cov)
    assert np.allclose(growth[9:12], params.sigma_bg**2 * 0.01)
    assert np.allclose(growth[12:15], params.sigma_ba**2 * 0.01)


@pytest.mark.slow
def test_propagate_covariance_preserves_psd(rng):
    params = NoiseParams()
    for _ in range(10_000):
        belief = make_belief(rng, cov_scale=rng.uniform(0.01, 0.3))
        out = gaussian.propagate_covariance(belief, 0.01, params)
        assert np.abs(out - out.T).max() < 1e-12
        assert np.linalg.eigvalsh(out)[0] > -1e-9


def test_fourth_order_beats_first_order(rng):
    """Sample the discretized error dynamics; the 4th-order prediction must
    sit closer to the sample covariance than the 1st-order one."""
    p = np.zeros((9, 9))
    p[0:3, 0:3] = 0.04 * np.eye(3)  # (0.2 rad)^2 attitude spread
    p[3:6, 3:6] = 1e-4 * np.eye(3)
    p[6:9, 6:9] = 1e-4 * np.eye(3)
    sig = np.eye(9)
    dt = 1.0
    phi = gaussian.state_transition(dt, GRAVITY)
    n = 100_000
    xi = rng.multivariate_normal(np.zeros(9), p, size=n)
    w = rng.multivariate_normal(np.zeros(9), sig * dt, size=n)
    a1 = ad_apply(xi, w)
    prop = xi @ phi.T + (w - 0.5 * a1 + ad_apply(xi, a1) / 6.0)
    sample_cov = prop.T @ prop / n
    pred4 = phi @ p @ phi.T + dt * gaussian.sigma_fourth(sig, p)
    pred1 = phi @ p @ phi.T + dt * sig
    d4 = np.linalg.norm(sample_cov - pred4)
    d1 = np.linalg.norm(sample_cov - pred1)
    assert d4 < d1
