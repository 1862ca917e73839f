import numpy as np
import pytest

from ccmlearn.errors import CertificateViolation
from ccmlearn.features import sample_rff
from ccmlearn.models import (CertifiedModel, DynamicsModel, MetricModel,
                             eval_dynamics, eval_metric, metric_inverse,
                             metric_value_and_gradient)


def small_bases(seed=0, s_f=8, s_w=6):
    f_basis = sample_rff(seed, sigma=6.0, s=s_f, active_dims=range(6))
    w_basis = sample_rff(seed + 1, sigma=15.0, s=s_w, active_dims=range(6))
    w_hat_basis = sample_rff(seed + 2, sigma=15.0, s=s_w, active_dims=range(4))
    return f_basis, w_basis, w_hat_basis


def random_dynamics(seed=0, scale=0.5, s_f=8):
    f_basis, _, _ = small_bases(seed, s_f=s_f)
    rng = np.random.default_rng(seed + 10)
    alpha = scale * rng.normal(size=f_basis.dim * 6)
    b = np.zeros((6, 2))
    b[4:, :] = [[2.0, 2.0], [60.0, -60.0]]
    return DynamicsModel(f_basis, alpha, b)


def random_metric(seed=0, scale=0.05):
    _, w_basis, w_hat_basis = small_bases(seed)
    mm = MetricModel.identity(w_basis, w_hat_basis)
    rng = np.random.default_rng(seed + 20)
    theta = mm.theta + scale * rng.normal(size=mm.theta.shape)
    theta_hat = mm.theta_hat + scale * rng.normal(size=mm.theta_hat.shape)
    return MetricModel(w_basis, w_hat_basis, theta, theta_hat, mm.w_low, mm.w_high)


def test_zero_alpha():
    m = random_dynamics()
    m = DynamicsModel(m.f_basis, np.zeros_like(m.alpha), m.b_consts)
    u = np.array([0.3, -0.2])
    fhat, B, xdot, J = eval_dynamics(m, np.ones(6), u)
    np.testing.assert_array_equal(fhat, np.zeros(6))
    np.testing.assert_array_equal(J, np.zeros((6, 6)))
    np.testing.assert_allclose(xdot, B @ u)


def test_dynamics_jacobian_finite_difference():
    m = random_dynamics(1)
    rng = np.random.default_rng(5)
    h = 1e-6
    for _ in range(10):
        x = rng.uniform(-3, 3, size=6)
        _, _, _, J = eval_dynamics(m, x)
        J_fd = np.zeros((6, 6))
        for k in range(6):
            e = np.zeros(6)
            e[k] = h
            fp = eval_dynamics(m, x + e)[0]
            fm = eval_dynamics(m, x - e)[0]
            J_fd[:, k] = (fp - fm) / (2 * h)
        assert np.abs(J - J_fd).max() / max(np.abs(J_fd).max(), 1.0) <= 1e-6


def test_u_zero_gives_drift():
    m = random_dynamics(2)
    x = np.linspace(-1, 1, 6)
    fhat, _, xdot, _ = eval_dynamics(m, x, np.zeros(2))
    np.testing.assert_array_equal(fhat, xdot)


def test_control_jacobian_is_b():
    m = random_dynamics(3)
    x = np.zeros(6)
    u = np.array([0.5, -1.0])
    h = 1e-6
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        dp = eval_dynamics(m, x, u + e)[2]
        dm = eval_dynamics(m, x, u - e)[2]
        np.testing.assert_allclose((dp - dm) / (2 * h), m.b_consts[:, j], atol=1e-9)


def test_b_sparsity_and_invertibility_enforced():
    f_basis, _, _ = small_bases()
    alpha = np.zeros(f_basis.dim * 6)
    bad = np.zeros((6, 2))
    bad[0, 0] = 1.0
    bad[4:, :] = np.eye(2)
    with pytest.raises(ValueError):
        DynamicsModel(f_basis, alpha, bad)
    singular = np.zeros((6, 2))
    singular[4, :] = [1.0, 1.0]
    with pytest.raises(ValueError):
        DynamicsModel(f_basis, alpha, singular)


def test_identity_metric():
    _, w_basis, w_hat_basis = small_bases()
    mm = MetricModel.identity(w_basis, w_hat_basis)
    rng = np.random.default_rng(0)
    for _ in range(3):
        x = rng.normal(size=6)
        v = rng.normal(size=6)
        W, dW = eval_metric(mm, x, v)
        np.testing.assert_allclose(W, np.eye(6), atol=1e-15)
        np.testing.assert_allclose(dW, np.zeros((6, 6)), atol=1e-15)


def test_metric_directional_derivative():
    mm = random_metric(1)
    rng = np.random.default_rng(6)
    h = 1e-6
    for _ in range(10):
        x = rng.uniform(-2, 2, size=6)
        v = rng.normal(size=6)
        W, dW = eval_metric(mm, x, v)
        Wp, _ = eval_metric(mm, x + h * v, np.zeros(6))
        Wm, _ = eval_metric(mm, x - h * v, np.zeros(6))
        np.testing.assert_allclose(dW, (Wp - Wm) / (2 * h), atol=1e-6)


def test_metric_zero_direction():
    mm = random_metric(2)
    _, dW = eval_metric(mm, np.ones(6), np.zeros(6))
    np.testing.assert_array_equal(dW, np.zeros((6, 6)))


def test_metric_symmetry_and_block_locality():
    mm = random_metric(3)
    rng = np.random.default_rng(7)
    x = rng.normal(size=6)
    W, _ = eval_metric(mm, x, np.zeros(6))
    np.testing.assert_array_equal(W, W.T)
    x2 = x.copy()
    x2[4] += 0.7
    x2[5] -= 0.4
    W2, _ = eval_metric(mm, x2, np.zeros(6))
    np.testing.assert_array_equal(W[:4, :4], W2[:4, :4])


def test_metric_gradient_tensor():
    mm = random_metric(4)
    x = np.array([0.3, -0.2, 0.1, 0.0, 0.5, -0.1])
    W, Gw = metric_value_and_gradient(mm, x)
    v = np.array([0.2, 0.1, -0.3, 0.4, -0.5, 0.6])
    _, dW = eval_metric(mm, x, v)
    np.testing.assert_allclose(Gw @ v, dW, atol=1e-12)


def test_metric_inverse():
    _, w_basis, w_hat_basis = small_bases()
    mm = MetricModel.identity(w_basis, w_hat_basis)
    M = metric_inverse(mm, np.zeros(6))
    np.testing.assert_allclose(M, np.eye(6), atol=1e-14)

    two = MetricModel(w_basis, w_hat_basis, 2.0 * mm.theta, 2.0 * mm.theta_hat, 2.0, 2.0)
    np.testing.assert_allclose(metric_inverse(two, np.ones(6)), 0.5 * np.eye(6), atol=1e-14)

    mm_r = random_metric(5, scale=0.02)
    x = np.array([1.0, -1.0, 0.2, 0.1, -0.3, 0.2])
    W, _ = eval_metric(mm_r, x, np.zeros(6))
    M = metric_inverse(mm_r, x)
    assert np.abs(M @ W - np.eye(6)).max() <= 1e-10

    neg = MetricModel(w_basis, w_hat_basis, -mm.theta, -mm.theta_hat, 1.0, 1.0)
    with pytest.raises(CertificateViolation) as exc:
        metric_inverse(neg, np.zeros(6))
    assert exc.value.min_eig is not None and exc.value.min_eig < 0


def test_certified_model_requires_positive_rate():
    dyn = random_dynamics()
    met = random_metric()
    with pytest.raises(ValueError):
        CertifiedModel(dyn, met, lam=0.0)
    cm = CertifiedModel(dyn, met, lam=0.01)
    assert cm.lam == 0.01
