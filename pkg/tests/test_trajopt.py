import numpy as np
import pytest

from ccmlearn.trajopt import NlpConfig, cheb_grid, solve_transcribed


def test_grid_order_two_closed_form():
    g = cheb_grid(2)
    np.testing.assert_allclose(g.nodes, [1.0, 0.0, -1.0], atol=1e-15)
    D_expect = np.array([[1.5, -2.0, 0.5], [0.5, 0.0, -0.5], [-0.5, 2.0, -1.5]])
    np.testing.assert_allclose(g.D, D_expect, atol=1e-14)


def test_differentiation_exact_on_polynomials():
    for N in (5, 8, 12):
        g = cheb_grid(N)
        # row sums vanish (constants annihilated)
        assert np.abs(g.D.sum(axis=1)).max() <= 1e-12
        t = g.nodes
        np.testing.assert_allclose(g.D @ t**3, 3 * t**2, atol=1e-10)
        for k in range(N + 1):
            expect = k * t ** (k - 1) if k > 0 else np.zeros_like(t)
            np.testing.assert_allclose(g.D @ t**k, expect, atol=1e-9)


def test_quadrature_weights():
    for N in (4, 9, 16):
        g = cheb_grid(N)
        assert abs(g.quad_w.sum() - 2.0) <= 1e-12
    # spectral accuracy on a smooth integrand at moderate order
    for N in (9, 16):
        g = cheb_grid(N)
        val = g.quad_w @ np.exp(g.nodes)
        assert abs(val - (np.e - 1 / np.e)) <= 1e-9


DI_B = np.array([[0.0], [1.0]])


def di_dyn(x):
    return np.array([x[1], 0.0]), np.array([[0.0, 1.0], [0.0, 0.0]])


def test_double_integrator_minimum_energy():
    g = cheb_grid(16)
    nom = solve_transcribed(di_dyn, DI_B, x0=[0.0, 0.0], xT=[1.0, 0.0], T=1.0, grid=g)
    assert nom.status == "ok"
    assert nom.kkt_residual <= 1e-6
    # analytic optimum u(t) = 6 - 12 t, cost 12
    assert abs(nom.cost - 12.0) <= 0.01 * 12.0
    assert abs(nom.u_nodes[0, 0] - 6.0) <= 0.01 * 6.0
    # endpoints pinned exactly
    np.testing.assert_allclose(nom.x_nodes[0], [0.0, 0.0], atol=1e-12)
    np.testing.assert_allclose(nom.x_nodes[-1], [1.0, 0.0], atol=1e-12)
    # interpolation reproduces the analytic control midcourse
    assert abs(nom.interp_control(0.5)[0] - 0.0) <= 0.05


def test_equilibrium_transfer_is_constant():
    A = np.array([[0.0, 1.0], [0.0, -1.0]])
    c = np.array([0.0, 2.0])

    def dyn(x):
        return A @ x + c, A

    g = cheb_grid(10)
    T = 1.5
    nom = solve_transcribed(dyn, DI_B, x0=[0.0, 0.0], xT=[0.0, 0.0], T=T, grid=g)
    assert nom.status == "ok"
    # equilibrium input -2 cancels the drift, cost = T * 4
    np.testing.assert_allclose(nom.u_nodes, -2.0, atol=1e-4)
    assert abs(nom.cost - T * 4.0) <= 1e-3
    assert np.abs(nom.x_nodes).max() <= 1e-5


def test_time_scaling_consistency():
    g = cheb_grid(14)
    nom_T = solve_transcribed(di_dyn, DI_B, [0.0, 0.0], [1.0, 0.0], T=2.0, grid=g)

    def scaled_dyn(x):
        f, J = di_dyn(x)
        return 2.0 * f, 2.0 * J

    nom_1 = solve_transcribed(scaled_dyn, 2.0 * DI_B, [0.0, 0.0], [1.0, 0.0], T=1.0, grid=g)
    assert nom_T.status == nom_1.status == "ok"
    assert abs(nom_T.cost - 2.0 * nom_1.cost) <= 1e-4 * max(1.0, nom_T.cost)


def test_collocation_residual_at_nodes():
    g = cheb_grid(12)
    nom = solve_transcribed(di_dyn, DI_B, [0.0, 0.0], [1.0, 0.0], T=1.0, grid=g)
    # recompute the residual independently on the ascending grid
    D = g.D
    order = np.argsort((g.nodes + 1.0) / 2.0)
    X_desc = nom.x_nodes[np.argsort(order)]
    U_desc = nom.u_nodes[np.argsort(order)]
    F = np.array([di_dyn(x)[0] for x in X_desc])
    R = (2.0 / nom.T) * (D @ X_desc) - F - U_desc @ DI_B.T
    assert np.abs(R).max() <= 1e-6


def test_barycentric_interpolation_exact_on_nodes_and_smooth():
    g = cheb_grid(10)
    nom = solve_transcribed(di_dyn, DI_B, [0.0, 0.0], [1.0, 0.0], T=1.0, grid=g)
    for k in range(len(nom.times)):
        np.testing.assert_allclose(nom.interp_state(nom.times[k]), nom.x_nodes[k], atol=1e-12)
    # position matches the analytic cubic 3t^2 - 2t^3
    for t in np.linspace(0.05, 0.95, 7):
        assert abs(nom.interp_state(t)[0] - (3 * t**2 - 2 * t**3)) <= 5e-3
