"""Feedback tracking: TV-LQR along nominals, and the geodesic metric controller.

TV-LQR linearizes the learned model along the nominal, integrates the Riccati
differential equation backward with RK4 on a uniform grid, and applies
u = u* - K(t)(x - x*).  The metric controller computes a minimum-energy curve
between the nominal and actual states under M(x) = W(x)^-1, then picks the
smallest feedback satisfying the energy-decrease inequality, which is a single
linear inequality in the control.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize

from .errors import CertificateViolation, SolverFailure
from .models import (CertifiedModel, DynamicsModel, MetricModel, eval_dynamics,
                     metric_inverse, metric_value_and_gradient)
from .pvtol import SimResult, simulate
from .trajopt import NominalTrajectory, cheb_grid


@dataclass
class GainSchedule:
    """Time-varying gains and cost-to-go matrices on a uniform grid."""

    times: np.ndarray
    K: np.ndarray          # (n_t, m, n)
    P: np.ndarray          # (n_t, n, n)

    def gain_at(self, t: float) -> np.ndarray:
        dt = self.times[1] - self.times[0]
        k = int(np.clip(np.floor(t / dt), 0, len(self.times) - 1))
        return self.K[k]


def tvlqr_gains(model: DynamicsModel, nominal: NominalTrajectory,
                Q: np.ndarray, R: np.ndarray, Qf: np.ndarray,
                dt: float = 0.01) -> GainSchedule:
    """Backward Riccati sweep along the nominal, linearizing the learned model."""
    Q = np.asarray(Q, dtype=float)
    R = np.asarray(R, dtype=float)
    Qf = np.asarray(Qf, dtype=float)
    T = nominal.T
    n_t = int(round(T / dt)) + 1
    times = np.linspace(0.0, T, n_t)
    B = model.b_consts
    Rinv = np.linalg.inv(R)

    def A_at(t):
        x = nominal.interp_state(t)
        return eval_dynamics(model, x)[3]

    n = Q.shape[0]
    P = np.empty((n_t, n, n))
    P[-1] = Qf

    def rde(P_mat, A):
        return A.T @ P_mat + P_mat @ A - P_mat @ B @ Rinv @ B.T @ P_mat + Q

    BRB = B @ Rinv @ B.T
    BRB_norm = np.linalg.norm(BRB)
    A_grid = np.array([A_at(t) for t in times])
    for k in range(n_t - 1, 0, -1):
        t = times[k]
        h = times[k] - times[k - 1]
        A_hi, A_lo = A_grid[k], A_grid[k - 1]

        def A_interp(tt):
            # stiffness lives in P, so a linear sweep of A inside the step suffices
            frac = np.clip((t - tt) / h, 0.0, 1.0)
            return (1.0 - frac) * A_hi + frac * A_lo

        # the quadratic term makes the sweep stiff near large terminal weights;
        # substep to keep h_sub * (decay rate) inside the RK4 stability region
        P_cur = P[k]
        rate = 2.0 * np.linalg.norm(A_hi, 2) + 2.0 * np.linalg.norm(BRB @ P_cur, 2)
        n_sub = int(np.clip(np.ceil(h * rate / 1.5), 1, 100000))
        h_sub = h / n_sub
        for j in range(n_sub):
            t1 = t - j * h_sub
            A1 = A_interp(t1)
            A2 = A_interp(t1 - h_sub / 2)
            A3 = A_interp(t1 - h_sub)
            k1 = rde(P_cur, A1)
            k2 = rde(P_cur + (h_sub / 2) * k1, A2)
            k3 = rde(P_cur + (h_sub / 2) * k2, A2)
            k4 = rde(P_cur + h_sub * k3, A3)
            P_cur = P_cur + (h_sub / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
            asym = np.abs(P_cur - P_cur.T).max()
            P_cur = 0.5 * (P_cur + P_cur.T)
            if asym > 1e-6 or np.linalg.eigvalsh(P_cur)[0] < -1e-6:
                raise SolverFailure(
                    f"Riccati integration lost symmetry/PSD at t={t1 - h_sub:.3f}s "
                    f"(asymmetry {asym:.2e})")
        P[k - 1] = P_cur

    K = np.einsum("ij,jk,tkl->til", Rinv, B.T, P)
    return GainSchedule(times=times, K=K, P=P)


def track_closed_loop(plant_field, nominal: NominalTrajectory,
                      gains: GainSchedule | None, dt: float = 0.01) -> SimResult:
    """Run the true plant under u = u*(t) - K(t)(x - x*(t)) from the nominal start.

    ``gains=None`` plays the nominal control open loop.
    """

    def policy(t, x):
        u = nominal.interp_control(t)
        if gains is not None:
            u = u - gains.gain_at(t) @ (x - nominal.interp_state(t))
        return u

    x0 = nominal.x_nodes[0]
    return simulate(plant_field, policy, x0, T=nominal.T, dt=dt)


# ---------------------------------------------------------------------------
# Geodesic metric controller
# ---------------------------------------------------------------------------

@dataclass
class Geodesic:
    """Minimum-energy curve between two states under the state metric."""

    curve_nodes: np.ndarray     # (n_nodes, n) ascending from x_star to x
    energy: float
    endpoint0: np.ndarray
    endpoint1: np.ndarray
    delta0: np.ndarray          # curve derivative d c / d s at s = 0
    delta1: np.ndarray          # at s = 1


def geodesic_generic(metric_fn, x_star, x, n_nodes: int = 7) -> Geodesic:
    """Energy-minimizing curve for a generic metric callback.

    ``metric_fn(x) -> (M, dM)`` with dM[d] the derivative of M along
    coordinate d.  The curve is a Chebyshev interpolant with fixed endpoints;
    interior node positions are optimized.
    """
    x_star = np.asarray(x_star, dtype=float)
    x = np.asarray(x, dtype=float)
    n = len(x)
    g = cheb_grid(n_nodes - 1)
    # ascending parameter s in [0, 1]
    s_nodes = (g.nodes[::-1] + 1.0) / 2.0
    D = 2.0 * g.D[::-1, ::-1]       # d/ds on the ascending grid
    w = g.quad_w[::-1] / 2.0        # integrates ds over [0, 1]

    if np.array_equal(x, x_star):
        nodes = np.tile(x_star, (n_nodes, 1))
        return Geodesic(nodes, 0.0, x_star.copy(), x.copy(),
                        np.zeros(n), np.zeros(n))

    def full_nodes(z):
        Y = np.empty((n_nodes, n))
        Y[0] = x_star
        Y[-1] = x
        Y[1:-1] = z.reshape(n_nodes - 2, n)
        return Y

    Ms = [None] * n_nodes
    dMs = [None] * n_nodes

    def energy_grad(z):
        Y = full_nodes(z)
        delta = D @ Y
        E = 0.0
        gY = np.zeros_like(Y)
        for j in range(n_nodes):
            M, dM = metric_fn(Y[j])
            Ms[j] = M
            Md = M @ delta[j]
            E += w[j] * float(delta[j] @ Md)
            gY += 2.0 * w[j] * np.outer(D[j], Md)
            gY[j] += w[j] * np.einsum("dab,a,b->d", dM, delta[j], delta[j])
        return E, gY[1:-1].ravel()

    z0 = np.linspace(0, 1, n_nodes)[1:-1, None] * (x - x_star)[None, :] + x_star[None, :]
    res = minimize(energy_grad, z0.ravel(), jac=True, method="L-BFGS-B",
                   options={"maxiter": 500, "ftol": 1e-14, "gtol": 1e-10})
    Y = full_nodes(res.x)
    delta = D @ Y
    E, _ = energy_grad(res.x)
    return Geodesic(curve_nodes=Y, energy=float(E), endpoint0=x_star.copy(),
                    endpoint1=x.copy(), delta0=delta[0].copy(), delta1=delta[-1].copy())


def _metric_fn_from_model(mm: MetricModel):
    def metric_fn(x):
        W, Gw = metric_value_and_gradient(mm, x)
        eigs = np.linalg.eigvalsh(W)
        if eigs[0] <= 0:
            raise CertificateViolation(
                f"dual metric not positive definite along geodesic search "
                f"(min eigenvalue {eigs[0]:.3e})", min_eig=float(eigs[0]))
        M = np.linalg.inv(W)
        M = 0.5 * (M + M.T)
        dM = np.stack([-M @ Gw[:, :, d] @ M for d in range(len(x))])
        return M, dM

    return metric_fn


def geodesic(mm: MetricModel, x_star, x, n_nodes: int = 7) -> Geodesic:
    """Minimum-energy curve under the model metric M = W^-1."""
    return geodesic_generic(_metric_fn_from_model(mm), x_star, x, n_nodes)


def ccm_feedback(cm: CertifiedModel, x_star, u_star, x, geo: Geodesic) -> np.ndarray:
    """Smallest feedback achieving the required energy decrease rate.

    The energy decrease along the flow is affine in the feedback k,
    E_d(k) = a + b.k; the controller returns 0 when the uncontrolled rate
    suffices and otherwise the minimum-norm solution of a + b.k <= -2 lambda E.
    """
    x_star = np.asarray(x_star, dtype=float)
    u_star = np.asarray(u_star, dtype=float)
    x = np.asarray(x, dtype=float)
    M_x = metric_inverse(cm.metric, x)
    M_star = metric_inverse(cm.metric, x_star)
    f_x, B, _, _ = eval_dynamics(cm.dynamics, x)
    f_star, _, _, _ = eval_dynamics(cm.dynamics, x_star)
    a = (2.0 * geo.delta1 @ M_x @ (f_x + B @ u_star)
         - 2.0 * geo.delta0 @ M_star @ (f_star + B @ u_star))
    b = 2.0 * B.T @ (M_x @ geo.delta1)
    need = -2.0 * cm.lam * geo.energy
    if a <= need:
        return np.zeros(B.shape[1])
    bn2 = float(b @ b)
    if bn2 <= 1e-14 * (1.0 + abs(a)):
        raise CertificateViolation(
            "feedback set empty: zero control authority along the geodesic "
            f"with required decrease {need:.3e} vs natural rate {a:.3e}")
    return -((a - need) / bn2) * b
