"""Chebyshev pseudospectral minimum-energy trajectory optimization.

Fixed endpoints, fixed final time: states and controls live on
Chebyshev-Gauss-Lobatto nodes, dynamics are collocated through the spectral
differentiation matrix, and the control energy integral uses Clenshaw-Curtis
weights.  The transcribed problem is solved by an augmented-Lagrangian outer
loop with an L-BFGS inner minimizer on the collocated variables.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .models import DynamicsModel, eval_dynamics

STATUS_OK = "ok"
STATUS_MAX_ITER = "max_iter"


@dataclass(frozen=True)
class ChebGrid:
    """CGL nodes on [-1, 1] (descending), differentiation matrix, CC weights."""

    N: int
    nodes: np.ndarray
    D: np.ndarray
    quad_w: np.ndarray


def cheb_grid(N: int) -> ChebGrid:
    """Standard Chebyshev-Gauss-Lobatto grid of order N."""
    if N < 2:
        raise ValueError("N must be >= 2")
    theta = np.pi * np.arange(N + 1) / N
    x = np.cos(theta)
    c = np.ones(N + 1)
    c[0] = c[N] = 2.0
    c *= (-1.0) ** np.arange(N + 1)
    X = np.tile(x, (N + 1, 1)).T
    dX = X - X.T
    D = np.outer(c, 1.0 / c) / (dX + np.eye(N + 1))
    D -= np.diag(D.sum(axis=1))

    # Clenshaw-Curtis weights
    w = np.zeros(N + 1)
    ii = np.arange(1, N)
    v = np.ones(N - 1)
    if N % 2 == 0:
        w[0] = w[N] = 1.0 / (N**2 - 1)
        for k in range(1, N // 2):
            v -= 2.0 * np.cos(2 * k * theta[ii]) / (4 * k**2 - 1)
        v -= np.cos(N * theta[ii]) / (N**2 - 1)
    else:
        w[0] = w[N] = 1.0 / N**2
        for k in range(1, (N - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[ii]) / (4 * k**2 - 1)
    w[ii] = 2.0 * v / N
    return ChebGrid(N=N, nodes=x, D=D, quad_w=w)


@dataclass
class NlpConfig:
    tol: float = 1e-6
    max_outer: int = 25
    inner_maxiter: int = 100
    rho0: float = 10.0


@dataclass
class NominalTrajectory:
    """Optimized node trajectory in ascending time order."""

    times: np.ndarray
    x_nodes: np.ndarray
    u_nodes: np.ndarray
    cost: float
    kkt_residual: float
    status: str
    T: float

    def _bary_weights(self):
        n = len(self.times) - 1
        w = (-1.0) ** np.arange(n + 1)
        w[0] *= 0.5
        w[n] *= 0.5
        return w

    def _interp(self, values, t):
        t = np.clip(t, self.times[0], self.times[-1])
        k = np.argmin(np.abs(self.times - t))
        if abs(self.times[k] - t) < 1e-13:
            return values[k]
        w = self._bary_weights()
        r = w / (t - self.times)
        return (r @ values) / r.sum()

    def interp_state(self, t: float) -> np.ndarray:
        return self._interp(self.x_nodes, t)

    def interp_control(self, t: float) -> np.ndarray:
        return self._interp(self.u_nodes, t)


def solve_transcribed(dyn_fn, B, x0, xT, T, grid: ChebGrid,
                      nlp_cfg: NlpConfig | None = None, u_init=None) -> NominalTrajectory:
    """Minimum-energy collocation with generic dynamics callbacks.

    ``dyn_fn(x) -> (f, J)`` gives the drift and its Jacobian; B is the
    constant input matrix.  Node ordering inside the solver is the native
    (descending) Chebyshev order; the returned trajectory is ascending in
    time.
    """
    cfg = nlp_cfg or NlpConfig()
    x0 = np.asarray(x0, dtype=float)
    xT = np.asarray(xT, dtype=float)
    B = np.asarray(B, dtype=float)
    n_x = len(x0)
    n_u = B.shape[1]
    N = grid.N
    n_nodes = N + 1
    D = grid.D
    scale = 2.0 / T

    if u_init is None:
        f_goal, _ = dyn_fn(xT)
        u_init = np.linalg.lstsq(B, -f_goal, rcond=None)[0]

    # decision variables: interior states (node rows 1..N-1) + all controls
    frac = (grid.nodes + 1.0) / 2.0          # 1 at t=T row 0, 0 at t=0 row N
    X_init = np.outer(1.0 - frac, x0) + np.outer(frac, xT)
    U_init = np.tile(u_init, (n_nodes, 1))
    v0 = np.concatenate([X_init[1:N].ravel(), U_init.ravel()])
    n_xvar = (N - 1) * n_x

    def unpack(v):
        X = np.empty((n_nodes, n_x))
        X[0] = xT
        X[N] = x0
        X[1:N] = v[:n_xvar].reshape(N - 1, n_x)
        U = v[n_xvar:].reshape(n_nodes, n_u)
        return X, U

    def residual(X, U):
        F = np.empty_like(X)
        Js = np.empty((n_nodes, n_x, n_x))
        for j in range(n_nodes):
            F[j], Js[j] = dyn_fn(X[j])
        R = scale * (D @ X) - F - U @ B.T
        return R, Js

    def cost_and_grad_u(U):
        w = grid.quad_w
        c = 0.5 * T * float(np.sum(w * np.sum(U**2, axis=1)))
        g = T * w[:, None] * U
        return c, g

    n_var = n_xvar + n_nodes * n_u
    n_con = n_nodes * n_x
    hdiag = np.zeros(n_var)
    hdiag[n_xvar:] = np.repeat(T * grid.quad_w, n_u)

    def constraint_jacobian(Js):
        # rows: flattened residual (node, state); cols: interior states, controls
        J = np.zeros((n_con, n_var))
        DI = np.kron(scale * D[:, 1:N], np.eye(n_x))       # wrt interior states
        J[:, :n_xvar] = DI
        for j in range(1, N):
            r0 = j * n_x
            c0 = (j - 1) * n_x
            J[r0:r0 + n_x, c0:c0 + n_x] -= Js[j]
        for j in range(n_nodes):
            r0 = j * n_x
            c0 = n_xvar + j * n_u
            J[r0:r0 + n_x, c0:c0 + n_u] = -B
        return J

    def al_eval(v, lam, rho):
        X, U = unpack(v)
        R, Js = residual(X, U)
        c, gU = cost_and_grad_u(U)
        Lam = lam + rho * R
        val = c + float(np.sum(lam * R)) + 0.5 * rho * float(np.sum(R * R))
        gX = scale * (D.T @ Lam)
        gX -= np.einsum("kij,ki->kj", Js, Lam)
        g = np.concatenate([gX[1:N].ravel(), (gU - Lam @ B).ravel()])
        return val, g, R, Js

    lam = np.zeros((n_nodes, n_x))
    rho = cfg.rho0
    v = v0
    prev_viol = np.inf
    status = STATUS_MAX_ITER
    kkt = np.inf
    gtol = 0.5 * cfg.tol
    for outer in range(cfg.max_outer):
        # inner: damped Gauss-Newton on the augmented Lagrangian
        val, g, R, Js = al_eval(v, lam, rho)
        mu = 1e-8
        for _ in range(cfg.inner_maxiter):
            if np.abs(g).max() <= gtol:
                break
            J = constraint_jacobian(Js)
            H = rho * (J.T @ J)
            H[np.arange(n_var), np.arange(n_var)] += hdiag + mu
            try:
                step = np.linalg.solve(H, -g)
            except np.linalg.LinAlgError:
                mu = max(mu * 10.0, 1e-6)
                continue
            val_new, g_new, R_new, Js_new = al_eval(v + step, lam, rho)
            if np.isfinite(val_new) and val_new <= val + 1e-12 * abs(val):
                v = v + step
                val, g, R, Js = val_new, g_new, R_new, Js_new
                mu = max(mu / 3.0, 1e-12)
            else:
                mu *= 10.0
                if mu > 1e10:
                    break
        viol = np.abs(R).max()
        grad_norm = np.abs(g).max()
        kkt = max(viol, grad_norm)
        if viol <= cfg.tol and grad_norm <= 10 * cfg.tol:
            status = STATUS_OK
            break
        lam = lam + rho * R
        if viol > 0.25 * prev_viol:
            rho = min(rho * 10.0, 1e9)
        prev_viol = viol

    X, U = unpack(v)
    cost, _ = cost_and_grad_u(U)
    times = (grid.nodes + 1.0) * (T / 2.0)
    order = np.argsort(times)
    return NominalTrajectory(times=times[order], x_nodes=X[order], u_nodes=U[order],
                             cost=cost, kkt_residual=float(kkt), status=status, T=T)


def solve_trajopt(model: DynamicsModel, x0, xT, T: float, grid: ChebGrid,
                  nlp_cfg: NlpConfig | None = None) -> NominalTrajectory:
    """Minimum-energy transfer for a learned model."""

    def dyn_fn(x):
        fhat, _, _, J = eval_dynamics(model, x)
        return fhat, J

    return solve_transcribed(dyn_fn, model.b_consts, x0, xT, T, grid, nlp_cfg)
