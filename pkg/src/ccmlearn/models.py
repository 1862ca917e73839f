"""Parameterized dynamics and dual-metric models, with all derivative quantities.

Dynamics: fhat(x) has one coefficient block per output dimension over a shared
feature vector (alpha is stored flat with layout alpha[k*n + d] for feature k,
output d).  The input matrix is constant with its first n-m rows zero.

Metric: W(x) is symmetric; each upper-triangular entry has its own coefficient
vector over scalar features.  Entries of the top-left (n-m) block use features
of the first n-m coordinates only, so that block cannot depend on the directly
actuated velocity coordinates.  Every entry's feature vector is augmented with
a constant 1 so constant metrics (e.g. the identity) are exactly representable.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import N_CONTROLS, N_STATES
from .errors import CertificateViolation
from .features import RFFBasis, eval_features

# Upper-triangular entry order for W; the first BLOCK_ENTRY_COUNT use the
# reduced-coordinate features.
ENTRIES = [(i, j) for i in range(N_STATES) for j in range(i, N_STATES)]
HAT_ENTRIES = [(i, j) for (i, j) in ENTRIES if j < N_STATES - N_CONTROLS]
FULL_ENTRIES = [(i, j) for (i, j) in ENTRIES if j >= N_STATES - N_CONTROLS]


@dataclass(frozen=True)
class DynamicsModel:
    """Feature basis plus flat coefficient vector and constant input matrix."""

    f_basis: RFFBasis
    alpha: np.ndarray
    b_consts: np.ndarray

    def __post_init__(self):
        alpha = np.asarray(self.alpha, dtype=float)
        b = np.asarray(self.b_consts, dtype=float)
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "b_consts", b)
        if alpha.shape != (self.f_basis.dim * N_STATES,):
            raise ValueError(f"alpha must have length {self.f_basis.dim * N_STATES}")
        if b.shape != (N_STATES, N_CONTROLS):
            raise ValueError("b_consts must be 6 x 2")
        if np.any(b[: N_STATES - N_CONTROLS, :] != 0.0):
            raise ValueError("b_consts rows 1..n-m must be exactly zero")
        sv = np.linalg.svd(b[N_STATES - N_CONTROLS:, :], compute_uv=False)
        if sv[-1] < 1e-8:
            raise ValueError(f"lower 2x2 block of b_consts is singular (min sv {sv[-1]:.3e})")

    @property
    def alpha_mat(self) -> np.ndarray:
        """alpha reshaped to (feature dim, n)."""
        return self.alpha.reshape(self.f_basis.dim, N_STATES)


def eval_dynamics(d: DynamicsModel, x, u=None):
    """Return (fhat, Bhat, xdot_hat, J) at a state/control pair."""
    fe = eval_features(d.f_basis, x)
    A = d.alpha_mat
    fhat = A.T @ fe.phi
    J = A.T @ fe.dphi
    B = d.b_consts
    if u is None:
        xdot = fhat.copy()
    else:
        xdot = fhat + B @ np.asarray(u, dtype=float)
    return fhat, B, xdot, J


@dataclass(frozen=True)
class MetricModel:
    """Dual metric W(x): per-entry coefficients plus uniform bounds.

    ``theta_hat`` holds the top-left-block entries (reduced features),
    ``theta`` the remaining entries (full-state features); both are stored in
    the global upper-triangular order of ENTRIES.  Coefficient vectors have
    length 2s+1; the trailing coefficient multiplies the constant feature.
    """

    w_basis: RFFBasis
    w_hat_basis: RFFBasis
    theta: np.ndarray
    theta_hat: np.ndarray
    w_low: float
    w_high: float

    def __post_init__(self):
        theta = np.asarray(self.theta, dtype=float)
        theta_hat = np.asarray(self.theta_hat, dtype=float)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "theta_hat", theta_hat)
        if theta.shape != (len(FULL_ENTRIES), self.w_basis.dim + 1):
            raise ValueError(f"theta must be {len(FULL_ENTRIES)} x {self.w_basis.dim + 1}")
        if theta_hat.shape != (len(HAT_ENTRIES), self.w_hat_basis.dim + 1):
            raise ValueError(f"theta_hat must be {len(HAT_ENTRIES)} x {self.w_hat_basis.dim + 1}")
        if not (np.isfinite(self.w_low) and np.isfinite(self.w_high)):
            raise ValueError("w_low/w_high must be finite")
        if self.w_low > self.w_high:
            raise ValueError("w_low must not exceed w_high")

    @classmethod
    def identity(cls, w_basis: RFFBasis, w_hat_basis: RFFBasis) -> "MetricModel":
        """The constant metric W(x) = I (constant-feature coefficients only)."""
        theta = np.zeros((len(FULL_ENTRIES), w_basis.dim + 1))
        theta_hat = np.zeros((len(HAT_ENTRIES), w_hat_basis.dim + 1))
        for row, (i, j) in enumerate(FULL_ENTRIES):
            if i == j:
                theta[row, -1] = 1.0
        for row, (i, j) in enumerate(HAT_ENTRIES):
            if i == j:
                theta_hat[row, -1] = 1.0
        return cls(w_basis, w_hat_basis, theta, theta_hat, w_low=1.0, w_high=1.0)


def metric_features(mm: MetricModel, x):
    """Augmented feature vectors/Jacobians for both entry groups.

    Returns (phi_full, dphi_full, phi_hat, dphi_hat) where phi vectors have
    the constant 1 appended (its gradient row is zero).
    """
    fe_full = eval_features(mm.w_basis, x)
    fe_hat = eval_features(mm.w_hat_basis, x)
    phi_full = np.append(fe_full.phi, 1.0)
    phi_hat = np.append(fe_hat.phi, 1.0)
    dphi_full = np.vstack([fe_full.dphi, np.zeros((1, fe_full.dphi.shape[1]))])
    dphi_hat = np.vstack([fe_hat.dphi, np.zeros((1, fe_hat.dphi.shape[1]))])
    return phi_full, dphi_full, phi_hat, dphi_hat


def _entry_values(mm: MetricModel, phi_full, phi_hat):
    w_full = mm.theta @ phi_full
    w_hat = mm.theta_hat @ phi_hat
    W = np.zeros((N_STATES, N_STATES))
    for val, (i, j) in zip(w_hat, HAT_ENTRIES):
        W[i, j] = W[j, i] = val
    for val, (i, j) in zip(w_full, FULL_ENTRIES):
        W[i, j] = W[j, i] = val
    return W


def eval_metric(mm: MetricModel, x, v):
    """Dual metric W(x) and its directional derivative along v."""
    phi_full, dphi_full, phi_hat, dphi_hat = metric_features(mm, x)
    v = np.asarray(v, dtype=float)
    W = _entry_values(mm, phi_full, phi_hat)
    dW = np.zeros((N_STATES, N_STATES))
    g_full = mm.theta @ (dphi_full @ v)
    g_hat = mm.theta_hat @ (dphi_hat @ v)
    for val, (i, j) in zip(g_hat, HAT_ENTRIES):
        dW[i, j] = dW[j, i] = val
    for val, (i, j) in zip(g_full, FULL_ENTRIES):
        dW[i, j] = dW[j, i] = val
    return W, dW


def metric_value_and_gradient(mm: MetricModel, x):
    """W(x) together with the full entry-wise gradient tensor (n, n, n).

    Gw[i, j, :] is the gradient of entry (i, j); used by the trainer and the
    geodesic solver.
    """
    phi_full, dphi_full, phi_hat, dphi_hat = metric_features(mm, x)
    W = _entry_values(mm, phi_full, phi_hat)
    Gw = np.zeros((N_STATES, N_STATES, N_STATES))
    g_full = mm.theta @ dphi_full
    g_hat = mm.theta_hat @ dphi_hat
    for row, (i, j) in zip(g_hat, HAT_ENTRIES):
        Gw[i, j, :] = Gw[j, i, :] = row
    for row, (i, j) in zip(g_full, FULL_ENTRIES):
        Gw[i, j, :] = Gw[j, i, :] = row
    return W, Gw


def metric_inverse(mm: MetricModel, x) -> np.ndarray:
    """M(x) = W(x)^-1, symmetrized; raises if W is not positive definite."""
    W, _ = eval_metric(mm, x, np.zeros(N_STATES))
    eigs = np.linalg.eigvalsh(W)
    if eigs[0] <= 0:
        raise CertificateViolation(
            f"dual metric not positive definite (min eigenvalue {eigs[0]:.3e})",
            min_eig=float(eigs[0]))
    M = np.linalg.inv(W)
    return 0.5 * (M + M.T)


@dataclass(frozen=True)
class CertifiedModel:
    """Dynamics/metric pair with the certified contraction rate."""

    dynamics: DynamicsModel
    metric: MetricModel
    lam: float

    def __post_init__(self):
        if not np.isfinite(self.lam) or self.lam <= 0:
            raise ValueError("contraction rate must be positive and finite")
