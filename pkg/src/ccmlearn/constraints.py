"""Contraction LMI assembly, violation scoring, and the exchange-set update.

The stability matrix at a point x is the top-left (n-m) x (n-m) block of

    -dW/dt|_fhat + J W + W J' + 2 lambda_eff W,

where J is the Jacobian of the learned drift and dW/dt|_fhat is the entrywise
directional derivative of W along fhat.  With the input matrix restricted to
its sparse normal form, projecting with the constant annihilator [I; 0] is
exactly this block extraction, and the result does not depend on the input
matrix at all.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .core import N_CONTROLS, N_STATES
from .models import DynamicsModel, MetricModel, eval_dynamics, metric_value_and_gradient

N_FREE = N_STATES - N_CONTROLS

# sampling box for extra constraint points: positions, roll, velocities, rate
STATE_BOX_LO = np.array([-5.0, -5.0, -np.pi / 3, -2.0, -2.0, -1.0])
STATE_BOX_HI = np.array([5.0, 5.0, np.pi / 3, 2.0, 2.0, 1.0])


@dataclass
class ConstraintSet:
    """Full pool of constraint points and the currently active subset."""

    all_points: np.ndarray
    active_idx: np.ndarray

    def __post_init__(self):
        self.all_points = np.asarray(self.all_points, dtype=float)
        self.active_idx = np.asarray(self.active_idx, dtype=int)
        if self.active_idx.size and (self.active_idx.min() < 0
                                     or self.active_idx.max() >= len(self.all_points)):
            raise ValueError("active_idx out of range")

    @property
    def n_points(self) -> int:
        return len(self.all_points)


@dataclass
class ConstraintPointReport:
    """Per-point eigenvalue diagnostics and the violation score."""

    idx: int
    F_max_eig: float
    W_min_eig: float
    nu: float


def build_constraint_set(train_states, n_total: int, rng) -> ConstraintSet:
    """Training states plus uniform random samples over the state box."""
    train_states = np.asarray(train_states, dtype=float).reshape(-1, N_STATES)
    n_extra = max(n_total - len(train_states), 0)
    extra = rng.uniform(STATE_BOX_LO, STATE_BOX_HI, size=(n_extra, N_STATES))
    pts = np.vstack([train_states, extra]) if n_extra else train_states.copy()
    return ConstraintSet(all_points=pts, active_idx=np.zeros(0, dtype=int))


def assemble_F(dynamics: DynamicsModel, metric: MetricModel, lambda_eff: float, x) -> np.ndarray:
    """Stability matrix block at x for the effective rate; symmetric 4x4."""
    fhat, _, _, J = eval_dynamics(dynamics, x)
    W, Gw = metric_value_and_gradient(metric, x)
    dW_f = Gw @ fhat
    JW = J @ W
    F = -dW_f + JW + JW.T + 2.0 * lambda_eff * W
    F = F[:N_FREE, :N_FREE]
    return 0.5 * (F + F.T)


def violation(dynamics: DynamicsModel, metric: MetricModel, lambda_eff: float,
              x, delta_wlow: float, eps_wlow: float, idx: int = -1) -> ConstraintPointReport:
    """Max of the stability-LMI and metric-lower-bound eigenvalue violations."""
    F = assemble_F(dynamics, metric, lambda_eff, x)
    F_max = float(np.linalg.eigvalsh(F)[-1])
    W, _ = metric_value_and_gradient(metric, x)
    W_min = float(np.linalg.eigvalsh(0.5 * (W + W.T))[0])
    nu = max(F_max, (delta_wlow + eps_wlow) - W_min)
    return ConstraintPointReport(idx=idx, F_max_eig=F_max, W_min_eig=W_min, nu=nu)


def update_constraint_set(cs: ConstraintSet, reports, delta_discard: float,
                          K_max_add: int) -> ConstraintSet:
    """Exchange step: keep near-active points, add the worst violators.

    Kept: active points with nu > -delta_discard.  Added: up to K_max_add
    inactive points with nu > 0, worst first, ties broken by lower index.
    """
    nu = np.empty(cs.n_points)
    nu.fill(np.nan)
    for r in reports:
        nu[r.idx] = r.nu
    if np.any(np.isnan(nu)):
        raise ValueError("reports must cover every point in the set")

    active_mask = np.zeros(cs.n_points, dtype=bool)
    active_mask[cs.active_idx] = True
    keep = [i for i in cs.active_idx if nu[i] > -delta_discard]
    candidates = [i for i in range(cs.n_points) if not active_mask[i] and nu[i] > 0]
    candidates.sort(key=lambda i: (-nu[i], i))
    new_active = np.array(sorted(set(keep) | set(candidates[:K_max_add])), dtype=int)
    return ConstraintSet(all_points=cs.all_points, active_idx=new_active)


def dump_reports(reports, path) -> None:
    """Write per-point diagnostics as CSV (idx, F_max_eig, W_min_eig, nu)."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["idx", "F_max_eig", "W_min_eig", "nu"])
        for r in reports:
            writer.writerow([r.idx, repr(r.F_max_eig), repr(r.W_min_eig), repr(r.nu)])
