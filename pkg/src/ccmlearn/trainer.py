"""Ridge baselines and the alternating certificate-regularized fit.

The training loop alternates two convex programs over a finite, adaptively
exchanged set of constraint points: a dynamics step (regression objective,
metric fixed) and a metric step (condition-number surrogate objective,
dynamics fixed), both subject to the pointwise stability LMIs with capped
slack.  Convergence is declared when parameter progress stalls or every
constraint point satisfies its LMIs within tolerance.
"""

from __future__ import annotations

import time
import warnings
from dataclasses import dataclass, field

import numpy as np

from .conic import ConicProblem, EntrySlicedBlock, PsdBlock, solve_conic
from .constraints import (ConstraintPointReport, ConstraintSet,
                          update_constraint_set)
from .core import N_CONTROLS, N_STATES, Dataset, TrainerConfig, rng_stream
from .errors import SolverFailure
from .features import RFFBasis, eval_features, sample_rff
from .models import (ENTRIES, HAT_ENTRIES, CertifiedModel, DynamicsModel,
                     MetricModel, metric_features)

N_FREE = N_STATES - N_CONTROLS
SYM4 = []
for _p in range(N_FREE):
    for _q in range(_p, N_FREE):
        E = np.zeros((N_FREE, N_FREE))
        E[_p, _q] = E[_q, _p] = 1.0
        SYM4.append(E)
SYM4 = np.stack(SYM4)
SYM4_PAIRS = [(p, q) for p in range(N_FREE) for q in range(p, N_FREE)]

SYM6 = []
for (_i, _j) in ENTRIES:
    E = np.zeros((N_STATES, N_STATES))
    E[_i, _j] = E[_j, _i] = 1.0
    SYM6.append(E)
SYM6 = np.stack(SYM6)

ENTRY_INDEX = {e: k for k, e in enumerate(ENTRIES)}
HAT_SET = set(HAT_ENTRIES)


def entry_of(i: int, j: int) -> int:
    return ENTRY_INDEX[(i, j) if i <= j else (j, i)]


@dataclass(frozen=True)
class FeatureConfig:
    """Feature-map sizes: drift features and metric-entry features."""

    s_f: int = 48
    sigma_f: float = 6.0
    s_w: int = 36
    sigma_w: float = 15.0


def make_bases(seed: int, fc: FeatureConfig = FeatureConfig()):
    """Draw the three frequency bases from per-purpose streams."""
    f_basis = sample_rff(rng_stream(seed, "features_f"), fc.sigma_f, fc.s_f,
                         active_dims=range(N_STATES))
    w_basis = sample_rff(rng_stream(seed, "features_w"), fc.sigma_w, fc.s_w,
                         active_dims=range(N_STATES))
    w_hat_basis = sample_rff(rng_stream(seed, "features_w_hat"), fc.sigma_w, fc.s_w,
                             active_dims=range(N_FREE))
    return f_basis, w_basis, w_hat_basis


# ---------------------------------------------------------------------------
# Ridge baselines
# ---------------------------------------------------------------------------

def _ridge_solve(Phi, U, Y, mu_f: float, mu_b: float):
    """Per-output-dimension normal equations; returns (alpha (d_f, n), b (n, m))."""
    d_f = Phi.shape[1]
    alpha = np.zeros((d_f, N_STATES))
    b_consts = np.zeros((N_STATES, N_CONTROLS))
    for d in range(N_STATES):
        if d < N_FREE:
            D = Phi
            reg = np.full(d_f, mu_f)
        else:
            D = np.hstack([Phi, U])
            reg = np.concatenate([np.full(d_f, mu_f), np.full(N_CONTROLS, mu_b)])
        A = D.T @ D + np.diag(reg)
        try:
            L = np.linalg.cholesky(A)
        except np.linalg.LinAlgError:
            raise SolverFailure(
                "singular normal matrix in ridge fit; regularize with mu > 0 "
                "(the input-matrix features are rank deficient)") from None
        c = np.linalg.solve(L.T, np.linalg.solve(L, D.T @ Y[:, d]))
        alpha[:, d] = c[:d_f]
        if d >= N_FREE:
            b_consts[d, :] = c[d_f:]
    return alpha, b_consts


def ridge_fit(data: Dataset, mu_f: float, mu_b: float, f_basis: RFFBasis) -> DynamicsModel:
    """Closed-form (regularized) least squares for the dynamics parameters.

    mu_f = 0 reproduces the plain least-squares baseline; a singular normal
    matrix in that case raises with advice to regularize.
    """
    if len(data) == 0:
        raise ValueError("dataset is empty")
    X, U, Y = data.states(), data.controls(), data.xdots()
    Phi = np.array([eval_features(f_basis, x).phi for x in X])
    alpha, b_consts = _ridge_solve(Phi, U, Y, mu_f, mu_b)
    return DynamicsModel(f_basis, alpha.reshape(-1), b_consts)


def training_loss(model: DynamicsModel, data: Dataset, mu_f: float, mu_b: float):
    """(mean squared residual, full regularized objective) on the dataset."""
    X, U, Y = data.states(), data.controls(), data.xdots()
    Phi = np.array([eval_features(model.f_basis, x).phi for x in X])
    pred = Phi @ model.alpha_mat + U @ model.b_consts.T
    sse = float(np.sum((pred - Y) ** 2))
    total = sse + mu_f * float(model.alpha @ model.alpha) \
        + mu_b * float(np.sum(model.b_consts ** 2))
    return sse / len(data), total


# ---------------------------------------------------------------------------
# Cached per-point features
# ---------------------------------------------------------------------------

class _PointCache:
    """Feature evaluations at every constraint point, fixed across iterations."""

    def __init__(self, points, f_basis, w_basis, w_hat_basis):
        n = len(points)
        self.points = points
        self.phi_f = np.empty((n, f_basis.dim))
        self.dphi_f = np.empty((n, f_basis.dim, N_STATES))
        self.phi_wf = np.empty((n, w_basis.dim + 1))
        self.dphi_wf = np.empty((n, w_basis.dim + 1, N_STATES))
        self.phi_wh = np.empty((n, w_hat_basis.dim + 1))
        self.dphi_wh = np.empty((n, w_hat_basis.dim + 1, N_STATES))
        probe = MetricModel.identity(w_basis, w_hat_basis)
        for k, x in enumerate(points):
            fe = eval_features(f_basis, x)
            self.phi_f[k] = fe.phi
            self.dphi_f[k] = fe.dphi
            pf, dpf, ph, dph = metric_features(probe, x)
            self.phi_wf[k] = pf
            self.dphi_wf[k] = dpf
            self.phi_wh[k] = ph
            self.dphi_wh[k] = dph

    def entry_phi(self, k: int, e: int) -> np.ndarray:
        return self.phi_wh[k] if ENTRIES[e] in HAT_SET else self.phi_wf[k]


def _theta_stack(metric: MetricModel) -> np.ndarray:
    """Metric coefficients as a (21, width) array in global entry order."""
    width = metric.w_basis.dim + 1
    if metric.w_hat_basis.dim + 1 != width:
        raise ValueError("trainer requires equal feature widths for both entry groups")
    out = np.empty((len(ENTRIES), width))
    hat_rows = {e: r for r, e in enumerate(HAT_ENTRIES)}
    full_rows = {e: r for r, e in enumerate([en for en in ENTRIES if en not in HAT_SET])}
    for k, e in enumerate(ENTRIES):
        out[k] = metric.theta_hat[hat_rows[e]] if e in HAT_SET else metric.theta[full_rows[e]]
    return out


def _metric_from_stack(stack, w_basis, w_hat_basis, w_low, w_high) -> MetricModel:
    theta_hat = np.stack([stack[ENTRY_INDEX[e]] for e in HAT_ENTRIES])
    theta = np.stack([stack[ENTRY_INDEX[e]] for e in ENTRIES if e not in HAT_SET])
    return MetricModel(w_basis, w_hat_basis, theta, theta_hat, float(w_low), float(w_high))


def _metric_at(cache: _PointCache, stack: np.ndarray, k: int):
    """(W, Gw) at cached point k from the coefficient stack."""
    W = np.zeros((N_STATES, N_STATES))
    Gw = np.zeros((N_STATES, N_STATES, N_STATES))
    for e, (i, j) in enumerate(ENTRIES):
        if (i, j) in HAT_SET:
            W[i, j] = W[j, i] = stack[e] @ cache.phi_wh[k]
            Gw[i, j] = Gw[j, i] = stack[e] @ cache.dphi_wh[k]
        else:
            W[i, j] = W[j, i] = stack[e] @ cache.phi_wf[k]
            Gw[i, j] = Gw[j, i] = stack[e] @ cache.dphi_wf[k]
    return W, Gw


def _dynamics_at(cache: _PointCache, alpha_mat: np.ndarray, k: int):
    fhat = alpha_mat.T @ cache.phi_f[k]
    J = alpha_mat.T @ cache.dphi_f[k]
    return fhat, J


def _F_at(cache, alpha_mat, stack, lam_eff, k):
    fhat, J = _dynamics_at(cache, alpha_mat, k)
    W, Gw = _metric_at(cache, stack, k)
    JW = J @ W
    F = -(Gw @ fhat) + JW + JW.T + 2.0 * lam_eff * W
    F = F[:N_FREE, :N_FREE]
    return 0.5 * (F + F.T), W


def violation_pass(cache: _PointCache, alpha_mat, stack, lam_eff, delta_wlow, eps_wlow):
    """Reports for every cached point plus the worst stability eigenvalue."""
    reports = []
    s_bar = -np.inf
    for k in range(len(cache.points)):
        F, W = _F_at(cache, alpha_mat, stack, lam_eff, k)
        F_max = float(np.linalg.eigvalsh(F)[-1])
        W_min = float(np.linalg.eigvalsh(W)[0])
        nu = max(F_max, (delta_wlow + eps_wlow) - W_min)
        reports.append(ConstraintPointReport(idx=k, F_max_eig=F_max, W_min_eig=W_min, nu=nu))
        s_bar = max(s_bar, F_max)
    return reports, s_bar


# ---------------------------------------------------------------------------
# Training state
# ---------------------------------------------------------------------------

@dataclass
class IterationRecord:
    iteration: int
    J_d: float
    J_m: float
    n_active: int
    max_nu: float
    s_bar: float
    delta: float
    wall_time: float


@dataclass
class TrainingState:
    """Mutable loop state: current parameters, constraint set, diagnostics."""

    dynamics: DynamicsModel
    metric: MetricModel
    lam: float
    s_bar: float
    cs: ConstraintSet
    iteration: int
    history: list = field(default_factory=list)
    cache: _PointCache | None = None


def init_state(data: Dataset, cs: ConstraintSet, cfg: TrainerConfig, bases) -> TrainingState:
    """Identity metric, zero drift coefficients, identity input block."""
    f_basis, w_basis, w_hat_basis = bases
    b0 = np.zeros((N_STATES, N_CONTROLS))
    b0[N_FREE:, :] = np.eye(N_CONTROLS)
    dynamics = DynamicsModel(f_basis, np.zeros(f_basis.dim * N_STATES), b0)
    metric = MetricModel.identity(w_basis, w_hat_basis)
    cache = _PointCache(cs.all_points, f_basis, w_basis, w_hat_basis)
    return TrainingState(dynamics=dynamics, metric=metric, lam=cfg.delta_lambda,
                         s_bar=np.inf, cs=cs, iteration=0, cache=cache)


# ---------------------------------------------------------------------------
# Dynamics sub-problem
# ---------------------------------------------------------------------------

def dynamics_subproblem(data: Dataset, ts: TrainingState, cfg: TrainerConfig,
                        alpha_ref=None, b_ref=None, conic_tol: float = 1e-7):
    """Regression step with the metric held fixed; returns new parameters.

    Decision variables: drift coefficients, the four input-matrix entries,
    the rate, and one slack per active constraint point.  When refs are given
    the quadratic regularization is applied to parameter deltas.
    """
    f_basis = ts.dynamics.f_basis
    d_f = f_basis.dim * N_STATES
    active = ts.cs.active_idx
    K = len(active)
    n = d_f + 4 + 1 + K
    i_b = d_f
    i_lam = d_f + 4
    i_s0 = d_f + 5

    X, U, Y = data.states(), data.controls(), data.xdots()
    Phi = np.array([eval_features(f_basis, x).phi for x in X])
    nphi = Phi.shape[1]

    alpha_ref = np.zeros(d_f) if alpha_ref is None else alpha_ref
    b_ref = np.zeros((N_STATES, N_CONTROLS)) if b_ref is None else b_ref

    P = np.zeros((n, n))
    q = np.zeros(n)
    const = 0.0
    PtP = Phi.T @ Phi
    PtU = Phi.T @ U
    UtU = U.T @ U
    for d in range(N_STATES):
        idx = d + N_STATES * np.arange(nphi)
        P[np.ix_(idx, idx)] += 2.0 * PtP
        q[idx] -= 2.0 * Phi.T @ Y[:, d]
        const += float(Y[:, d] @ Y[:, d])
        if d >= N_FREE:
            bcols = i_b + 2 * (d - N_FREE) + np.arange(2)
            P[np.ix_(idx, bcols)] += 2.0 * PtU
            P[np.ix_(bcols, idx)] += 2.0 * PtU.T
            P[np.ix_(bcols, bcols)] += 2.0 * UtU
            q[bcols] -= 2.0 * U.T @ Y[:, d]
    # regularization (on deltas when refs are nonzero)
    P[np.arange(d_f), np.arange(d_f)] += 2.0 * cfg.mu_f
    q[:d_f] -= 2.0 * cfg.mu_f * alpha_ref
    const += cfg.mu_f * float(alpha_ref @ alpha_ref)
    b_ref_flat = b_ref[N_FREE:, :].reshape(-1)
    P[np.arange(i_b, i_b + 4), np.arange(i_b, i_b + 4)] += 2.0 * cfg.mu_b
    q[i_b:i_b + 4] -= 2.0 * cfg.mu_b * b_ref_flat
    const += cfg.mu_b * float(b_ref_flat @ b_ref_flat)
    q[i_s0:] += cfg.mu_s

    # linear constraints: lam >= delta_lambda, 0 <= s <= s_bar_eff
    s_cap = max(ts.s_bar, 0.0)
    rows, rhs = [], []
    r = np.zeros(n)
    r[i_lam] = -1.0
    rows.append(r)
    rhs.append(-cfg.delta_lambda)
    for k in range(K):
        r = np.zeros(n)
        r[i_s0 + k] = -1.0
        rows.append(r)
        rhs.append(0.0)
        if np.isfinite(s_cap):
            r = np.zeros(n)
            r[i_s0 + k] = 1.0
            rows.append(r)
            rhs.append(s_cap)
    G = np.vstack(rows)
    h = np.array(rhs)

    stack = _theta_stack(ts.metric)
    blocks = []
    var_idx = np.concatenate([np.arange(d_f), [i_lam]])
    for k_slot, k in enumerate(active):
        W, Gw = _metric_at(ts.cache, stack, k)
        DW = ts.cache.dphi_f[k] @ W                      # (d_phi, n)
        phi = ts.cache.phi_f[k]
        CF = np.einsum("k,pqd->kdpq", -phi, Gw[:N_FREE, :N_FREE, :])
        for p in range(N_FREE):
            CF[:, p, p, :] += DW[:, :N_FREE]
            CF[:, p, :, p] += DW[:, :N_FREE]
        coef = np.zeros((len(SYM4_PAIRS), d_f + 1))
        offset = np.zeros(len(SYM4_PAIRS))
        for row, (p, qq) in enumerate(SYM4_PAIRS):
            coef[row, :d_f] = -CF[:, :, p, qq].reshape(-1)
            coef[row, d_f] = -2.0 * W[p, qq]
            offset[row] = -2.0 * cfg.eps_lambda * W[p, qq]
        # slack column: + s_k on the diagonal
        coef_full = np.zeros((len(SYM4_PAIRS), d_f + 2))
        coef_full[:, :d_f + 1] = coef
        for row, (p, qq) in enumerate(SYM4_PAIRS):
            if p == qq:
                coef_full[row, d_f + 1] = 1.0
        blocks.append(PsdBlock(var_idx=np.concatenate([var_idx, [i_s0 + k_slot]]),
                               coef=coef_full, offset=offset, basis=SYM4))

    prob = ConicProblem(n_vars=n, P=P, q=q, obj_const=const, G=G, h=h, psd_blocks=blocks)
    sol = solve_conic(prob, tol=conic_tol)
    if sol.status == "infeasible":
        raise SolverFailure("dynamics sub-problem reported infeasible")
    alpha = sol.z[:d_f]
    b_consts = np.zeros((N_STATES, N_CONTROLS))
    b_consts[N_FREE:, :] = sol.z[i_b:i_b + 4].reshape(N_CONTROLS, N_CONTROLS)
    lam = float(max(sol.z[i_lam], cfg.delta_lambda))
    slacks = sol.z[i_s0:]
    return alpha, b_consts, lam, slacks, sol


# ---------------------------------------------------------------------------
# Metric sub-problem
# ---------------------------------------------------------------------------

def metric_subproblem(ts: TrainingState, cfg: TrainerConfig,
                      theta_ref=None, conic_tol: float = 1e-7):
    """Metric step with the dynamics and rate held fixed."""
    metric = ts.metric
    width = metric.w_basis.dim + 1
    n_theta = len(ENTRIES) * width
    active = ts.cs.active_idx
    K = len(active)
    i_wlow = n_theta
    i_whigh = n_theta + 1
    i_s0 = n_theta + 2
    n = n_theta + 2 + K

    theta_ref = np.zeros((len(ENTRIES), width)) if theta_ref is None else theta_ref

    P = np.zeros((n, n))
    P[np.arange(n_theta), np.arange(n_theta)] = 2.0 * cfg.mu_w
    q = np.zeros(n)
    q[:n_theta] = -2.0 * cfg.mu_w * theta_ref.reshape(-1)
    q[i_wlow] = -1.0
    q[i_whigh] = 1.0
    q[i_s0:] = 1.0 / cfg.mu_s
    const = cfg.mu_w * float(np.sum(theta_ref**2))

    s_cap = max(ts.s_bar, 0.0)
    rows, rhs = [], []
    r = np.zeros(n)
    r[i_wlow] = -1.0
    rows.append(r)
    rhs.append(-cfg.delta_wlow)
    r = np.zeros(n)
    r[i_wlow] = 1.0
    r[i_whigh] = -1.0
    rows.append(r)
    rhs.append(0.0)
    for k in range(K):
        r = np.zeros(n)
        r[i_s0 + k] = -1.0
        rows.append(r)
        rhs.append(0.0)
        if np.isfinite(s_cap):
            r = np.zeros(n)
            r[i_s0 + k] = 1.0
            rows.append(r)
            rhs.append(s_cap)
    G = np.vstack(rows)
    h = np.array(rhs)

    lam_eff = ts.lam + cfg.eps_lambda
    alpha_mat = ts.dynamics.alpha_mat
    W_BASIS = np.concatenate([SYM6, np.eye(N_STATES)[None]], axis=0)
    n_e = len(ENTRIES)
    hat_pair_entries = [entry_of(p, qq) for (p, qq) in SYM4_PAIRS]
    blocks = []
    for k_slot, k in enumerate(active):
        fhat, J = _dynamics_at(ts.cache, alpha_mat, k)
        # functionals: 21 entry values, then 10 directional derivatives
        value_vecs = np.stack([ts.cache.entry_phi(k, e) for e in range(n_e)])
        deriv_vec = ts.cache.dphi_wh[k] @ fhat
        vecs = np.vstack([value_vecs, np.tile(deriv_vec, (len(SYM4_PAIRS), 1))])
        slice_map = np.concatenate([np.arange(n_e), np.array(hat_pair_entries)])

        M_F = np.zeros((len(SYM4_PAIRS), len(slice_map) + 1))
        for row, (p, qq) in enumerate(SYM4_PAIRS):
            M_F[row, n_e + row] = 1.0                    # +d_pq  (from -(-d))
            for rr in range(N_STATES):
                M_F[row, entry_of(rr, qq)] -= J[p, rr]
                M_F[row, entry_of(p, rr)] -= J[qq, rr]
            M_F[row, entry_of(p, qq)] -= 2.0 * lam_eff
            if p == qq:
                M_F[row, len(slice_map)] = 1.0           # slack column
        blocks.append(EntrySlicedBlock(
            basis=SYM4, M=M_F, offset=np.zeros(len(SYM4_PAIRS)),
            slice_map=slice_map, vecs=vecs,
            extra_cols=np.array([i_s0 + k_slot]), n_entries=n_e))

        # (w_low + eps) I <= W(x)
        M_lo = np.zeros((n_e + 1, n_e + 1))
        M_lo[np.arange(n_e), np.arange(n_e)] = 1.0
        M_lo[n_e, n_e] = -1.0
        off_lo = np.zeros(n_e + 1)
        off_lo[n_e] = -cfg.eps_wlow
        blocks.append(EntrySlicedBlock(
            basis=W_BASIS, M=M_lo, offset=off_lo,
            slice_map=np.arange(n_e), vecs=value_vecs,
            extra_cols=np.array([i_wlow]), n_entries=n_e))

        # W(x) <= w_high I
        M_hi = np.zeros((n_e + 1, n_e + 1))
        M_hi[np.arange(n_e), np.arange(n_e)] = -1.0
        M_hi[n_e, n_e] = 1.0
        blocks.append(EntrySlicedBlock(
            basis=W_BASIS, M=M_hi, offset=np.zeros(n_e + 1),
            slice_map=np.arange(n_e), vecs=value_vecs,
            extra_cols=np.array([i_whigh]), n_entries=n_e))

    prob = ConicProblem(n_vars=n, P=P, q=q, obj_const=const, G=G, h=h, psd_blocks=blocks)
    sol = solve_conic(prob, tol=conic_tol)
    if sol.status == "infeasible":
        raise SolverFailure("metric sub-problem reported infeasible")
    stack = sol.z[:n_theta].reshape(len(ENTRIES), width)
    w_low = float(sol.z[i_wlow])
    w_high = float(max(sol.z[i_whigh], w_low))
    slacks = sol.z[i_s0:]
    return stack, w_low, w_high, slacks, sol


# ---------------------------------------------------------------------------
# The full alternating loop
# ---------------------------------------------------------------------------

def sndl_fit(data: Dataset, cs: ConstraintSet, cfg: TrainerConfig, bases=None,
             conic_tol: float = 1e-7, verbose: bool = False):
    """Alternating certified fit; returns (CertifiedModel, history).

    ``cs`` must contain all training states among its points.  The initial
    active subset is a seeded random sample; each iteration solves the
    dynamics step, the metric step, re-scores every constraint point, and
    exchanges the active set.
    """
    if len(data) == 0:
        raise ValueError("dataset is empty")
    if bases is None:
        bases = make_bases(cfg.seed)
    ts = init_state(data, cs, cfg, bases)
    f_basis, w_basis, w_hat_basis = bases

    rng = rng_stream(cfg.seed, "rand_sample")
    n_init = min(cfg.Nc0, cs.n_points)
    active0 = np.sort(rng.choice(cs.n_points, size=n_init, replace=False))
    ts.cs = ConstraintSet(cs.all_points, active0)

    alpha_prev = ts.dynamics.alpha.copy()
    b_prev = ts.dynamics.b_consts.copy()
    stack_prev = _theta_stack(ts.metric)
    lam_prev = ts.lam

    for k in range(cfg.N_max):
        t0 = time.perf_counter()
        refs = (None, None, None) if k == 0 else (alpha_prev, b_prev, stack_prev)
        alpha, b_consts, lam, s_d, sol_d = dynamics_subproblem(
            data, ts, cfg, alpha_ref=refs[0], b_ref=refs[1], conic_tol=conic_tol)
        try:
            ts.dynamics = DynamicsModel(f_basis, alpha, b_consts)
        except ValueError as exc:
            raise SolverFailure(f"dynamics step produced an invalid model: {exc}") from None
        sv = np.linalg.svd(b_consts[N_FREE:, :], compute_uv=False)
        if sv[-1] < 1e-4:
            warnings.warn(f"input-matrix lower block near singular (min sv {sv[-1]:.2e})")
        ts.lam = lam

        stack, w_low, w_high, s_m, sol_m = metric_subproblem(
            ts, cfg, theta_ref=refs[2], conic_tol=conic_tol)
        ts.metric = _metric_from_stack(stack, w_basis, w_hat_basis, w_low, w_high)

        reports, s_bar = violation_pass(ts.cache, ts.dynamics.alpha_mat, stack,
                                        ts.lam + cfg.eps_lambda,
                                        cfg.delta_wlow, cfg.eps_wlow)
        max_nu = max(r.nu for r in reports)
        ts.cs = update_constraint_set(ts.cs, reports, cfg.delta_discard, cfg.K_max_add)
        ts.s_bar = s_bar

        delta = max(np.abs(alpha - alpha_prev).max(),
                    np.abs(b_consts - b_prev).max(),
                    np.abs(stack - stack_prev).max(),
                    abs(lam - lam_prev))
        wall = time.perf_counter() - t0
        rec = IterationRecord(iteration=k, J_d=sol_d.objective, J_m=sol_m.objective,
                              n_active=len(ts.cs.active_idx), max_nu=max_nu,
                              s_bar=s_bar, delta=delta, wall_time=wall)
        ts.history.append(rec)
        ts.iteration = k + 1
        if verbose:
            print(f"iter {k:2d}  J_d={rec.J_d:10.4f}  J_m={rec.J_m:9.4f}  "
                  f"active={rec.n_active:4d}  max_nu={rec.max_nu:8.4f}  "
                  f"delta={rec.delta:8.4f}  {wall:6.2f}s")
        if wall > cfg.iter_time_limit:
            raise SolverFailure(
                f"iteration {k} exceeded the time limit ({wall:.1f}s > "
                f"{cfg.iter_time_limit:.0f}s); history: {ts.history}")

        alpha_prev, b_prev = alpha.copy(), b_consts.copy()
        stack_prev, lam_prev = stack.copy(), lam

        if delta < cfg.eps_converge or max_nu < cfg.eps_converge:
            break

    model = CertifiedModel(dynamics=ts.dynamics, metric=ts.metric, lam=ts.lam)
    return model, ts.history


def dump_history(history, path) -> None:
    import csv
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "J_d", "J_m", "n_active", "max_nu",
                         "s_bar", "delta", "wall_time"])
        for r in history:
            writer.writerow([r.iteration, repr(r.J_d), repr(r.J_m), r.n_active,
                             repr(r.max_nu), repr(r.s_bar), repr(r.delta), repr(r.wall_time)])
