"""Training-data manufacture: waypoint paths, minimum-snap splines, PD tracking.

The recipe: draw random waypoint paths in the plane, fit perturbed
minimum-snap splines through them, track each spline on the true plant with a
deliberately imperfect PD controller, and sub-sample the closed-loop
trajectories.  Derivative labels are exact evaluations of the true field, so
learning behavior is isolated from label noise (an optional config knob adds
Gaussian noise back in).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Dataset, TrainingTuple, rng_stream
from .errors import ConfigError
from .pvtol import PvtolParams, pvtol_dynamics, simulate

SPLINE_DEGREE = 7


@dataclass(frozen=True)
class PolySpline:
    """Per-axis piecewise degree-7 polynomials in normalized segment time.

    ``coeffs`` has shape (n_segments, 2, 8); segment k maps local
    tau = (t - t_k)/T_k in [0, 1] to position sum_i c[k, axis, i] tau^i.
    """

    coeffs: np.ndarray
    segment_times: np.ndarray

    @property
    def duration(self) -> float:
        return float(np.sum(self.segment_times))

    def evaluate(self, t: float, order: int = 0) -> np.ndarray:
        """Position (order 0) or time derivative of the given order at t."""
        t = float(np.clip(t, 0.0, self.duration))
        edges = np.concatenate([[0.0], np.cumsum(self.segment_times)])
        k = min(np.searchsorted(edges, t, side="right") - 1, len(self.segment_times) - 1)
        Tk = self.segment_times[k]
        tau = (t - edges[k]) / Tk
        powers = np.arange(SPLINE_DEGREE + 1, dtype=float)
        c = self.coeffs[k]
        for _ in range(order):
            c = c[:, 1:] * powers[1: c.shape[1]]
            powers = powers[: c.shape[1]]
        tau_pow = tau ** np.arange(c.shape[1])
        return (c @ tau_pow) / Tk**order


@dataclass
class DemoConfig:
    """Dataset-generation knobs: path counts, perturbations, PD gains."""

    n_waypoint_paths: int = 4
    splines_per_path: int = 3
    waypoint_box: float = 5.0
    waypoint_sigma: float = 0.25
    time_jitter_frac: float = 0.2
    kp_pos: float = 2.0
    kd_pos: float = 2.8
    kp_att: float = 12.0
    kd_att: float = 6.0
    ic_sigma: float = 0.1
    sample_dt: float = 0.1
    seed: int = 0
    n_waypoints_min: int = 3
    n_waypoints_max: int = 5
    avg_speed: float = 1.5
    label_noise_sigma: float = 0.0

    def __post_init__(self):
        if self.sample_dt <= 0:
            raise ConfigError("sample_dt must be > 0")
        for name in ("waypoint_sigma", "time_jitter_frac", "ic_sigma", "label_noise_sigma"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")

    @property
    def pd_gains(self):
        return (self.kp_pos, self.kd_pos, self.kp_att, self.kd_att)


def _snap_cost_matrix() -> np.ndarray:
    # Gram matrix of the 4th derivative of the monomial basis on [0, 1].
    Q = np.zeros((SPLINE_DEGREE + 1, SPLINE_DEGREE + 1))
    for i in range(4, SPLINE_DEGREE + 1):
        for j in range(4, SPLINE_DEGREE + 1):
            ai = i * (i - 1) * (i - 2) * (i - 3)
            aj = j * (j - 1) * (j - 2) * (j - 3)
            Q[i, j] = ai * aj / (i + j - 7)
    return Q


def _deriv_row(tau: float, order: int) -> np.ndarray:
    row = np.zeros(SPLINE_DEGREE + 1)
    for i in range(order, SPLINE_DEGREE + 1):
        fac = 1.0
        for r in range(order):
            fac *= i - r
        row[i] = fac * tau ** (i - order)
    return row


def min_snap_spline(waypoints, seg_times) -> PolySpline:
    """Fit rest-to-rest minimum-snap piecewise polynomials through waypoints.

    Minimizes the integrated squared 4th derivative subject to waypoint
    interpolation, continuity of derivatives through jerk at interior joints,
    and zero velocity/acceleration/jerk at both ends; one equality-constrained
    QP per axis, solved through its KKT system.
    """
    waypoints = np.asarray(waypoints, dtype=float)
    seg_times = np.asarray(seg_times, dtype=float)
    if waypoints.ndim != 2 or waypoints.shape[1] != 2 or len(waypoints) < 2:
        raise ValueError("need at least 2 planar waypoints")
    if len(seg_times) != len(waypoints) - 1 or np.any(seg_times <= 0):
        raise ValueError("segment times must be positive, one per segment")

    n_seg = len(seg_times)
    n_var = 8 * n_seg
    rows, rhs_x, rhs_z = [], [], []

    def add(row, bx, bz):
        rows.append(row)
        rhs_x.append(bx)
        rhs_z.append(bz)

    for k in range(n_seg):
        for tau, wp in ((0.0, waypoints[k]), (1.0, waypoints[k + 1])):
            row = np.zeros(n_var)
            row[8 * k: 8 * (k + 1)] = _deriv_row(tau, 0)
            add(row, wp[0], wp[1])
    for k in range(n_seg - 1):
        for order in (1, 2, 3):
            row = np.zeros(n_var)
            row[8 * k: 8 * (k + 1)] = _deriv_row(1.0, order) / seg_times[k] ** order
            row[8 * (k + 1): 8 * (k + 2)] = -_deriv_row(0.0, order) / seg_times[k + 1] ** order
            add(row, 0.0, 0.0)
    for order in (1, 2, 3):
        row = np.zeros(n_var)
        row[:8] = _deriv_row(0.0, order) / seg_times[0] ** order
        add(row, 0.0, 0.0)
        row = np.zeros(n_var)
        row[-8:] = _deriv_row(1.0, order) / seg_times[-1] ** order
        add(row, 0.0, 0.0)

    A = np.array(rows)
    Qseg = _snap_cost_matrix()
    H = np.zeros((n_var, n_var))
    for k in range(n_seg):
        H[8 * k: 8 * (k + 1), 8 * k: 8 * (k + 1)] = Qseg / seg_times[k] ** 7

    m = A.shape[0]
    KKT = np.block([[2.0 * H, A.T], [A, np.zeros((m, m))]])
    coeffs = np.zeros((n_seg, 2, 8))
    for axis, rhs in enumerate((rhs_x, rhs_z)):
        b = np.concatenate([np.zeros(n_var), rhs])
        try:
            sol = np.linalg.solve(KKT, b)
        except np.linalg.LinAlgError:
            raise ValueError("singular spline constraint system (duplicate times?)") from None
        if not np.all(np.isfinite(sol)):
            raise ValueError("singular spline constraint system (duplicate times?)")
        coeffs[:, axis, :] = sol[:n_var].reshape(n_seg, 8)
    return PolySpline(coeffs=coeffs, segment_times=seg_times)


def stationary_spline(point, duration: float = 1.0) -> PolySpline:
    """Zero-motion spline holding a fixed planar point."""
    coeffs = np.zeros((1, 2, 8))
    coeffs[0, :, 0] = np.asarray(point, dtype=float)
    return PolySpline(coeffs=coeffs, segment_times=np.array([duration]))


def pd_policy(spline: PolySpline, p: PvtolParams, gains):
    """Flatness-based PD tracking law for the spline reference.

    Outer loop: PD on planar position/velocity error gives a commanded
    acceleration; the flat map turns it into desired roll and total thrust.
    Inner loop: PD on (phi, phi_dot) gives differential thrust.
    """
    kp_pos, kd_pos, kp_att, kd_att = gains

    def policy(t, x):
        px, pz, phi, vx, vz, phidot = x
        s, c = np.sin(phi), np.cos(phi)
        pos = np.array([px, pz])
        vel = np.array([vx * c - vz * s, vx * s + vz * c])
        p_ref = spline.evaluate(t, 0)
        v_ref = spline.evaluate(t, 1)
        a_ref = spline.evaluate(t, 2)
        a_cmd = a_ref + kd_pos * (v_ref - vel) + kp_pos * (p_ref - pos)
        thrust = p.mass * np.hypot(a_cmd[0], a_cmd[1] + p.g)
        phi_des = np.arctan2(-a_cmd[0], a_cmd[1] + p.g)
        ang_acc_cmd = kp_att * (phi_des - phi) - kd_att * phidot
        diff = (p.inertia_J / p.arm_l) * ang_acc_cmd
        return np.array([(thrust + diff) / 2.0, (thrust - diff) / 2.0])

    return policy


def pd_demonstrator(spline: PolySpline, p: PvtolParams, gains, x0, dt: float = 0.01):
    """Track the spline on the true plant; returns the closed-loop SimResult."""
    field_fn = lambda x, u: pvtol_dynamics(x, u, p)
    return simulate(field_fn, pd_policy(spline, p, gains), x0, T=spline.duration, dt=dt)


def build_dataset(cfg: DemoConfig, p: PvtolParams) -> Dataset:
    """Run the full 3-step recipe and sub-sample tuples with exact labels."""
    rng_wp = rng_stream(cfg.seed, "waypoints")
    rng_ic = rng_stream(cfg.seed, "initial_conditions")
    rng_noise = rng_stream(cfg.seed, "label_noise")

    tuples, traj_ids = [], []
    traj_id = 0
    n_diverged = 0
    n_total = 0
    for _ in range(cfg.n_waypoint_paths):
        n_wp = int(rng_wp.integers(cfg.n_waypoints_min, cfg.n_waypoints_max + 1))
        base_wp = rng_wp.uniform(-cfg.waypoint_box, cfg.waypoint_box, size=(n_wp, 2))
        seg_len = np.linalg.norm(np.diff(base_wp, axis=0), axis=1)
        base_times = np.maximum(seg_len / cfg.avg_speed, 1.0)
        for _ in range(cfg.splines_per_path):
            wp = base_wp + rng_wp.normal(0.0, cfg.waypoint_sigma, size=base_wp.shape)
            times = base_times * (1.0 + cfg.time_jitter_frac * rng_wp.uniform(-1, 1, size=base_times.shape))
            spline = min_snap_spline(wp, times)
            x0 = np.zeros(6)
            x0[:2] = wp[0] + rng_ic.normal(0.0, cfg.ic_sigma, size=2)
            x0[2:] = rng_ic.normal(0.0, 0.02, size=4)
            res = pd_demonstrator(spline, p, cfg.pd_gains, x0)
            n_total += 1
            if res.diverged:
                n_diverged += 1
                continue
            stride = max(int(round(cfg.sample_dt / (res.traj.times[1] - res.traj.times[0]))), 1)
            n_samples = len(res.traj.controls)
            for i in range(0, n_samples, stride):
                x = res.traj.states[i]
                u = res.traj.controls[i]
                xdot = pvtol_dynamics(x, u, p)
                if cfg.label_noise_sigma > 0:
                    xdot = xdot + rng_noise.normal(0.0, cfg.label_noise_sigma, size=6)
                tuples.append(TrainingTuple(x, u, xdot))
                traj_ids.append(traj_id)
            traj_id += 1
    if n_total > 0 and not tuples:
        raise RuntimeError("all demonstrations diverged; retune PD gains or slow the references")
    return Dataset(tuples, traj_ids, cfg.sample_dt)
