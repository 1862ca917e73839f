import numpy as np
import pytest

from ccmlearn.demos import (DemoConfig, PolySpline, build_dataset,
                            min_snap_spline, pd_demonstrator, stationary_spline)
from ccmlearn.pvtol import PvtolParams, pvtol_dynamics

P = PvtolParams()


def test_single_segment_rest_to_rest_closed_form():
    spline = min_snap_spline([(0.0, 0.0), (1.0, 0.0)], [1.0])
    # unique degree-7 polynomial with these 8 boundary conditions
    expect = np.zeros(8)
    expect[4:] = [35.0, -84.0, 70.0, -20.0]
    np.testing.assert_allclose(spline.coeffs[0, 0], expect, atol=1e-8)
    np.testing.assert_allclose(spline.evaluate(0.5)[0], 0.5, atol=1e-10)
    np.testing.assert_allclose(spline.coeffs[0, 1], np.zeros(8), atol=1e-9)


def test_identical_waypoints_stationary():
    spline = min_snap_spline([(2.0, -1.0), (2.0, -1.0)], [1.5])
    for t in (0.0, 0.7, 1.5):
        np.testing.assert_allclose(spline.evaluate(t), [2.0, -1.0], atol=1e-9)
        np.testing.assert_allclose(spline.evaluate(t, 1), [0.0, 0.0], atol=1e-9)


GL_NODES, GL_WEIGHTS = np.polynomial.legendre.leggauss(8)


def snap_cost(spline: PolySpline):
    """Integrated squared snap via Gauss-Legendre sampling of the evaluator."""
    total = 0.0
    edges = np.concatenate([[0.0], np.cumsum(spline.segment_times)])
    for k, Tk in enumerate(spline.segment_times):
        ts = edges[k] + (GL_NODES + 1) * Tk / 2
        vals = np.array([spline.evaluate(t, 4) for t in ts])
        total += np.sum(GL_WEIGHTS[:, None] * vals**2) * Tk / 2
    return total


def brute_force_snap_qp(waypoints, seg_times):
    """Dense-QP oracle: minimize sampled squared snap over monomial coefficients."""
    waypoints = np.asarray(waypoints, dtype=float)
    seg_times = np.asarray(seg_times, dtype=float)
    n_seg = len(seg_times)
    n_var = 8 * n_seg
    # sampled objective: quadrature of (4th derivative)^2 at Gauss nodes
    H = np.zeros((n_var, n_var))
    for k, Tk in enumerate(seg_times):
        taus = (GL_NODES + 1) / 2
        rows = np.zeros((len(taus), 8))
        for i in range(4, 8):
            fac = i * (i - 1) * (i - 2) * (i - 3)
            rows[:, i] = fac * taus ** (i - 4)
        Hk = (rows * GL_WEIGHTS[:, None]).T @ rows * (Tk / 2) / Tk**8
        H[8 * k: 8 * (k + 1), 8 * k: 8 * (k + 1)] += Hk

    def deriv_row(tau, order):
        row = np.zeros(8)
        for i in range(order, 8):
            fac = 1.0
            for r in range(order):
                fac *= i - r
            row[i] = fac * tau ** (i - order)
        return row

    A, bx, bz = [], [], []
    for k in range(n_seg):
        for tau, wp in ((0.0, waypoints[k]), (1.0, waypoints[k + 1])):
            row = np.zeros(n_var)
            row[8 * k: 8 * (k + 1)] = deriv_row(tau, 0)
            A.append(row)
            bx.append(wp[0])
            bz.append(wp[1])
    for k in range(n_seg - 1):
        for order in (1, 2, 3):
            row = np.zeros(n_var)
            row[8 * k: 8 * (k + 1)] = deriv_row(1.0, order) / seg_times[k] ** order
            row[8 * (k + 1): 8 * (k + 2)] = -deriv_row(0.0, order) / seg_times[k + 1] ** order
            A.append(row)
            bx.append(0.0)
            bz.append(0.0)
    for order in (1, 2, 3):
        row = np.zeros(n_var)
        row[:8] = deriv_row(0.0, order) / seg_times[0] ** order
        A.append(row)
        bx.append(0.0)
        bz.append(0.0)
        row = np.zeros(n_var)
        row[-8:] = deriv_row(1.0, order) / seg_times[-1] ** order
        A.append(row)
        bx.append(0.0)
        bz.append(0.0)
    A = np.array(A)
    cost = 0.0
    for rhs in (bx, bz):
        KKT = np.block([[2 * H, A.T], [A, np.zeros((A.shape[0], A.shape[0]))]])
        sol = np.linalg.lstsq(KKT, np.concatenate([np.zeros(n_var), rhs]), rcond=None)[0]
        c = sol[:n_var]
        cost += c @ H @ c
    return cost


def test_three_waypoint_snap_matches_qp_oracle():
    wps = [(0.0, 0.0), (1.0, 1.0), (2.0, 2.0)]
    times = [1.0, 1.0]
    spline = min_snap_spline(wps, times)
    oracle = brute_force_snap_qp(wps, times)
    assert abs(snap_cost(spline) - oracle) <= 1e-8 * max(1.0, oracle)


def test_spline_continuity_through_jerk():
    rng = np.random.default_rng(1)
    wps = rng.uniform(-5, 5, size=(4, 2))
    times = rng.uniform(1.0, 2.0, size=3)
    spline = min_snap_spline(wps, times)
    edges = np.cumsum(times)[:-1]
    for te in edges:
        for order in range(4):
            left = spline.evaluate(te - 1e-12, order)
            right = spline.evaluate(te + 1e-12, order)
            np.testing.assert_allclose(left, right, atol=1e-9)


def test_duplicate_times_rejected():
    with pytest.raises(ValueError):
        min_snap_spline([(0.0, 0.0), (1.0, 0.0)], [0.0])


def test_pd_hover_holds():
    cfg = DemoConfig()
    res = pd_demonstrator(stationary_spline([0.0, 0.0], 2.0), P, cfg.pd_gains, np.zeros(6))
    assert not res.diverged
    assert np.abs(res.traj.states).max() < 1e-9
    np.testing.assert_allclose(res.traj.controls, np.tile(P.hover_control(), (len(res.traj.controls), 1)), atol=1e-6)


def test_pd_vertical_offset_decays_monotonically():
    cfg = DemoConfig()
    x0 = np.zeros(6)
    x0[1] = 0.1
    res = pd_demonstrator(stationary_spline([0.0, 0.0], 6.0), P, cfg.pd_gains, x0)
    err = np.abs(res.traj.states[:, 1])
    assert err[-1] < 0.01
    # monotone decay after a short transient
    tail = err[50:]
    assert np.all(np.diff(tail) <= 1e-12)


def test_pd_imperfect_tracking_midway():
    cfg = DemoConfig()
    spline = min_snap_spline([(0.0, 0.0), (1.0, 0.0)], [2.0])
    res = pd_demonstrator(spline, P, (1.0, 1.5, 8.0, 4.0), np.zeros(6))
    errs = []
    for t, x in zip(res.traj.times, res.traj.states):
        p_ref = spline.evaluate(t)
        errs.append(np.hypot(x[0] - p_ref[0], x[1] - p_ref[1]))
    assert 0.01 < max(errs) < 0.5


def test_build_dataset_counts_and_exact_labels():
    cfg = DemoConfig(n_waypoint_paths=1, splines_per_path=1, seed=3)
    ds = build_dataset(cfg, P)
    assert len(ds) > 0
    for tup in ds.tuples[:20]:
        np.testing.assert_array_equal(tup.xdot, pvtol_dynamics(tup.x, tup.u, P))


def test_build_dataset_single_short_demo_count():
    # a 1 s stationary demo sampled at 0.1 s yields exactly 10 tuples
    cfg = DemoConfig(n_waypoint_paths=1, splines_per_path=1, seed=0)
    res = pd_demonstrator(stationary_spline([0.0, 0.0], 1.0), P, cfg.pd_gains, np.zeros(6))
    stride = int(round(cfg.sample_dt / 0.01))
    count = len(range(0, len(res.traj.controls), stride))
    assert count == 10


def test_build_dataset_deterministic():
    cfg = DemoConfig(n_waypoint_paths=2, splines_per_path=2, seed=11)
    d1 = build_dataset(cfg, P)
    d2 = build_dataset(cfg, P)
    assert len(d1) == len(d2)
    np.testing.assert_array_equal(d1.states(), d2.states())
    np.testing.assert_array_equal(d1.controls(), d2.controls())


def test_dataset_coverage():
    cfg = DemoConfig(seed=5)
    ds = build_dataset(cfg, P)
    assert len(ds) >= 500
    X = ds.states()
    assert np.ptp(X[:, 0]) >= 4.0
    assert np.ptp(X[:, 1]) >= 4.0
    assert np.ptp(X[:, 2]) >= 0.5
