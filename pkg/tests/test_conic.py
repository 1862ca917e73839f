import numpy as np
import pytest

from ccmlearn.conic import ConicProblem, PsdBlock, solve_conic


def test_active_bound_qp():
    # minimize z^2 s.t. z >= 1
    prob = ConicProblem(n_vars=1, P=np.array([[2.0]]), q=np.zeros(1),
                        G=np.array([[-1.0]]), h=np.array([-1.0]))
    sol = solve_conic(prob)
    assert sol.status == "optimal"
    assert abs(sol.z[0] - 1.0) < 1e-6
    assert abs(sol.objective - 1.0) < 1e-6


def test_correlation_sdp():
    # minimize -z s.t. [[1, z], [z, 1]] >= 0  -> z = 1
    C0 = np.eye(2)
    C1 = np.array([[0.0, 1.0], [1.0, 0.0]])
    block = PsdBlock.from_dense(C0, [C1], [0])
    prob = ConicProblem(n_vars=1, q=np.array([-1.0]), psd_blocks=[block])
    sol = solve_conic(prob)
    assert sol.status == "optimal"
    assert abs(sol.z[0] - 1.0) < 1e-6
    S = block.value(sol.z)
    assert np.linalg.eigvalsh(S)[0] >= -1e-7


def test_max_eigenvalue_sdp():
    # minimize t s.t. t I - diag(1, 2) >= 0  -> t = 2
    C0 = -np.diag([1.0, 2.0])
    C1 = np.eye(2)
    block = PsdBlock.from_dense(C0, [C1], [0])
    prob = ConicProblem(n_vars=1, q=np.array([1.0]), psd_blocks=[block])
    sol = solve_conic(prob)
    assert sol.status == "optimal"
    assert abs(sol.z[0] - 2.0) < 1e-6


def test_equality_constrained_qp():
    # minimize ||z||^2 s.t. z0 + z1 = 2 -> (1, 1)
    prob = ConicProblem(n_vars=2, P=2 * np.eye(2), A=np.array([[1.0, 1.0]]), b=np.array([2.0]),
                        G=np.array([[-1.0, 0.0]]), h=np.array([10.0]))
    sol = solve_conic(prob)
    assert sol.status == "optimal"
    np.testing.assert_allclose(sol.z, [1.0, 1.0], atol=1e-6)


def test_infeasible_lp_detected():
    # z >= 1 and z <= 0 simultaneously
    prob = ConicProblem(n_vars=1, q=np.array([1.0]),
                        G=np.array([[-1.0], [1.0]]), h=np.array([-1.0, 0.0]))
    sol = solve_conic(prob, max_iter=100)
    assert sol.status == "infeasible"


def test_nonsymmetric_basis_rejected():
    with pytest.raises(ValueError):
        PsdBlock(var_idx=[0], coef=np.ones((1, 1)), offset=np.zeros(1),
                 basis=np.array([[[0.0, 1.0], [0.0, 0.0]]]))


# ---------------------------------------------------------------------------
# Brute-force oracles: grid refinement for 2-variable problems, bisection on
# the PSD boundary for 1-variable problems.
# ---------------------------------------------------------------------------

def _psd_ok_2x2(M):
    return M[0, 0] >= 0 and M[1, 1] >= 0 and M[0, 0] * M[1, 1] - M[0, 1] ** 2 >= 0


def _psd_ok_3x3(M):
    if M[0, 0] < 0 or M[1, 1] < 0 or M[2, 2] < 0:
        return False
    if M[0, 0] * M[1, 1] - M[0, 1] ** 2 < 0:
        return False
    return np.linalg.det(M) >= 0


def _feasible(z, blocks_dense, G, h):
    if G is not None and np.any(G @ z - h > 0):
        return False
    for C0, Cs, idx in blocks_dense:
        M = C0 + sum(z[i] * C for i, C in zip(idx, Cs))
        ok = _psd_ok_2x2(M) if M.shape[0] == 2 else _psd_ok_3x3(M)
        if not ok:
            return False
    return True


def _feasible_grid(Z, blocks_dense, G, h):
    """Vectorized feasibility over rows of Z (minor tests, exact for p<=3)."""
    ok = np.ones(len(Z), dtype=bool)
    if G is not None:
        ok &= np.all(Z @ G.T - h <= 0, axis=1)
    for C0, Cs, idx in blocks_dense:
        M = np.tile(C0, (len(Z), 1, 1))
        for i, C in zip(idx, Cs):
            M += Z[:, i, None, None] * C
        ok &= M[:, 0, 0] >= 0
        ok &= M[:, 1, 1] >= 0
        ok &= M[:, 0, 0] * M[:, 1, 1] - M[:, 0, 1] ** 2 >= 0
        if C0.shape[0] == 3:
            ok &= M[:, 2, 2] >= 0
            ok &= np.linalg.det(M) >= 0
    return ok


def grid_oracle_2d(objective, blocks_dense, G, h, lo=-3.0, hi=3.0):
    """Refining grid search over a box known to contain the optimum."""
    center = np.zeros(2)
    span = hi - lo
    best = None
    for _ in range(40):
        xs = np.linspace(center[0] - span / 2, center[0] + span / 2, 161)
        ys = np.linspace(center[1] - span / 2, center[1] + span / 2, 161)
        XX, YY = np.meshgrid(xs, ys)
        Z = np.column_stack([XX.ravel(), YY.ravel()])
        ok = _feasible_grid(Z, blocks_dense, G, h)
        if ok.any():
            vals = np.array([objective(z) for z in Z[ok]])
            k = np.argmin(vals)
            cand = (vals[k], Z[ok][k])
            if best is None or cand[0] < best[0]:
                best = cand
        assert best is not None, "oracle found no feasible grid point"
        center = best[1]
        span *= 0.7
    return best[0]


def bisect_oracle_1d(c_lin, blocks_dense, lo=-50.0, hi=50.0):
    """Minimize c*z over the feasible interval found by PSD-boundary bisection."""

    def ok(z):
        return _feasible(np.array([z]), blocks_dense, None, None)

    zs = np.linspace(lo, hi, 2001)
    feas = [z for z in zs if ok(z)]
    assert feas, "oracle: no feasible point"
    z_in = feas[len(feas) // 2]
    z_lo, z_hi = z_in, z_in
    a, b = lo, z_in
    for _ in range(200):
        mid = 0.5 * (a + b)
        if ok(mid):
            b = mid
        else:
            a = mid
    z_lo = b
    a, b = z_in, hi
    for _ in range(200):
        mid = 0.5 * (a + b)
        if ok(mid):
            a = mid
        else:
            b = mid
    z_hi = a
    return min(c_lin * z_lo, c_lin * z_hi) if c_lin != 0 else 0.0


def random_sdp_2d(rng):
    p = rng.choice([2, 3])
    def sym(s):
        M = rng.normal(size=(s, s))
        return 0.5 * (M + M.T)
    C1, C2 = sym(p), sym(p)
    C0 = np.eye(p) * rng.uniform(1.0, 2.0)
    q = rng.normal(size=2)
    blocks_dense = [(C0, [C1, C2], [0, 1])]
    G = np.vstack([np.eye(2), -np.eye(2)])
    h = np.full(4, 3.0)
    prob = ConicProblem(n_vars=2, q=q,
                        G=G, h=h,
                        psd_blocks=[PsdBlock.from_dense(C0, [C1, C2], [0, 1])])
    return prob, (lambda z: q @ z), blocks_dense, G, h


def test_random_problems_match_bruteforce_oracle():
    rng = np.random.default_rng(2718)
    n_checked = 0
    # 12 two-variable SDP/LP mixes vs refining grid search
    for _ in range(12):
        prob, obj, blocks_dense, G, h = random_sdp_2d(rng)
        sol = solve_conic(prob, tol=1e-7)
        assert sol.status == "optimal"
        oracle = grid_oracle_2d(obj, blocks_dense, G, h)
        assert abs(sol.objective - oracle) <= 1e-4 * max(1.0, abs(oracle))
        n_checked += 1
    # 8 one-variable SDPs vs bisection on the PSD boundary
    for _ in range(8):
        p = rng.choice([2, 3])
        while True:
            M = rng.normal(size=(p, p))
            C1 = 0.5 * (M + M.T)
            eigs = np.linalg.eigvalsh(C1)
            # indefinite C1 keeps the feasible set a bounded interval
            if eigs[0] < -0.1 and eigs[-1] > 0.1:
                break
        C0 = np.eye(p) * rng.uniform(1.0, 2.0)
        c = float(rng.choice([-1.0, 1.0]) * rng.uniform(0.5, 2.0))
        prob = ConicProblem(n_vars=1, q=np.array([c]),
                            psd_blocks=[PsdBlock.from_dense(C0, [C1], [0])])
        sol = solve_conic(prob, tol=1e-7)
        assert sol.status == "optimal"
        oracle = bisect_oracle_1d(c, [(C0, [C1], [0])])
        assert abs(sol.objective - oracle) <= 1e-4 * max(1.0, abs(oracle))
        n_checked += 1
    assert n_checked == 20


def test_returned_blocks_feasible_and_gap_shrinks():
    rng = np.random.default_rng(99)
    for _ in range(5):
        prob, obj, blocks_dense, G, h = random_sdp_2d(rng)
        sol = solve_conic(prob, tol=1e-7)
        assert sol.status == "optimal"
        for bl in prob.psd_blocks:
            S = bl.value(sol.z)
            assert np.linalg.eigvalsh(S)[0] >= -1e-8
        assert np.all(G @ sol.z - h <= 1e-8)
        assert sol.gap_history[-1] < 1e-4 * sol.gap_history[0]


def test_factored_block_equivalent_to_dense():
    # same constraint entered densely and in factored form
    rng = np.random.default_rng(5)
    E1 = np.diag([1.0, 0.0])
    E2 = np.diag([0.0, 1.0])
    E3 = np.array([[0.0, 1.0], [1.0, 0.0]])
    # S(z) = I + z0*(E1+2E3) + z1*(E2-E3)
    coef = np.array([[1.0, 0.0], [0.0, 1.0], [2.0, -1.0], [0.0, 0.0]])
    offset = np.array([0.0, 0.0, 0.0, 1.0])
    basis = np.stack([E1, E2, E3, np.eye(2)])
    fact = PsdBlock(var_idx=[0, 1], coef=coef, offset=offset, basis=basis)
    dense = PsdBlock.from_dense(np.eye(2), [E1 + 2 * E3, E2 - E3], [0, 1])
    q = rng.normal(size=2)
    P = np.eye(2)
    s1 = solve_conic(ConicProblem(n_vars=2, P=P, q=q, psd_blocks=[fact]))
    s2 = solve_conic(ConicProblem(n_vars=2, P=P, q=q, psd_blocks=[dense]))
    assert s1.status == s2.status == "optimal"
    np.testing.assert_allclose(s1.z, s2.z, atol=1e-6)


def test_solution_residuals_reported():
    prob = ConicProblem(n_vars=1, P=np.array([[2.0]]), q=np.zeros(1),
                        G=np.array([[-1.0]]), h=np.array([-1.0]))
    sol = solve_conic(prob)
    assert sol.residuals["primal"] <= 1e-7
    assert sol.residuals["dual"] <= 1e-7
