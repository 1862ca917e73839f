"""Equivalence of the sliced block representation with the dense one."""

import numpy as np

from ccmlearn.conic import ConicProblem, EntrySlicedBlock, PsdBlock, solve_conic


def build_pair(rng, n_entries=3, width=4, n_extra=2, q=5, p=3):
    """An EntrySlicedBlock and the equivalent dense PsdBlock on the same vars."""
    n = n_entries * width + n_extra
    slice_map = np.array([0, 1, 2, 0])  # entry 0 carries two functionals
    vecs = rng.normal(size=(len(slice_map), width))
    extra_cols = np.array([n_entries * width, n_entries * width + 1])
    M = rng.normal(size=(q, len(slice_map) + n_extra))
    offset = rng.normal(size=q)
    basis = []
    for _ in range(q):
        B = rng.normal(size=(p, p))
        basis.append(0.5 * (B + B.T))
    basis = np.stack(basis)
    sliced = EntrySlicedBlock(basis=basis, M=M, offset=offset, slice_map=slice_map,
                              vecs=vecs, extra_cols=extra_cols, n_entries=n_entries)

    # dense equivalent: C_i = sum_j M[j, :] (dv/dz_i) basis_j
    J = np.zeros((len(slice_map) + n_extra, n))
    for i, e in enumerate(slice_map):
        J[i, e * width:(e + 1) * width] = vecs[i]
    for k, col in enumerate(extra_cols):
        J[len(slice_map) + k, col] = 1.0
    coef_full = M @ J  # (q, n)
    C0 = np.tensordot(offset, basis, axes=1)
    Cs = [np.tensordot(coef_full[:, i], basis, axes=1) for i in range(n)]
    dense = PsdBlock.from_dense(C0, Cs, np.arange(n))
    return sliced, dense, n


def test_value_lin_adjoint_hess_match():
    rng = np.random.default_rng(0)
    sliced, dense, n = build_pair(rng)
    z = rng.normal(size=n)
    np.testing.assert_allclose(sliced.value(z), dense.value(z), atol=1e-12)
    np.testing.assert_allclose(sliced.lin(z), dense.lin(z), atol=1e-12)

    V = rng.normal(size=(3, 3))
    V = 0.5 * (V + V.T)
    out1, out2 = np.zeros(n), np.zeros(n)
    sliced.adjoint_into(V, out1, scale=-2.0)
    dense.adjoint_into(V, out2, scale=-2.0)
    np.testing.assert_allclose(out1, out2, atol=1e-12)

    Droot = rng.normal(size=(3, 3))
    D = Droot @ Droot.T + 3 * np.eye(3)
    H1, H2 = np.zeros((n, n)), np.zeros((n, n))
    sliced.hess_into(D, H1)
    dense.hess_into(D, H2)
    np.testing.assert_allclose(H1, H2, atol=1e-9)


def test_solve_matches_dense():
    rng = np.random.default_rng(7)
    for trial in range(3):
        sliced, dense, n = build_pair(rng)
        # make the problem bounded and feasible: minimize ||z - z0||^2 with S(z) >= 0
        z0 = rng.normal(size=n) * 0.1
        # ensure strictly feasible at some point by shifting the offset
        shift = np.eye(sliced.p) * (1.0 + abs(float(np.linalg.eigvalsh(sliced.value(z0 * 0))[0])))
        # append identity to basis via offset trick: adjust offset in both reps
        C0_extra = shift
        sliced2 = EntrySlicedBlock(
            basis=np.concatenate([sliced.basis, C0_extra[None]]),
            M=np.vstack([np.hstack([sliced.M, np.zeros((sliced.M.shape[0], 0))]), np.zeros(sliced.M.shape[1])]),
            offset=np.concatenate([sliced.offset, [1.0]]),
            slice_map=sliced.slice_map, vecs=sliced.vecs,
            extra_cols=sliced.extra_cols, n_entries=sliced.n_entries)
        dense2 = PsdBlock(var_idx=dense.var_idx, coef=dense.coef,
                          offset=dense.offset,
                          basis=np.concatenate([dense.basis[:-1], [dense.basis[-1] + C0_extra]]))
        p1 = ConicProblem(n_vars=n, P=2 * np.eye(n), q=-2 * z0, psd_blocks=[sliced2])
        p2 = ConicProblem(n_vars=n, P=2 * np.eye(n), q=-2 * z0, psd_blocks=[dense2])
        s1 = solve_conic(p1)
        s2 = solve_conic(p2)
        assert s1.status == s2.status == "optimal"
        np.testing.assert_allclose(s1.z, s2.z, atol=1e-5)
