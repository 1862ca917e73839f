"""Interior-point solver for convex QPs with linear and PSD-block constraints.

Problem form:

    minimize    1/2 z'Pz + q'z + const
    subject to  A z = b
                G z <= h            (componentwise)
                S_k(z) >= 0 (PSD)   for each block k

Each PSD block is an affine symmetric-matrix map stored in factored form:
S(z) = sum_j y_j E_j with y = coef @ z[var_idx] + offset and symmetric basis
matrices E_j.  A dense map C0 + sum_i z_i C_i is the special case where the
basis is the C matrices themselves (``PsdBlock.from_dense``); the factored
form lets structured problems share a handful of basis matrices across
hundreds of coefficients, which keeps the Newton assembly cheap.

The algorithm is a standard primal-dual method with Nesterov-Todd scaling
and a Mehrotra-style predictor/corrector; the scaled Newton systems are
reduced to a dense positive-definite system in z.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SolverFailure

STATUS_OPTIMAL = "optimal"
STATUS_INFEASIBLE = "infeasible"
STATUS_MAX_ITER = "max_iter"


def _scaled_gram(D: np.ndarray, basis: np.ndarray) -> np.ndarray:
    """[tr(D E_i D E_j)] over the basis matrices; PSD for SPD D."""
    F = np.einsum("ab,jbc,cd->jad", D, basis, D, optimize=True)
    q = basis.shape[0]
    return F.reshape(q, -1) @ basis.reshape(q, -1).T


def _psd_factor(Hy: np.ndarray) -> np.ndarray:
    """L with L L' = Hy for (numerically) PSD Hy."""
    Hy = 0.5 * (Hy + Hy.T)
    w, V = np.linalg.eigh(Hy)
    return V * np.sqrt(np.clip(w, 0.0, None))


@dataclass
class PsdBlock:
    """One PSD constraint S(z) = sum_j (coef @ z[var_idx] + offset)_j basis_j >= 0."""

    var_idx: np.ndarray   # (n_loc,) global variable indices
    coef: np.ndarray      # (n_coef, n_loc)
    offset: np.ndarray    # (n_coef,)
    basis: np.ndarray     # (n_coef, p, p), each symmetric

    def __post_init__(self):
        self.var_idx = np.asarray(self.var_idx, dtype=int)
        self.coef = np.asarray(self.coef, dtype=float)
        self.offset = np.asarray(self.offset, dtype=float)
        self.basis = np.asarray(self.basis, dtype=float)
        nc = self.basis.shape[0]
        if self.basis.ndim != 3 or self.basis.shape[1] != self.basis.shape[2]:
            raise ValueError("basis must be (n_coef, p, p)")
        if self.coef.shape != (nc, self.var_idx.size) or self.offset.shape != (nc,):
            raise ValueError("coef/offset shapes inconsistent with basis")
        if np.abs(self.basis - np.transpose(self.basis, (0, 2, 1))).max() > 1e-12:
            raise ValueError("basis matrices must be symmetric")

    @property
    def p(self) -> int:
        return self.basis.shape[1]

    @classmethod
    def from_dense(cls, C0, C_list, var_idx) -> "PsdBlock":
        """Build a block from S(z) = C0 + sum_i z[var_idx[i]] C_i."""
        C0 = np.asarray(C0, dtype=float)
        Cs = np.asarray(C_list, dtype=float)
        n_loc = Cs.shape[0]
        basis = np.concatenate([Cs, C0[None]], axis=0)
        coef = np.zeros((n_loc + 1, n_loc))
        coef[:n_loc, :] = np.eye(n_loc)
        offset = np.zeros(n_loc + 1)
        offset[-1] = 1.0
        return cls(var_idx=np.asarray(var_idx, dtype=int), coef=coef, offset=offset, basis=basis)

    def value(self, z: np.ndarray) -> np.ndarray:
        y = self.coef @ z[self.var_idx] + self.offset
        return np.tensordot(y, self.basis, axes=1)

    def lin(self, dz: np.ndarray) -> np.ndarray:
        """Linear part applied to a full-length direction."""
        y = self.coef @ dz[self.var_idx]
        return np.tensordot(y, self.basis, axes=1)

    def adjoint_into(self, V: np.ndarray, out: np.ndarray, scale: float = 1.0) -> None:
        """Accumulate scale * Lin'(V) into the global vector ``out``."""
        e = np.tensordot(self.basis, V, axes=([1, 2], [0, 1]))
        np.add.at(out, self.var_idx, scale * (self.coef.T @ e))

    def hess_into(self, D: np.ndarray, H: np.ndarray) -> None:
        """Accumulate Lin' (D . D) Lin into the global Hessian H.

        D is SPD; the contribution is [tr(D C_i D C_j)] over local variables.
        """
        F = np.einsum("ab,jbc,cd->jad", D, self.basis, D, optimize=True)
        q = self.basis.shape[0]
        Hy = F.reshape(q, -1) @ self.basis.reshape(q, -1).T
        Hloc = self.coef.T @ Hy @ self.coef
        H[np.ix_(self.var_idx, self.var_idx)] += Hloc

    @property
    def n_factor_cols(self) -> int:
        return self.basis.shape[0]

    def hess_factor_into(self, D: np.ndarray, X: np.ndarray, c0: int) -> None:
        """Write a factor of the Hessian contribution into X[:, c0:c0+q].

        The block's Hessian is (coef' L)(coef' L)' for any L with L L' = Hy;
        accumulating factors and forming X X' in one pass is much faster than
        per-block dense updates.
        """
        Hy = _scaled_gram(D, self.basis)
        L = _psd_factor(Hy)
        X[self.var_idx, c0:c0 + L.shape[1]] += self.coef.T @ L


@dataclass
class EntrySlicedBlock:
    """PSD block whose coefficients factor through sliced linear functionals.

    The variable vector is assumed to start with ``n_entries`` contiguous
    slices of equal ``width`` (at ``entry_start``).  Intermediate values are

        v_i = vecs[i] . z[entry_start + slice_map[i]*width : ... + width]

    followed by plain extra coordinates z[extra_cols]; the block matrix is
    S(z) = sum_j (M @ v + offset)_j basis_j.  Equivalent to PsdBlock but with
    Newton assembly that exploits the slice structure, which is what makes
    problems with hundreds of these blocks tractable.
    """

    basis: np.ndarray      # (q, p, p)
    M: np.ndarray          # (q, n_sliced + n_extra)
    offset: np.ndarray     # (q,)
    slice_map: np.ndarray  # (n_sliced,)
    vecs: np.ndarray       # (n_sliced, width)
    extra_cols: np.ndarray  # (n_extra,) global indices
    n_entries: int
    entry_start: int = 0

    def __post_init__(self):
        self.basis = np.asarray(self.basis, dtype=float)
        self.M = np.asarray(self.M, dtype=float)
        self.offset = np.asarray(self.offset, dtype=float)
        self.slice_map = np.asarray(self.slice_map, dtype=int)
        self.vecs = np.asarray(self.vecs, dtype=float)
        self.extra_cols = np.asarray(self.extra_cols, dtype=int)
        if self.M.shape != (self.basis.shape[0], len(self.slice_map) + len(self.extra_cols)):
            raise ValueError("M shape inconsistent with functional counts")
        # group sliced functionals by entry for the batched Hessian
        self._width = self.vecs.shape[1] if self.vecs.size else 0
        counts = np.bincount(self.slice_map, minlength=self.n_entries) if self.slice_map.size else np.zeros(self.n_entries, dtype=int)
        g = int(counts.max()) if counts.size else 0
        self._g = max(g, 1)
        self._Gpad = np.zeros((self.n_entries, self._g, self._width))
        self._slot = np.zeros(len(self.slice_map), dtype=int)
        fill = np.zeros(self.n_entries, dtype=int)
        for i, e in enumerate(self.slice_map):
            self._slot[i] = fill[e]
            self._Gpad[e, fill[e]] = self.vecs[i]
            fill[e] += 1

    @property
    def p(self) -> int:
        return self.basis.shape[1]

    def _v(self, z, linear_only=False):
        ns = len(self.slice_map)
        v = np.empty(ns + len(self.extra_cols))
        if ns:
            span = z[self.entry_start: self.entry_start + self.n_entries * self._width]
            zE = span.reshape(self.n_entries, self._width)
            v[:ns] = np.einsum("iw,iw->i", self.vecs, zE[self.slice_map])
        if len(self.extra_cols):
            v[ns:] = z[self.extra_cols]
        return v

    def value(self, z: np.ndarray) -> np.ndarray:
        y = self.M @ self._v(z) + self.offset
        return np.tensordot(y, self.basis, axes=1)

    def lin(self, dz: np.ndarray) -> np.ndarray:
        y = self.M @ self._v(dz)
        return np.tensordot(y, self.basis, axes=1)

    def adjoint_into(self, V: np.ndarray, out: np.ndarray, scale: float = 1.0) -> None:
        e = np.tensordot(self.basis, V, axes=([1, 2], [0, 1]))
        g = scale * (self.M.T @ e)
        ns = len(self.slice_map)
        if ns:
            contrib = g[:ns, None] * self.vecs
            span = out[self.entry_start: self.entry_start + self.n_entries * self._width]
            zE = span.reshape(self.n_entries, self._width)
            np.add.at(zE, self.slice_map, contrib)
        if len(self.extra_cols):
            np.add.at(out, self.extra_cols, g[ns:])

    def hess_into(self, D: np.ndarray, H: np.ndarray) -> None:
        F = np.einsum("ab,jbc,cd->jad", D, self.basis, D, optimize=True)
        q = self.basis.shape[0]
        Hy = F.reshape(q, -1) @ self.basis.reshape(q, -1).T
        Hmid = self.M.T @ Hy @ self.M
        ns = len(self.slice_map)
        ne, g, w = self.n_entries, self._g, self._width
        if ns:
            # expand the sliced part of Hmid onto (entry, slot) pairs
            Hm4 = np.zeros((ne, g, ne, g))
            Hm4[self.slice_map[:, None], self._slot[:, None],
                self.slice_map[None, :], self._slot[None, :]] = Hmid[:ns, :ns]
            H4 = np.einsum("eafb,eak,fbl->ekfl", Hm4, self._Gpad, self._Gpad, optimize=True)
            lo = self.entry_start
            hi = lo + ne * w
            H[lo:hi, lo:hi] += H4.reshape(ne * w, ne * w)
        if len(self.extra_cols):
            nx = len(self.extra_cols)
            if ns:
                cross = Hmid[:ns, ns:]  # (ns, nx)
                rows = (self.slice_map[:, None] * w + np.arange(w)[None, :] + self.entry_start)
                for j, col in enumerate(self.extra_cols):
                    np.add.at(H[:, col], rows.ravel(), (cross[:, j, None] * self.vecs).ravel())
                    np.add.at(H[col, :], rows.ravel(), (cross[:, j, None] * self.vecs).ravel())
            H[np.ix_(self.extra_cols, self.extra_cols)] += Hmid[ns:, ns:]

    @property
    def n_factor_cols(self) -> int:
        return self.M.shape[1]

    def hess_factor_into(self, D: np.ndarray, X: np.ndarray, c0: int) -> None:
        """Factor columns of the Hessian contribution (see PsdBlock)."""
        Hy = _scaled_gram(D, self.basis)
        L = _psd_factor(self.M.T @ Hy @ self.M)
        ns = len(self.slice_map)
        c1 = c0 + L.shape[1]
        for j in range(ns):
            e = self.slice_map[j]
            lo = self.entry_start + e * self._width
            X[lo:lo + self._width, c0:c1] += np.outer(self.vecs[j], L[j])
        for j, col in enumerate(self.extra_cols):
            X[col, c0:c1] += L[ns + j]


@dataclass
class ConicProblem:
    """Quadratic objective with linear equality/inequality and PSD constraints."""

    n_vars: int
    P: np.ndarray | None = None
    q: np.ndarray | None = None
    obj_const: float = 0.0
    G: np.ndarray | None = None
    h: np.ndarray | None = None
    A: np.ndarray | None = None
    b: np.ndarray | None = None
    psd_blocks: list = field(default_factory=list)

    def __post_init__(self):
        n = self.n_vars
        self.q = np.zeros(n) if self.q is None else np.asarray(self.q, dtype=float)
        if self.P is not None:
            self.P = np.asarray(self.P, dtype=float)
            if self.P.shape != (n, n):
                raise ValueError("P must be n x n")
            if np.abs(self.P - self.P.T).max() > 1e-10:
                raise ValueError("P must be symmetric")
        if (self.G is None) != (self.h is None):
            raise ValueError("G and h must be given together")
        if self.G is not None:
            self.G = np.asarray(self.G, dtype=float).reshape(-1, n)
            self.h = np.asarray(self.h, dtype=float)
        if (self.A is None) != (self.b is None):
            raise ValueError("A and b must be given together")
        if self.A is not None:
            self.A = np.asarray(self.A, dtype=float).reshape(-1, n)
            self.b = np.asarray(self.b, dtype=float)

    def objective(self, z: np.ndarray) -> float:
        val = self.q @ z + self.obj_const
        if self.P is not None:
            val += 0.5 * z @ (self.P @ z)
        return float(val)


@dataclass
class ConicSolution:
    z: np.ndarray
    objective: float
    status: str
    residuals: dict
    n_iters: int
    gap_history: list


def _chol_solve(L, rhs):
    y = np.linalg.solve(L, rhs)
    return np.linalg.solve(L.T, y)


def _min_eig_step(S, dS):
    """Largest alpha with S + alpha dS staying PSD (1.0 cap handled by caller)."""
    L = np.linalg.cholesky(S)
    Linv_dS = np.linalg.solve(L, np.linalg.solve(L, dS).T)
    Linv_dS = 0.5 * (Linv_dS + Linv_dS.T)
    lam_min = np.linalg.eigvalsh(Linv_dS)[0]
    if lam_min >= 0:
        return np.inf
    return -1.0 / lam_min


class _Scaling:
    """Nesterov-Todd scaling point for the product cone."""

    def __init__(self, d_lin, blocks_RT):
        self.d_lin = d_lin            # (l,)
        self.blocks = blocks_RT       # list of (R, Rinv, sigma) per block

    @classmethod
    def identity(cls, l, blocks):
        return cls(np.ones(l), [(np.eye(b.p), np.eye(b.p), np.ones(b.p)) for b in blocks])

    @classmethod
    def from_point(cls, s_lin, w_lin, S_mats, Z_mats):
        d = np.sqrt(s_lin / w_lin) if s_lin.size else s_lin
        out = []
        for S, Z in zip(S_mats, Z_mats):
            Ls = np.linalg.cholesky(S)
            Lz = np.linalg.cholesky(Z)
            U, sig, Vt = np.linalg.svd(Lz.T @ Ls)
            R = Ls @ (Vt.T / np.sqrt(sig))
            Rinv = (U / np.sqrt(sig)).T @ Lz.T
            out.append((R, Rinv, sig))
        return cls(d, out)


def solve_conic(problem: ConicProblem, tol: float = 1e-7, max_iter: int = 200) -> ConicSolution:
    """Solve the conic QP; deterministic, dense linear algebra throughout."""
    n = problem.n_vars
    P = problem.P
    q = problem.q
    blocks = problem.psd_blocks
    G = problem.G
    h = problem.h if problem.h is not None else np.zeros(0)
    A = problem.A
    b = problem.b
    l = 0 if G is None else G.shape[0]
    deg = l + sum(bl.p for bl in blocks)

    def P_mul(v):
        return P @ v if P is not None else np.zeros(n)

    # No cone constraints: direct KKT solve.
    if deg == 0:
        Pd = P if P is not None else np.zeros((n, n))
        if A is None:
            try:
                z = np.linalg.solve(Pd + 1e-14 * np.eye(n), -q)
            except np.linalg.LinAlgError:
                raise SolverFailure("unbounded or singular unconstrained QP")
        else:
            m = A.shape[0]
            KKT = np.block([[Pd, A.T], [A, np.zeros((m, m))]])
            z = np.linalg.solve(KKT, np.concatenate([-q, b]))[:n]
        res = {"primal": 0.0 if A is None else float(np.linalg.norm(A @ z - b, np.inf)),
               "dual": float(np.linalg.norm(P_mul(z) + q, np.inf)) if A is None else 0.0,
               "gap": 0.0}
        return ConicSolution(z, problem.objective(z), STATUS_OPTIMAL, res, 0, [])

    h_norm = max(1.0, np.linalg.norm(h) if l else 0.0,
                 max((np.linalg.norm(bl.offset) for bl in blocks), default=0.0),
                 np.linalg.norm(b) if A is not None else 0.0)
    q_norm = max(1.0, np.linalg.norm(q))

    chunk_cols = 4096
    total_cols = sum(bl.n_factor_cols for bl in blocks)
    X_buf = np.empty((n, min(chunk_cols, max(total_cols, 1))))

    def assemble_H(scaling: _Scaling):
        H = P.copy() if P is not None else np.zeros((n, n))
        if l:
            GW = G / scaling.d_lin[:, None]
            H += GW.T @ GW
        # accumulate block contributions through factor columns: a few large
        # X X' products instead of thousands of small dense updates
        col = 0
        X_buf[:] = 0.0
        for bl, (_, Rinv, _) in zip(blocks, scaling.blocks):
            q = bl.n_factor_cols
            if col + q > X_buf.shape[1]:
                X = X_buf[:, :col]
                H += X @ X.T
                X_buf[:] = 0.0
                col = 0
            D = Rinv.T @ Rinv
            bl.hess_factor_into(D, X_buf, col)
            col += q
        if col:
            X = X_buf[:, :col]
            H += X @ X.T
        return H

    def factor(H):
        scale = max(np.trace(H) / n, 1.0)
        for reg in (0.0, 1e-13, 1e-10, 1e-7):
            try:
                return np.linalg.cholesky(H + reg * scale * np.eye(n))
            except np.linalg.LinAlgError:
                continue
        raise SolverFailure("Newton system not positive definite")

    def kkt_solve(L, r1, r2):
        # [H A'; A 0] [dz; dy] = [r1; r2]
        if A is None:
            return _chol_solve(L, r1), np.zeros(0)
        Hi_r1 = _chol_solve(L, r1)
        Hi_At = _chol_solve(L, A.T)
        S = A @ Hi_At
        dy = np.linalg.solve(S, A @ Hi_r1 - r2)
        dz = Hi_r1 - Hi_At @ dy
        return dz, dy

    # --- initial point -----------------------------------------------------
    scaling0 = _Scaling.identity(l, blocks)
    L0 = factor(assemble_H(scaling0))
    rhs0 = -q.copy()
    if l:
        rhs0 += G.T @ h
    for bl in blocks:
        S0 = np.tensordot(bl.offset, bl.basis, axes=1)
        bl.adjoint_into(S0, rhs0, scale=-1.0)
    z, y = kkt_solve(L0, rhs0, b if A is not None else None)

    if l:
        s_raw = h - G @ z
        t = -s_raw.min()
        s_lin = s_raw + (1.0 + t) if t >= 0 else s_raw.copy()
        w_raw = -s_raw
        t = -w_raw.min()
        w_lin = w_raw + (1.0 + t) if t >= 0 else w_raw.copy()
    else:
        s_lin = np.zeros(0)
        w_lin = np.zeros(0)
    S_mats, Z_mats = [], []
    for bl in blocks:
        Sv = bl.value(z)
        Sv = 0.5 * (Sv + Sv.T)
        lam = np.linalg.eigvalsh(Sv)[0]
        S_mats.append(Sv + (1.0 - lam) * np.eye(bl.p) if lam <= 0 else Sv.copy())
        Zv = -Sv
        lam = np.linalg.eigvalsh(Zv)[0]
        Z_mats.append(Zv + (1.0 - lam) * np.eye(bl.p) if lam <= 0 else Zv.copy())

    gap_history = []
    best = None
    status = STATUS_MAX_ITER
    n_iter = 0
    dres_scale = None

    for n_iter in range(1, max_iter + 1):
        # residuals; the dual one is normalized by its largest constituent
        # term (cancellation bounds the achievable absolute residual)
        Pz = P_mul(z)
        r_x = Pz + q
        term_norm = max(np.linalg.norm(Pz), np.linalg.norm(q))
        if A is not None:
            Aty = A.T @ y
            r_x += Aty
            term_norm = max(term_norm, np.linalg.norm(Aty))
        if l:
            Gtw = G.T @ w_lin
            r_x += Gtw
            term_norm = max(term_norm, np.linalg.norm(Gtw))
        cone_adj = np.zeros(n)
        for bl, Z in zip(blocks, Z_mats):
            bl.adjoint_into(Z, cone_adj, scale=-1.0)
        r_x += cone_adj
        term_norm = max(term_norm, np.linalg.norm(cone_adj))
        r_y = A @ z - b if A is not None else np.zeros(0)
        r_sl = (G @ z + s_lin - h) if l else np.zeros(0)
        r_Sb = []
        for bl, S in zip(blocks, S_mats):
            R = S - bl.value(z)
            r_Sb.append(0.5 * (R + R.T))

        gap = float(s_lin @ w_lin + sum(np.sum(S * Z) for S, Z in zip(S_mats, Z_mats)))
        mu = gap / deg
        gap_history.append(gap)

        pres_terms = [np.linalg.norm(r_y)] + ([np.linalg.norm(r_sl)] if l else []) + \
                     [np.linalg.norm(R, "fro") for R in r_Sb]
        pres = np.sqrt(np.sum(np.square(pres_terms))) / h_norm if pres_terms else 0.0
        if dres_scale is None:
            dres_scale = max(q_norm, np.linalg.norm(r_x))
        dres = np.linalg.norm(r_x) / max(dres_scale, term_norm)
        pcost = problem.objective(z)

        score = max(pres, dres) + gap / max(1.0, abs(pcost))
        if best is None or score < best[0]:
            best = (score, z.copy(), pcost,
                    {"primal": float(pres), "dual": float(dres), "gap": float(gap)})
            stall = 0
        else:
            # past the float64 floor the duals degrade while the gap keeps
            # shrinking; stop burning iterations once progress stagnates
            stall += 1
            if stall >= 6:
                break

        if pres <= tol and dres <= tol and gap <= tol * max(1.0, abs(pcost)):
            status = STATUS_OPTIMAL
            break

        # primal infeasibility certificate: w in cone*, G'w + A'y ~ 0, h'w + b'y < 0
        cert_vec = np.zeros(n)
        if l:
            cert_vec += G.T @ w_lin
        for bl, Z in zip(blocks, Z_mats):
            bl.adjoint_into(Z, cert_vec, scale=-1.0)
        cert_lin = float(h @ w_lin) if l else 0.0
        cert_lin += sum(np.sum(np.tensordot(bl.offset, bl.basis, axes=1) * Z)
                        for bl, Z in zip(blocks, Z_mats))
        if A is not None:
            cert_vec += A.T @ y
            cert_lin += float(b @ y)
        w_scale = np.linalg.norm(w_lin) + sum(np.linalg.norm(Z, "fro") for Z in Z_mats)
        if w_scale > 1e4 and np.linalg.norm(cert_vec) / w_scale < 1e-8 and cert_lin / w_scale < -1e-10:
            status = STATUS_INFEASIBLE
            best = (0.0, z.copy(), pcost,
                    {"primal": float(pres), "dual": float(dres), "gap": float(gap),
                     "certificate": float(np.linalg.norm(cert_vec) / w_scale)})
            break

        try:
            scaling = _Scaling.from_point(s_lin, w_lin, S_mats, Z_mats)
        except np.linalg.LinAlgError:
            break
        L = factor(assemble_H(scaling))
        lam_l = np.sqrt(s_lin * w_lin) if l else np.zeros(0)

        def direction(sigma_mu, corr_lin, corr_blocks):
            # complementarity rhs in scaled space
            if l:
                d_rhs_l = -(lam_l**2) + sigma_mu - (corr_lin if corr_lin is not None else 0.0)
                blam_l = d_rhs_l / lam_l
            else:
                blam_l = np.zeros(0)
            blam_b = []
            for k, (bl, (R_mat, Rinv, sig)) in enumerate(zip(blocks, scaling.blocks)):
                d_rhs = -np.diag(sig**2) + sigma_mu * np.eye(bl.p)
                if corr_blocks is not None:
                    d_rhs = d_rhs - corr_blocks[k]
                denom = 0.5 * (sig[:, None] + sig[None, :])
                blam_b.append(d_rhs / denom)

            rhs = -r_x.copy()
            if l:
                d = scaling.d_lin
                rhs += G.T @ ((-r_sl - d * blam_l) / d**2)
            Wt_blams = []
            for bl, (R_mat, Rinv, sig), blam, rS in zip(blocks, scaling.blocks, blam_b, r_Sb):
                Wt_blam = R_mat @ blam @ R_mat.T
                Wt_blams.append(Wt_blam)
                V = -rS - Wt_blam          # bz - W' blam with bz = -r_S
                D = Rinv.T @ Rinv
                bl.adjoint_into(D @ V @ D, rhs, scale=-1.0)
            dz, dy = kkt_solve(L, rhs, -r_y if A is not None else None)

            if l:
                d = scaling.d_lin
                Gdz = G @ dz
                ds_l = -r_sl - Gdz
                dw_l = (Gdz + r_sl + d * blam_l) / d**2
            else:
                ds_l = np.zeros(0)
                dw_l = np.zeros(0)
            dS, dZ = [], []
            for bl, (R_mat, Rinv, sig), Wt_blam, rS in zip(blocks, scaling.blocks, Wt_blams, r_Sb):
                Lin_dz = bl.lin(dz)
                dS_b = -rS + Lin_dz
                D = Rinv.T @ Rinv
                dZ_b = D @ (-Lin_dz + rS + Wt_blam) @ D
                dS.append(0.5 * (dS_b + dS_b.T))
                dZ.append(0.5 * (dZ_b + dZ_b.T))
            return dz, dy, ds_l, dw_l, dS, dZ

        def max_step(ds_l, dw_l, dS, dZ):
            alpha = np.inf
            if l:
                neg = ds_l < 0
                if neg.any():
                    alpha = min(alpha, np.min(-s_lin[neg] / ds_l[neg]))
                neg = dw_l < 0
                if neg.any():
                    alpha = min(alpha, np.min(-w_lin[neg] / dw_l[neg]))
            for S, Z, dSb, dZb in zip(S_mats, Z_mats, dS, dZ):
                alpha = min(alpha, _min_eig_step(S, dSb))
                alpha = min(alpha, _min_eig_step(Z, dZb))
            return alpha

        # affine (predictor) direction
        dz_a, dy_a, ds_a, dw_a, dS_a, dZ_a = direction(0.0, None, None)
        alpha_a = min(1.0, max_step(ds_a, dw_a, dS_a, dZ_a))
        gap_a = float((s_lin + alpha_a * ds_a) @ (w_lin + alpha_a * dw_a)
                      + sum(np.sum((S + alpha_a * dSb) * (Z + alpha_a * dZb))
                            for S, Z, dSb, dZb in zip(S_mats, Z_mats, dS_a, dZ_a)))
        sigma = min(1.0, max(0.0, (gap_a / gap))) ** 3

        # corrector terms (W^-T ds) o (W dw) in the scaled space
        corr_lin = None
        if l:
            corr_lin = (ds_a / scaling.d_lin) * (dw_a * scaling.d_lin)
        corr_blocks = []
        for (R_mat, Rinv, sig), dSb, dZb in zip(scaling.blocks, dS_a, dZ_a):
            U = Rinv @ dSb @ Rinv.T
            V = R_mat.T @ dZb @ R_mat
            corr_blocks.append(0.5 * (U @ V + V @ U))

        dz, dy, ds_l, dw_l, dS, dZ = direction(sigma * mu, corr_lin, corr_blocks)
        alpha = min(1.0, 0.99 * max_step(ds_l, dw_l, dS, dZ))
        if not np.isfinite(alpha) or alpha <= 1e-14:
            break

        z = z + alpha * dz
        if A is not None:
            y = y + alpha * dy
        if l:
            s_lin = s_lin + alpha * ds_l
            w_lin = w_lin + alpha * dw_l
        S_mats = [S + alpha * dSb for S, dSb in zip(S_mats, dS)]
        Z_mats = [Z + alpha * dZb for Z, dZb in zip(Z_mats, dZ)]

    _, z_best, obj_best, res_best = best
    return ConicSolution(z_best, obj_best, status, res_best, n_iter, gap_history)
