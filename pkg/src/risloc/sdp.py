"""Small dense semidefinite-program solver.

Problems are stated over symmetric or Hermitian matrix variable blocks
with a linear objective, linear equality constraints, and affine matrix
expressions required to be positive semidefinite. Hermitian quantities
are handled through the standard real symmetric embedding
[[X, -Y], [Y, X]] of W = X + jY.

Internally everything is canonicalized to

    minimize    c^T x
    subject to  A x + s = b,   s in {0}^mz x PSD(d1) x ... x PSD(dk)

and solved with the homogeneous self-dual embedding iterated by
operator splitting (ADMM). Each iteration solves one linear system with
the cached factorization of I + A^T A; when A carries a small set of
dense rows on top of a very sparse remainder (the shape produced by the
phase-shift optimizer) the factorization uses a diagonal-plus-low-rank
(Woodbury) split so memory stays proportional to the dense part.

KKT residuals are always reported in the original problem scaling.
"""

from __future__ import annotations

import json
import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
import scipy.sparse
import scipy.sparse.linalg

__all__ = [
    "SdpError",
    "VarBlock",
    "Equality",
    "PsdConstraint",
    "ConeProgram",
    "Assignment",
    "SolverReport",
    "svec",
    "smat",
    "svec_len",
    "herm_params_from_matrix",
    "herm_matrix_from_params",
    "sym_params_from_matrix",
    "sym_matrix_from_params",
    "herm_embedding",
    "herm_from_embedding",
    "block_identity_op",
    "placement_op",
    "linear_functional",
    "solve",
    "kkt_residuals",
    "dump_program",
    "load_program",
]

_SQRT2 = math.sqrt(2.0)


class SdpError(RuntimeError):
    """Raised for malformed programs or solver-level failures."""


# --------------------------------------------------------------------------
# scaled vectorization of symmetric matrices
# --------------------------------------------------------------------------

_triu_cache: dict = {}


def _triu(d: int):
    if d not in _triu_cache:
        iu = np.triu_indices(d)
        scale = np.where(iu[0] == iu[1], 1.0, _SQRT2)
        _triu_cache[d] = (iu, scale)
    return _triu_cache[d]


def svec_len(d: int) -> int:
    return d * (d + 1) // 2


def svec(m: np.ndarray) -> np.ndarray:
    """Scaled upper triangle so that svec(A) . svec(B) = tr(A B)."""
    iu, scale = _triu(m.shape[0])
    return m[iu] * scale


def smat(v: np.ndarray, d: int) -> np.ndarray:
    iu, scale = _triu(d)
    out = np.zeros((d, d))
    out[iu] = v / scale
    out = out + out.T
    out[np.diag_indices(d)] *= 0.5
    return out


def _psd_project(v: np.ndarray, d: int) -> np.ndarray:
    m = smat(v, d)
    evals, evecs = np.linalg.eigh(m)
    pos = evals > 0
    if not np.any(pos):
        return np.zeros_like(v)
    if np.all(pos):
        return v
    proj = (evecs[:, pos] * evals[pos]) @ evecs[:, pos].T
    return svec(proj)


# --------------------------------------------------------------------------
# Hermitian parameterization and real embedding
# --------------------------------------------------------------------------

def _herm_layout(d: int):
    a, b = np.triu_indices(d, k=1)
    return a, b


def herm_params_from_matrix(w: np.ndarray) -> np.ndarray:
    """Parameter order: real diagonal, then Re upper, then Im upper."""
    d = w.shape[0]
    a, b = _herm_layout(d)
    return np.concatenate([np.real(np.diag(w)), np.real(w[a, b]), np.imag(w[a, b])])


def herm_matrix_from_params(params: np.ndarray, d: int) -> np.ndarray:
    a, b = _herm_layout(d)
    k = a.size
    out = np.zeros((d, d), dtype=complex)
    out[np.diag_indices(d)] = params[:d]
    vals = params[d:d + k] + 1j * params[d + k:d + 2 * k]
    out[a, b] = vals
    out[b, a] = np.conj(vals)
    return out


def sym_params_from_matrix(m: np.ndarray) -> np.ndarray:
    return svec(m)


def sym_matrix_from_params(params: np.ndarray, d: int) -> np.ndarray:
    return smat(params, d)


def herm_embedding(w: np.ndarray) -> np.ndarray:
    x, y = np.real(w), np.imag(w)
    return np.block([[x, -y], [y, x]])


def herm_from_embedding(e: np.ndarray) -> np.ndarray:
    d = e.shape[0] // 2
    x = 0.5 * (e[:d, :d] + e[d:, d:])
    y = 0.5 * (e[d:, :d] - e[:d, d:])
    # symmetrize the recovered parts to kill stray asymmetry
    x = 0.5 * (x + x.T)
    y = 0.5 * (y - y.T)
    return x + 1j * y


# --------------------------------------------------------------------------
# program containers
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class VarBlock:
    name: str
    dim: int
    kind: str = "sym"  # 'sym' or 'herm'

    def __post_init__(self):
        if self.kind not in ("sym", "herm"):
            raise SdpError(f"unknown block kind {self.kind!r}")
        if self.dim < 1:
            raise SdpError("block dimension must be positive")

    @property
    def n_params(self) -> int:
        return svec_len(self.dim) if self.kind == "sym" else self.dim * self.dim

    def matrix_from_params(self, params):
        if self.kind == "sym":
            return sym_matrix_from_params(params, self.dim)
        return herm_matrix_from_params(params, self.dim)

    def params_from_matrix(self, m):
        if self.kind == "sym":
            return sym_params_from_matrix(np.asarray(m, dtype=float))
        return herm_params_from_matrix(np.asarray(m, dtype=complex))


@dataclass
class Equality:
    terms: dict
    rhs: float


@dataclass
class PsdConstraint:
    """Affine expression const + sum_b op_b(params_b) required PSD.

    ``dim`` and ``kind`` describe the expression; for a Hermitian
    expression the constraint is enforced on its real embedding and every
    operator must map block parameters to svec of the embedded matrix.
    """

    dim: int
    kind: str
    const: np.ndarray
    terms: dict  # block name -> (svec_out x n_params) ndarray or sparse

    @property
    def svec_dim(self) -> int:
        d = self.dim if self.kind == "sym" else 2 * self.dim
        return svec_len(d)

    def constant_svec(self) -> np.ndarray:
        c = self.const
        if self.kind == "sym":
            return svec(np.asarray(c, dtype=float))
        return svec(herm_embedding(np.asarray(c, dtype=complex)))


@dataclass
class ConeProgram:
    blocks: list
    objective: dict          # block name -> coefficient vector over params
    equalities: list = field(default_factory=list)
    psd_constraints: list = field(default_factory=list)

    def block(self, name: str) -> VarBlock:
        for b in self.blocks:
            if b.name == name:
                return b
        raise SdpError(f"unknown block {name!r}")

    def validate(self):
        names = [b.name for b in self.blocks]
        if len(set(names)) != len(names):
            raise SdpError("duplicate block names")
        for where, terms in ([("objective", self.objective)]
                             + [("equality", e.terms) for e in self.equalities]):
            for name, vec in terms.items():
                blk = self.block(name)
                if np.shape(vec) != (blk.n_params,):
                    raise SdpError(f"{where} coefficient size mismatch for {name!r}")
        for k, cons in enumerate(self.psd_constraints):
            for name, op in cons.terms.items():
                blk = self.block(name)
                if op.shape != (cons.svec_dim, blk.n_params):
                    raise SdpError(
                        f"psd constraint {k}: operator shape {op.shape} does not "
                        f"match ({cons.svec_dim}, {blk.n_params}) for {name!r}")


def block_identity_op(block: VarBlock):
    """Operator mapping block parameters to svec of the (embedded) block."""
    d = block.dim
    if block.kind == "sym":
        return scipy.sparse.identity(svec_len(d), format="csr")
    # Hermitian: params [diag, re upper, im upper] -> svec of [[X,-Y],[Y,X]]
    iu, scale = _triu(2 * d)
    svec_index = {}
    for pos, (i, j) in enumerate(zip(*iu)):
        svec_index[(int(i), int(j))] = pos
    a, b = _herm_layout(d)
    k = a.size
    rows, cols, vals = [], [], []

    def add(i, j, col, val):
        i, j = (i, j) if i <= j else (j, i)
        pos = svec_index[(i, j)]
        rows.append(pos)
        cols.append(col)
        vals.append(val * (1.0 if i == j else _SQRT2))

    for t in range(d):                      # diagonal params -> X_tt twice
        add(t, t, t, 1.0)
        add(d + t, d + t, t, 1.0)
    for p in range(k):                      # Re W_ab -> X_ab in TL and BR
        add(int(a[p]), int(b[p]), d + p, 1.0)
        add(d + int(a[p]), d + int(b[p]), d + p, 1.0)
    for p in range(k):                      # Im W_ab -> -Y in TR: E[a, d+b] = -Y_ab
        add(int(a[p]), d + int(b[p]), d + k + p, -1.0)
        add(int(b[p]), d + int(a[p]), d + k + p, 1.0)
    return scipy.sparse.csr_matrix(
        (vals, (rows, cols)), shape=(svec_len(2 * d), d * d))


def placement_op(big_dim: int, offset: int, block: VarBlock):
    """Operator placing a symmetric block at (offset, offset) of a larger
    symmetric expression."""
    if block.kind != "sym":
        raise SdpError("placement_op supports symmetric blocks only")
    d = block.dim
    iu_small, _ = _triu(d)
    iu_big, _ = _triu(big_dim)
    svec_index = {}
    for pos, (i, j) in enumerate(zip(*iu_big)):
        svec_index[(int(i), int(j))] = pos
    rows = [svec_index[(offset + int(i), offset + int(j))]
            for i, j in zip(*iu_small)]
    cols = np.arange(svec_len(d))
    vals = np.ones(svec_len(d))
    return scipy.sparse.csr_matrix(
        (vals, (rows, cols)), shape=(svec_len(big_dim), svec_len(d)))


def linear_functional(block: VarBlock, coeff_matrix) -> np.ndarray:
    """Parameter coefficients of <C, X> = tr(C X) (real for Hermitian pairs)."""
    if block.kind == "sym":
        return svec(np.asarray(coeff_matrix, dtype=float))
    c = np.asarray(coeff_matrix, dtype=complex)
    a, b = _herm_layout(block.dim)
    return np.concatenate([
        np.real(np.diag(c)),
        2.0 * np.real(c[a, b]),
        2.0 * np.imag(c[a, b]),
    ])


# --------------------------------------------------------------------------
# canonical form
# --------------------------------------------------------------------------

@dataclass
class _Canonical:
    n: int
    m: int
    m_zero: int
    psd_dims: list
    c: np.ndarray
    b: np.ndarray
    a_sparse: scipy.sparse.csr_matrix
    dense_rows: np.ndarray      # row indices into A
    a_dense: np.ndarray         # (k, n) coefficients of those rows
    offsets: dict               # block name -> (offset, VarBlock)

    def matvec(self, x: np.ndarray) -> np.ndarray:
        y = self.a_sparse @ x
        if self.dense_rows.size:
            y[self.dense_rows] += self.a_dense @ x
        return y

    def rmatvec(self, y: np.ndarray) -> np.ndarray:
        x = self.a_sparse.T @ y
        if self.dense_rows.size:
            x += self.a_dense.T @ y[self.dense_rows]
        return x

    def project_dual_cone(self, y: np.ndarray) -> np.ndarray:
        """Projection onto {0}* x PSD* = free x PSD (cone is self dual)."""
        out = y.copy()
        off = self.m_zero
        for d in self.psd_dims:
            ln = svec_len(d)
            out[off:off + ln] = _psd_project(y[off:off + ln], d)
            off += ln
        return out

    def project_primal_cone(self, s: np.ndarray) -> np.ndarray:
        out = s.copy()
        out[:self.m_zero] = 0.0
        off = self.m_zero
        for d in self.psd_dims:
            ln = svec_len(d)
            out[off:off + ln] = _psd_project(s[off:off + ln], d)
            off += ln
        return out


_DENSE_ROW_MIN = 192      # route a row to the dense block above this fill
_DENSE_ROW_FRAC = 0.05


def canonicalize(prog: ConeProgram) -> _Canonical:
    prog.validate()
    offsets = {}
    n = 0
    for blk in prog.blocks:
        offsets[blk.name] = (n, blk)
        n += blk.n_params

    c = np.zeros(n)
    for name, vec in prog.objective.items():
        off, blk = offsets[name]
        c[off:off + blk.n_params] += np.asarray(vec, dtype=float)

    m_zero = len(prog.equalities)
    psd_dims = [(k.dim if k.kind == "sym" else 2 * k.dim)
                for k in prog.psd_constraints]
    m = m_zero + sum(svec_len(d) for d in psd_dims)
    b = np.zeros(m)

    row_chunks, col_chunks, val_chunks = [], [], []
    dense_chunks = []  # (row_index_array, dense matrix over full n)

    def add_triplets(r, cc, v):
        row_chunks.append(np.asarray(r, dtype=np.int64))
        col_chunks.append(np.asarray(cc, dtype=np.int64))
        val_chunks.append(np.asarray(v, dtype=float))

    for i, eq in enumerate(prog.equalities):
        b[i] = eq.rhs
        for name, vec in eq.terms.items():
            off, blk = offsets[name]
            vec = np.asarray(vec, dtype=float)
            nz = np.nonzero(vec)[0]
            if nz.size:
                add_triplets(np.full(nz.size, i), off + nz, vec[nz])

    row_base = m_zero
    for cons in prog.psd_constraints:
        ln = cons.svec_dim
        b[row_base:row_base + ln] = cons.constant_svec()
        dense_mask = np.zeros(ln, dtype=bool)
        ops = []
        nnz_cut = max(_DENSE_ROW_MIN, _DENSE_ROW_FRAC * n)
        for name, op in cons.terms.items():
            off, blk = offsets[name]
            if scipy.sparse.issparse(op):
                op = op.tocsr()
                nnz_per_row = np.diff(op.indptr)
            else:
                op = np.asarray(op, dtype=float)
                nnz_per_row = np.count_nonzero(op, axis=1)
            dense_mask |= nnz_per_row > nnz_cut
            ops.append((off, blk, op))
        heavy_rows = np.nonzero(dense_mask)[0]
        heavy_map = np.full(ln, -1, dtype=np.int64)
        heavy_map[heavy_rows] = np.arange(heavy_rows.size)
        dense_mat = (np.zeros((heavy_rows.size, n)) if heavy_rows.size else None)
        # s = b - A x must reproduce const + op(x), so A carries -op here
        for off, blk, op in ops:
            if scipy.sparse.issparse(op):
                coo = op.tocoo()
                on_dense = dense_mask[coo.row]
                if dense_mat is not None and on_dense.any():
                    np.subtract.at(
                        dense_mat,
                        (heavy_map[coo.row[on_dense]], off + coo.col[on_dense]),
                        coo.data[on_dense])
                keep = ~on_dense
                if keep.any():
                    add_triplets(row_base + coo.row[keep],
                                 off + coo.col[keep], -coo.data[keep])
            else:
                if dense_mat is not None and dense_mask.any():
                    dense_mat[heavy_map[dense_mask],
                              off:off + blk.n_params] -= op[dense_mask]
                light = ~dense_mask
                if light.any():
                    sub = op[light]
                    li, lj = np.nonzero(sub)
                    if li.size:
                        light_rows = np.nonzero(light)[0]
                        add_triplets(row_base + light_rows[li], off + lj,
                                     -sub[li, lj])
        if heavy_rows.size:
            dense_chunks.append((row_base + heavy_rows, dense_mat))
        row_base += ln

    if row_chunks:
        a_sparse = scipy.sparse.csr_matrix(
            (np.concatenate(val_chunks),
             (np.concatenate(row_chunks), np.concatenate(col_chunks))),
            shape=(m, n))
    else:
        a_sparse = scipy.sparse.csr_matrix((m, n))
    if dense_chunks:
        dense_rows = np.concatenate([r for r, _ in dense_chunks])
        a_dense = np.vstack([mtx for _, mtx in dense_chunks])
    else:
        dense_rows = np.zeros(0, dtype=int)
        a_dense = np.zeros((0, n))
    return _Canonical(n, m, m_zero, psd_dims, c, b, a_sparse,
                      dense_rows, a_dense, offsets)


# --------------------------------------------------------------------------
# scaling (Ruiz equilibration with one scalar per PSD cone)
# --------------------------------------------------------------------------

def _row_groups(can: _Canonical):
    groups = [np.arange(can.m_zero)]
    off = can.m_zero
    for d in can.psd_dims:
        ln = svec_len(d)
        groups.append(np.arange(off, off + ln))
        off += ln
    return groups


def _equilibrate(can: _Canonical, n_passes: int = 10):
    """Scale rows (uniformly within each PSD cone) and columns toward unit
    norms; returns the scaling and mutates the canonical matrices in place."""
    m, n = can.m, can.n
    e = np.ones(m)
    f = np.ones(n)
    sp = can.a_sparse
    dn = can.a_dense
    groups = _row_groups(can)[1:]  # cone groups; zero-cone rows scale per row
    for _ in range(n_passes):
        sq = sp.multiply(sp)
        row_nrm2 = np.asarray(sq.sum(axis=1)).ravel()
        col_nrm2 = np.asarray(sq.sum(axis=0)).ravel()
        if can.dense_rows.size:
            dsq = dn * dn
            row_nrm2[can.dense_rows] += dsq.sum(axis=1)
            col_nrm2 += dsq.sum(axis=0)
        row_nrm = np.sqrt(row_nrm2)
        for g in groups:
            if g.size:
                rms = math.sqrt(float(np.mean(row_nrm[g] ** 2))) or 1.0
                row_nrm[g] = rms
        row_scale = 1.0 / np.sqrt(np.maximum(row_nrm, 1e-8))
        col_scale = 1.0 / np.sqrt(np.maximum(np.sqrt(col_nrm2), 1e-8))
        e *= row_scale
        f *= col_scale
        sp = scipy.sparse.diags(row_scale) @ sp @ scipy.sparse.diags(col_scale)
        if can.dense_rows.size:
            dn = row_scale[can.dense_rows, None] * dn * col_scale[None, :]
    can.a_sparse = sp.tocsr()
    can.a_dense = dn
    return e, f


# --------------------------------------------------------------------------
# cached solver for (I + A^T A)
# --------------------------------------------------------------------------

class _NormalSolver:
    def __init__(self, can: _Canonical):
        sp = can.a_sparse
        n = can.n
        gram = (sp.T @ sp).tocsc()
        gram = gram + scipy.sparse.identity(n, format="csc")
        k = can.dense_rows.size
        self._dense = can.a_dense
        off_diag = gram - scipy.sparse.diags(gram.diagonal())
        if off_diag.nnz == 0:
            self._diag = gram.diagonal()
            self._sp_solve = None
        else:
            self._diag = None
            self._sp_solve = scipy.sparse.linalg.splu(gram)
        if k:
            dinv_ut = self._apply_base_inv(self._dense.T)
            cap = self._dense @ dinv_ut
            cap[np.diag_indices_from(cap)] += 1.0
            self._cap = scipy.linalg.cho_factor(cap, lower=True)
            self._dinv_ut = dinv_ut
        else:
            self._cap = None

    def _apply_base_inv(self, r):
        if self._diag is not None:
            return r / (self._diag[:, None] if r.ndim == 2 else self._diag)
        return self._sp_solve.solve(r)

    def solve(self, r: np.ndarray) -> np.ndarray:
        base = self._apply_base_inv(r)
        if self._cap is None:
            return base
        t = scipy.linalg.cho_solve(self._cap, self._dense @ base)
        return base - self._dinv_ut @ t


# --------------------------------------------------------------------------
# results
# --------------------------------------------------------------------------

@dataclass
class SolverReport:
    status: str
    objective: float
    primal_residual: float
    dual_residual: float
    gap: float
    iterations: int
    solve_time: float


@dataclass
class Assignment:
    """Primal matrices per block plus canonical primal/dual vectors."""

    primal: dict
    eq_duals: np.ndarray
    psd_duals: list
    x: np.ndarray
    y: np.ndarray
    s: np.ndarray


# --------------------------------------------------------------------------
# HSDE operator-splitting core
# --------------------------------------------------------------------------

def _residuals(can: _Canonical, e, f, beta, gamma, x_hat, y_hat, s_hat):
    """Map scaled iterates back and evaluate KKT residuals on the original
    data. Original A is reconstructed through the diagonal scalings."""
    x = f * x_hat / beta
    y = e * y_hat / gamma
    s = s_hat / (e * beta)
    ax = can.matvec(x_hat / beta) / e
    aty = can.rmatvec(y_hat / gamma) / f
    b0 = can.b
    c0 = can.c
    pres = np.linalg.norm(ax + s - b0) / (1.0 + np.linalg.norm(b0))
    dres = np.linalg.norm(aty + c0) / (1.0 + np.linalg.norm(c0))
    pobj = float(c0 @ x)
    dobj = float(-b0 @ y)
    gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
    return x, y, s, pres, dres, gap, pobj


def _solve_canonical(can: _Canonical, tol: float, max_iter: int,
                     warm_x=None, warm_s=None, over_relax: float = 1.5,
                     check_every: int = 25):
    t_start = time.time()
    e, f = _equilibrate(can)
    b_nrm = np.linalg.norm(e * can.b)
    c_nrm = np.linalg.norm(f * can.c)
    beta = 1.0 / max(b_nrm, 1e-10)
    gamma = 1.0 / max(c_nrm, 1e-10)
    b_hat = beta * (e * can.b)
    c_hat = gamma * (f * can.c)
    # canonical matrices were scaled in place by _equilibrate
    normal = _NormalSolver(can)
    n, m = can.n, can.m

    def m_solve(r1, r2):
        p = normal.solve(r1 - can.rmatvec(r2))
        return p, r2 + can.matvec(p)

    hx, hy = m_solve(c_hat, b_hat)
    g_dot_h = float(c_hat @ hx + b_hat @ hy)

    u = np.zeros(n + m + 1)
    v = np.zeros(n + m + 1)
    u[-1] = 1.0
    v[-1] = 1.0
    if warm_x is not None:
        u[:n] = beta * (warm_x / f)
        if warm_s is not None:
            v[n:n + m] = beta * (e * warm_s)

    status = "max_iter"
    x = y = s = None
    pres = dres = gap = math.inf
    pobj = math.nan
    it = 0
    for it in range(1, max_iter + 1):
        w = u + v
        # (I + Q)^{-1} w via the reduction to M = [[I, A^T], [-A, I]]
        zx, zy = m_solve(w[:n], w[n:n + m])
        tau = (w[-1] + float(c_hat @ zx + b_hat @ zy)) / (1.0 + g_dot_h)
        ut_x = zx - tau * hx
        ut_y = zy - tau * hy
        u_tilde = np.concatenate([ut_x, ut_y, [tau]])
        t_vec = over_relax * u_tilde + (1.0 - over_relax) * u
        raw = t_vec - v
        u_new = raw.copy()
        u_new[n:n + m] = can.project_dual_cone(raw[n:n + m])
        u_new[-1] = max(raw[-1], 0.0)
        v = v - t_vec + u_new
        u = u_new

        if it % check_every == 0 or it == max_iter:
            tau_c = u[-1]
            if tau_c > 1e-10:
                x, y, s, pres, dres, gap, pobj = _residuals(
                    can, e, f, beta, gamma, u[:n] / tau_c, u[n:n + m] / tau_c,
                    v[n:n + m] / tau_c)
                if pres <= tol and dres <= tol and gap <= tol:
                    status = "optimal"
                    break
            else:
                # homogeneous certificate checks
                ax_nrm = np.linalg.norm(can.matvec(u[:n]) + v[n:n + m])
                cx = float(c_hat @ u[:n])
                aty_nrm = np.linalg.norm(can.rmatvec(u[n:n + m]))
                by = float(b_hat @ u[n:n + m])
                if cx < -1e-12 and ax_nrm * max(1.0, abs(cx)) <= -tol * cx:
                    status = "unbounded"
                    break
                if by < -1e-12 and aty_nrm * max(1.0, abs(by)) <= -tol * by:
                    status = "infeasible"
                    break

    if x is None:
        tau_c = max(u[-1], 1e-10)
        x, y, s, pres, dres, gap, pobj = _residuals(
            can, e, f, beta, gamma, u[:n] / tau_c, u[n:n + m] / tau_c,
            v[n:n + m] / tau_c)
    report = SolverReport(status, pobj, pres, dres, gap, it,
                          time.time() - t_start)
    return x, y, s, report


# --------------------------------------------------------------------------
# public interface
# --------------------------------------------------------------------------

def solve(prog: ConeProgram, tol: float = 1e-7, max_iter: int = 50_000,
          warm_start: dict | None = None, over_relax: float = 1.5,
          check_every: int = 25):
    """Solve the cone program; returns (Assignment, SolverReport).

    ``warm_start`` may provide primal block matrices. Deterministic for
    identical inputs. Infeasibility and unboundedness are reported
    through the status, never silently.
    """
    can = canonicalize(prog)
    warm_x = None
    if warm_start:
        warm_x = np.zeros(can.n)
        for name, mat in warm_start.items():
            off, blk = can.offsets[name]
            warm_x[off:off + blk.n_params] = blk.params_from_matrix(mat)
    # canonicalize again: equilibration mutates matrices, keep a fresh copy
    x, y, s, report = _solve_canonical(
        can, tol, max_iter, warm_x=warm_x, over_relax=over_relax,
        check_every=check_every)

    primal = {}
    for name, (off, blk) in can.offsets.items():
        primal[name] = blk.matrix_from_params(x[off:off + blk.n_params])
    eq_duals = y[:can.m_zero].copy()
    psd_duals = []
    off = can.m_zero
    for d in can.psd_dims:
        ln = svec_len(d)
        psd_duals.append(smat(y[off:off + ln], d))
        off += ln
    return Assignment(primal, eq_duals, psd_duals, x, y, s), report


def kkt_residuals(prog: ConeProgram, assignment: Assignment):
    """Conic KKT residuals (primal, dual, gap) recomputed from scratch.

    Primal: equality violation plus distance of each affine expression
    from the PSD cone. Dual: stationarity ||c + A^T y|| plus dual-cone
    violation. All normalized the same way the solver reports them.
    """
    can = canonicalize(prog)
    x = np.concatenate([
        blk.params_from_matrix(assignment.primal[blk.name])
        for blk in prog.blocks]) if prog.blocks else np.zeros(0)
    y = assignment.y
    if y.shape != (can.m,):
        raise SdpError("assignment dual vector does not match the program")
    s_expr = can.b - can.matvec(x)
    s_proj = can.project_primal_cone(s_expr)
    pres = np.linalg.norm(s_expr - s_proj)
    pres = (pres + np.linalg.norm(s_expr[:can.m_zero])) / (
        1.0 + np.linalg.norm(can.b))
    aty = can.rmatvec(y)
    dres = np.linalg.norm(aty + can.c)
    y_proj = can.project_dual_cone(y)
    dres = (dres + np.linalg.norm(y - y_proj)) / (1.0 + np.linalg.norm(can.c))
    pobj = float(can.c @ x)
    dobj = float(-can.b @ y)
    gap = abs(pobj - dobj) / (1.0 + abs(pobj) + abs(dobj))
    return pres, dres, gap


# --------------------------------------------------------------------------
# plain-text dump / load (debugging and external cross-checks)
# --------------------------------------------------------------------------

def _matrix_to_json(m):
    m = np.asarray(m)
    if np.iscomplexobj(m):
        return {"re": np.real(m).tolist(), "im": np.imag(m).tolist()}
    return m.tolist()


def _matrix_from_json(obj):
    if isinstance(obj, dict):
        return np.asarray(obj["re"]) + 1j * np.asarray(obj["im"])
    return np.asarray(obj, dtype=float)


def _op_to_json(op):
    if scipy.sparse.issparse(op):
        coo = op.tocoo()
        return {"shape": list(op.shape),
                "entries": [[int(i), int(j), float(v)]
                            for i, j, v in zip(coo.row, coo.col, coo.data)]}
    op = np.asarray(op, dtype=float)
    nz = np.nonzero(op)
    return {"shape": list(op.shape),
            "entries": [[int(i), int(j), float(op[i, j])]
                        for i, j in zip(*nz)]}


def _op_from_json(obj):
    shape = tuple(obj["shape"])
    entries = obj["entries"]
    if not entries:
        return scipy.sparse.csr_matrix(shape)
    i, j, v = zip(*entries)
    return scipy.sparse.csr_matrix((v, (i, j)), shape=shape)


def dump_program(prog: ConeProgram, path):
    """Serialize to a documented JSON text format."""
    doc = {
        "format": "risloc-cone-program-1",
        "blocks": [{"name": b.name, "dim": b.dim, "kind": b.kind}
                   for b in prog.blocks],
        "objective": {k: np.asarray(v, dtype=float).tolist()
                      for k, v in prog.objective.items()},
        "equalities": [{"terms": {k: np.asarray(v, dtype=float).tolist()
                                  for k, v in eq.terms.items()},
                        "rhs": eq.rhs} for eq in prog.equalities],
        "psd": [{"dim": k.dim, "kind": k.kind,
                 "const": _matrix_to_json(k.const),
                 "terms": {name: _op_to_json(op) for name, op in k.terms.items()}}
                for k in prog.psd_constraints],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_program(path) -> ConeProgram:
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != "risloc-cone-program-1":
        raise SdpError("unrecognized program format")
    blocks = [VarBlock(b["name"], b["dim"], b["kind"]) for b in doc["blocks"]]
    objective = {k: np.asarray(v) for k, v in doc["objective"].items()}
    equalities = [Equality({k: np.asarray(v) for k, v in e["terms"].items()},
                           float(e["rhs"])) for e in doc["equalities"]]
    psd = [PsdConstraint(k["dim"], k["kind"], _matrix_from_json(k["const"]),
                         {name: _op_from_json(op)
                          for name, op in k["terms"].items()})
           for k in doc["psd"]]
    return ConeProgram(blocks, objective, equalities, psd)
