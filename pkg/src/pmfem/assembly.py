"""Quadrature, sparse matrix assembly and nonlinear operator evaluation.

All integrals are computed cell by cell with tensor Gauss-Legendre rules.
Within a cell every basis function is polynomial of degree <= 2 per
direction, so the default 3-point rule integrates all bilinear forms
(mass, L^2 Gram) exactly; it is an approximation only for the nonlinear
term |u|^{p-2} u with non-integer behaviour.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .basis import tensor_prefactor
from .grid import Grid


# ---------------------------------------------------------------------------
# quadrature


@dataclass(frozen=True)
class QuadratureRule:
    """Gauss-Legendre nodes/weights on the unit interval (per direction)."""

    q: int
    nodes: np.ndarray
    weights: np.ndarray


def make_rule(q: int = 3) -> QuadratureRule:
    if q < 1:
        raise ValueError("quadrature order must be >= 1")
    x, w = np.polynomial.legendre.leggauss(q)
    return QuadratureRule(q, 0.5 * (x + 1.0), 0.5 * w)


def alpha(z, p: float):
    """Porous-medium nonlinearity |z|^{p-2} z (continuous at 0 for p > 1)."""
    return np.sign(z) * np.abs(z) ** (p - 1.0)


def alpha_prime(z, p: float, reg: float = 0.0):
    """Derivative (p-1)|z|^{p-2}, optionally shifted by reg for p < 2."""
    if reg > 0.0:
        return (p - 1.0) * (np.abs(z) + reg) ** (p - 2.0)
    return (p - 1.0) * np.abs(z) ** (p - 2.0)


# ---------------------------------------------------------------------------
# per-cell basis tables


def basis_cell_tables(J: int, h: float, rule: QuadratureRule):
    """1D basis values at the quadrature points of every cell.

    Returns (phi_tab, psi_tab) of shape (J, 3, q): entry [m, o, :] holds the
    values of basis b = m + o - 1 (0-based) at the quadrature points of cell
    m, and is zero when b falls outside 0..J-1.
    """
    q = rule.q
    s = h * rule.nodes  # local coordinate within a cell
    phi = np.zeros((J, 3, q))
    psi = np.zeros((J, 3, q))

    # interior formulas (basis b seen from its right / middle / left cell)
    phi[:, 0, :] = -0.5
    phi[:, 1, :] = 1.0
    phi[:, 2, :] = -0.5
    psi[:, 0, :] = 0.25 * (h - s) ** 2
    psi[:, 1, :] = -0.5 * (s - 0.5 * h) ** 2 + 0.375 * h**2
    psi[:, 2, :] = 0.25 * s**2

    # boundary basis functions and out-of-range entries
    phi[0, 0, :] = 0.0
    psi[0, 0, :] = 0.0
    phi[0, 1, :] = 1.5
    psi[0, 1, :] = -0.75 * s**2 + h * s
    phi[1, 0, :] = -0.5
    psi[1, 0, :] = 0.25 * s**2 - 0.5 * h * s + 0.25 * h**2

    phi[J - 1, 2, :] = 0.0
    psi[J - 1, 2, :] = 0.0
    phi[J - 1, 1, :] = 1.5
    psi[J - 1, 1, :] = -0.75 * (h - s) ** 2 + h * (h - s)
    phi[J - 2, 2, :] = -0.5
    psi[J - 2, 2, :] = 0.25 * (h - s) ** 2 - 0.5 * h * (h - s) + 0.25 * h**2
    return phi, psi


# ---------------------------------------------------------------------------
# separable field evaluation / load assembly (module-level, table-driven)


def _forward_1d(c, tab):
    """F[m, a] = sum_o c[m + o - 1] tab[m, o, a]."""
    J, _, q = tab.shape
    F = np.zeros((J, q))
    for o in range(3):
        lo, hi = max(0, 1 - o), min(J, J - o + 1)
        F[lo:hi] += c[lo + o - 1:hi + o - 1, None] * tab[lo:hi, o, :]
    return F


def _adjoint_1d(G, tab):
    """K[b] = sum_{o,a} G[b + 1 - o, a] tab[b + 1 - o, o, a]."""
    J, _, q = tab.shape
    K = np.zeros(J)
    for o in range(3):
        lo, hi = max(0, o - 1), min(J, J + o - 1)
        m = slice(lo + 1 - o, hi + 1 - o)
        K[lo:hi] += np.einsum("ma,ma->m", G[m], tab[m, o, :])
    return K


def _pass_axis0(arr, tab, q):
    """out[m, a, ...] = sum_o arr[m + o - 1, ...] tab[m, o, a]."""
    J = tab.shape[0]
    out = np.zeros((J, q) + arr.shape[1:])
    for o in range(3):
        lo, hi = max(0, 1 - o), min(J, J - o + 1)
        out[lo:hi] += arr[lo + o - 1:hi + o - 1, None] * tab[lo:hi, o, :].reshape(
            (hi - lo, q) + (1,) * (arr.ndim - 1))
    return out


def _pass_axis2(arr, tab, q):
    """out[m1, a, m2, b] = sum_o arr[m1, a, m2 + o - 1] tab[m2, o, b]."""
    J = tab.shape[0]
    out = np.zeros(arr.shape[:2] + (J, q))
    for o in range(3):
        lo, hi = max(0, 1 - o), min(J, J - o + 1)
        out[:, :, lo:hi, :] += arr[:, :, lo + o - 1:hi + o - 1, None] * tab[lo:hi, o, :]
    return out


def _rpass_axis2(G, tab):
    """out[m1, a, b2] = sum_{o,b} G[m1, a, b2 + 1 - o, b] tab[b2 + 1 - o, o, b]."""
    J = tab.shape[0]
    out = np.zeros(G.shape[:2] + (J,))
    for o in range(3):
        lo, hi = max(0, o - 1), min(J, J + o - 1)
        m = slice(lo + 1 - o, hi + 1 - o)
        out[:, :, lo:hi] += np.einsum("xamb,mb->xam", G[:, :, m, :], tab[m, o, :])
    return out


def _rpass_axis0(T, tab):
    """out[b1, ...] = sum_{o,a} T[b1 + 1 - o, a, ...] tab[b1 + 1 - o, o, a]."""
    J = tab.shape[0]
    out = np.zeros((J,) + T.shape[2:])
    for o in range(3):
        lo, hi = max(0, o - 1), min(J, J + o - 1)
        m = slice(lo + 1 - o, hi + 1 - o)
        out[lo:hi] += np.einsum("max,ma->mx", T[m], tab[m, o, :])
    return out


def field_values(grid: Grid, phi_tab, psi_tab, coeffs):
    """Values of u_h at the quadrature points of every cell.

    Shape (J, q) for d=1 and (J, q, J, q) for d=2 (cell index, point index
    per direction, first direction leading).
    """
    c = np.asarray(coeffs).reshape(grid.shape, order="F") if np.asarray(coeffs).ndim == 1 \
        else np.asarray(coeffs)
    q = phi_tab.shape[2]
    if grid.d == 1:
        return _forward_1d(c, phi_tab)
    F = _pass_axis2(_pass_axis0(c, phi_tab, q), psi_tab, q)
    F += _pass_axis2(_pass_axis0(c, psi_tab, q), phi_tab, q)
    return tensor_prefactor(2, grid.h) * F


def phi_load(grid: Grid, phi_tab, psi_tab, G):
    """Entries int g phi_i dx from weighted point values G (weights included)."""
    if grid.d == 1:
        return _adjoint_1d(G, phi_tab)
    K = _rpass_axis0(_rpass_axis2(G, psi_tab), phi_tab)
    K += _rpass_axis0(_rpass_axis2(G, phi_tab), psi_tab)
    return tensor_prefactor(2, grid.h) * K


def psi_load_from_values(grid: Grid, phi_tab, psi_tab, G):
    """Entries int g psi_i dx from weighted point values G (weights included)."""
    if grid.d == 1:
        return _adjoint_1d(G, psi_tab)
    K = _rpass_axis0(_rpass_axis2(G, psi_tab), psi_tab)
    return tensor_prefactor(2, grid.h) * K


# ---------------------------------------------------------------------------
# cached per-grid discretization


class Discretization:
    """Per-grid cache of quadrature tables, matrices and factorizations.

    Immutable after construction as far as callers are concerned; safe to
    share read-only across Monte-Carlo workers.
    """

    def __init__(self, grid: Grid, quad_order: int = 3):
        self.grid = grid
        self.rule = make_rule(quad_order)
        self.phi_tab, self.psi_tab = basis_cell_tables(grid.J, grid.h, self.rule)

    # -- quadrature geometry ------------------------------------------------

    @cached_property
    def quad_points(self):
        """Per-axis quadrature coordinates, shape (J, q)."""
        g = self.grid
        return g.nodes[:-1, None] + g.h * self.rule.nodes[None, :]

    @cached_property
    def quad_weights(self):
        """Tensor quadrature weights including the cell Jacobian."""
        w = self.grid.h * self.rule.weights
        if self.grid.d == 1:
            return w
        return np.einsum("a,b->ab", w, w)

    def eval_on_quad(self, f):
        """Evaluate a callable f at all quadrature points."""
        xq = self.quad_points
        if self.grid.d == 1:
            return np.asarray(f(xq), dtype=float)
        X1 = xq[:, :, None, None]
        X2 = xq[None, None, :, :]
        return np.asarray(f(X1, X2), dtype=float) * np.ones(
            (self.grid.J, self.rule.q, self.grid.J, self.rule.q))

    # -- field evaluation and loads -----------------------------------------

    def field_at_quad(self, coeffs):
        return field_values(self.grid, self.phi_tab, self.psi_tab, coeffs)

    def phi_load(self, values):
        """int g phi_i dx from point values g (weights applied here)."""
        if self.grid.d == 1:
            G = values * self.quad_weights[None, :]
        else:
            G = values * self._w4
        return phi_load(self.grid, self.phi_tab, self.psi_tab, G)

    def psi_load(self, f_or_values):
        """Entries (w, psi_i)_{L^2} for a callable or point-value array w."""
        values = self.eval_on_quad(f_or_values) if callable(f_or_values) \
            else np.asarray(f_or_values, dtype=float)
        if self.grid.d == 1:
            G = values * self.quad_weights[None, :]
        else:
            G = values * self._w4
        return psi_load_from_values(self.grid, self.phi_tab, self.psi_tab, G)

    @cached_property
    def _w4(self):
        """Quadrature weights broadcast to the (J, q, J, q) layout."""
        w = self.grid.h * self.rule.weights
        return w[None, :, None, None] * w[None, None, None, :]

    # -- nonlinear operator --------------------------------------------------

    def nonlinear_term(self, coeffs, p: float):
        """K(u)_i = int |u_h|^{p-2} u_h phi_i dx, as an array in grid shape."""
        F = self.field_at_quad(coeffs)
        out = self.phi_load(alpha(F, p))
        return out

    def nonlinear_jacobian(self, coeffs, p: float, reg: float | None = None) -> sp.csr_matrix:
        """Sparse Jacobian J_ij = int alpha'(u_h) phi_j phi_i dx (PSD)."""
        if reg is None:
            reg = 1e-12 if p < 2.0 else 0.0
        F = self.field_at_quad(coeffs)
        g = alpha_prime(F, p, reg)
        if self.grid.d == 1:
            return self._scatter_1d(self._local_1d(g, self.phi_tab, self.phi_tab))
        return self._scatter_2d(self._local_2d(g, self._bphi, self._bphi))

    def nonlinear_jacobian_banded(self, coeffs, p: float, reg: float | None = None):
        """d=1 Jacobian in solve_banded layout (5 diagonals), plus nothing else."""
        assert self.grid.d == 1
        if reg is None:
            reg = 1e-12 if p < 2.0 else 0.0
        F = self.field_at_quad(coeffs)
        g = alpha_prime(F, p, reg)
        L = self._local_1d(g, self.phi_tab, self.phi_tab)
        J = self.grid.J
        ab = np.zeros((5, J))
        m = np.arange(J)
        for o in range(3):
            for pp in range(3):
                cols = m + pp - 1
                ok = (m + o - 1 >= 0) & (m + o - 1 < J) & (cols >= 0) & (cols < J)
                np.add.at(ab[2 + o - pp], cols[ok], L[ok, o, pp])
        return ab

    def _local_1d(self, g, tab_a, tab_b):
        gw = g * self.quad_weights[None, :]
        return np.einsum("ma,moa,mpa->mop", gw, tab_a, tab_b)

    def _local_2d(self, g, B_a, B_b):
        gw = g * self._w4
        n = self.grid.J**2
        qq = self.rule.q**2
        # BG[m1, m2, o, a, b] = B_a[m1, m2, o, a, b] * gw[m1, a, m2, b]
        BG = B_a * gw.transpose(0, 2, 1, 3)[:, :, None, :, :]
        L = np.matmul(BG.reshape(n, 9, qq), B_b.reshape(n, 9, qq).transpose(0, 2, 1))
        return L  # (n_cells, 9, 9)

    # -- static 2D basis tensors and scatter patterns -------------------------

    @cached_property
    def _bphi(self):
        """B[m1, m2, (o1 o2), a, b]: tensor basis phi values per cell."""
        pref = tensor_prefactor(2, self.grid.h)
        B = np.einsum("xoa,ypb->xyopab", self.phi_tab, self.psi_tab)
        B += np.einsum("xoa,ypb->xyopab", self.psi_tab, self.phi_tab)
        J, q = self.grid.J, self.rule.q
        return pref * B.reshape(J, J, 9, q, q)

    @cached_property
    def _bpsi(self):
        pref = tensor_prefactor(2, self.grid.h)
        B = np.einsum("xoa,ypb->xyopab", self.psi_tab, self.psi_tab)
        J, q = self.grid.J, self.rule.q
        return pref * B.reshape(J, J, 9, q, q)

    @cached_property
    def _scatter_idx_1d(self):
        J = self.grid.J
        m = np.arange(J)[:, None, None]
        o = np.arange(3)[None, :, None]
        pp = np.arange(3)[None, None, :]
        rows = m + o - 1
        cols = m + pp - 1
        valid = (rows >= 0) & (rows < J) & (cols >= 0) & (cols < J)
        rows, cols = np.broadcast_arrays(rows, cols)
        return rows[valid], cols[valid], valid

    def _scatter_1d(self, L) -> sp.csr_matrix:
        rows, cols, valid = self._scatter_idx_1d
        J = self.grid.J
        mat = sp.coo_matrix((L[valid], (rows, cols)), shape=(J, J))
        return mat.tocsr()

    @cached_property
    def _scatter_idx_2d(self):
        """Fixed COO->CSR mapping for cell-local 9x9 matrices in d=2."""
        J = self.grid.J
        n = J * J
        m1 = np.arange(J)[:, None, None]
        m2 = np.arange(J)[None, :, None]
        oo = np.arange(9)[None, None, :]
        b1 = m1 + oo // 3 - 1  # offset flattening matches the (o1, o2) reshape
        b2 = m2 + oo % 3 - 1
        ok = (b1 >= 0) & (b1 < J) & (b2 >= 0) & (b2 < J)
        flat = np.where(ok, b1 + J * b2, -1)  # (J, J, 9)
        rows = np.broadcast_to(flat[:, :, :, None], (J, J, 9, 9))
        cols = np.broadcast_to(flat[:, :, None, :], (J, J, 9, 9))
        valid = (rows >= 0) & (cols >= 0)
        r = rows[valid].astype(np.int64)
        c = cols[valid].astype(np.int64)
        key = r * n + c
        order = np.argsort(key, kind="stable")
        sk = key[order]
        new = np.empty(sk.size, dtype=bool)
        new[0] = True
        np.not_equal(sk[1:], sk[:-1], out=new[1:])
        pos_sorted = np.cumsum(new) - 1
        pos = np.empty_like(pos_sorted)
        pos[order] = pos_sorted
        uk = sk[new]
        indices = (uk % n).astype(np.int32)
        urows = uk // n
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, urows + 1, 1)
        indptr = np.cumsum(indptr)
        return valid, pos, indices, indptr, int(uk.size)

    def _scatter_2d(self, L) -> sp.csr_matrix:
        valid, pos, indices, indptr, nnz = self._scatter_idx_2d
        J = self.grid.J
        vals = L.reshape(J, J, 9, 9)[valid]
        data = np.bincount(pos, weights=vals, minlength=nnz)
        n = J * J
        return sp.csr_matrix((data, indices, indptr), shape=(n, n))

    # -- matrices -------------------------------------------------------------

    @cached_property
    def mass(self) -> sp.csr_matrix:
        """H^-1 mass matrix m_ij = (phi_j, psi_i)_{L^2}; symmetric positive definite."""
        if self.grid.d == 1:
            ones = np.ones((self.grid.J, self.rule.q))
            M = self._scatter_1d(self._local_1d(ones, self.phi_tab, self.psi_tab))
        else:
            ones = np.ones((self.grid.J, self.rule.q, self.grid.J, self.rule.q))
            M = self._scatter_2d(self._local_2d(ones, self._bphi, self._bpsi))
        M = (M + M.T) * 0.5  # symmetrize away quadrature roundoff
        return M.tocsr()

    @cached_property
    def gram(self) -> sp.csr_matrix:
        """L^2 Gram matrix (phi_j, phi_i)_{L^2}."""
        if self.grid.d == 1:
            ones = np.ones((self.grid.J, self.rule.q))
            G = self._scatter_1d(self._local_1d(ones, self.phi_tab, self.phi_tab))
        else:
            ones = np.ones((self.grid.J, self.rule.q, self.grid.J, self.rule.q))
            G = self._scatter_2d(self._local_2d(ones, self._bphi, self._bphi))
        G = (G + G.T) * 0.5
        return G.tocsr()

    @cached_property
    def mass_banded(self):
        """d=1 mass matrix in solve_banded layout."""
        assert self.grid.d == 1
        dia = self.mass.todia()
        J = self.grid.J
        ab = np.zeros((5, J))
        for off, row in zip(dia.offsets, dia.data):
            ab[2 - off, :] = row
        return ab

    @cached_property
    def mass_solve(self):
        """Cached direct factorization of the mass matrix."""
        return spla.factorized(self.mass.tocsc())

    def project(self, rhs_psi: np.ndarray) -> np.ndarray:
        """Solve M c = rhs for coefficient array in grid shape."""
        c = self.mass_solve(np.asarray(rhs_psi).reshape(self.grid.n_cells, order="F")
                            if np.asarray(rhs_psi).ndim > 1 else np.asarray(rhs_psi))
        return self.grid.unflatten(c)


def dump_matrix_triplets(mat: sp.spmatrix, path) -> None:
    """Write a sparse matrix as 'i j value' triplet lines (debug format)."""
    coo = mat.tocoo()
    with open(path, "w") as fh:
        for i, j, v in zip(coo.row, coo.col, coo.data):
            fh.write(f"{i} {j} {v:.17g}\n")
