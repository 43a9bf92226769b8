"""Restriction operators between functions, cell averages and coefficients.

Three ways of moving data onto the mesh live here: the cell-average
restriction v -> (|D_i|^-1 int_{D_i} v)_i, the implementable restriction
that inverts the matrix of basis cell-averages (whose interior rows are a
scaled 9-point / 3-point discrete Laplacian), and the H^-1 projection that
solves against the mass matrix.
"""

from __future__ import annotations

from functools import lru_cache

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import Discretization, make_rule
from .basis import tensor_prefactor
from .grid import Grid


# ---------------------------------------------------------------------------
# cell averages


def cell_average(grid: Grid, v, rule=None) -> np.ndarray:
    """Cell averages of a pointwise-evaluable function, grid-shaped array."""
    rule = rule or make_rule(3)
    xq = grid.nodes[:-1, None] + grid.h * rule.nodes[None, :]
    w = rule.weights
    if grid.d == 1:
        return np.asarray(v(xq), dtype=float) @ w
    X1 = xq[:, :, None, None]
    X2 = xq[None, None, :, :]
    vals = np.asarray(v(X1, X2), dtype=float) * np.ones(
        (grid.J, rule.q, grid.J, rule.q))
    return np.einsum("ambn,m,n->ab", vals, w, w)


def cell_average_coeffs(grid: Grid, coeffs) -> np.ndarray:
    """Cell averages of the finite element field with given coefficients."""
    A = avg_matrix(grid)
    return grid.unflatten(A @ grid.flatten(np.asarray(coeffs, dtype=float)))


@lru_cache(maxsize=None)
def _avg_factors_1d(grid: Grid):
    """1D matrices P, Q with P[m, b] = h^-1 int_{cell m} phi_b (same for psi)."""
    rule = make_rule(3)
    from .assembly import basis_cell_tables

    phi_tab, psi_tab = basis_cell_tables(grid.J, grid.h, rule)
    J = grid.J
    rows, cols, pv, qv = [], [], [], []
    for o in range(3):
        m = np.arange(max(0, 1 - o), min(J, J - o + 1))
        b = m + o - 1
        rows.append(m)
        cols.append(b)
        pv.append(phi_tab[m, o, :] @ rule.weights)
        qv.append(psi_tab[m, o, :] @ rule.weights)
    rows = np.concatenate(rows)
    cols = np.concatenate(cols)
    P = sp.coo_matrix((np.concatenate(pv), (rows, cols)), shape=(J, J)).tocsr()
    Q = sp.coo_matrix((np.concatenate(qv), (rows, cols)), shape=(J, J)).tocsr()
    return P, Q


@lru_cache(maxsize=None)
def avg_matrix(grid: Grid) -> sp.csr_matrix:
    """Matrix of basis cell averages: (A c)_m = |D_m|^-1 int_{D_m} u_h.

    Interior rows coincide with (h^2/2 in 1D, 3h^2/8 in 2D) times the
    Dirichlet-ghost discrete Laplacian; boundary rows carry the exact
    averages of the one-sided basis functions, which makes A invertible and
    the round trip cell_average(tilde_restriction(v)) exact.
    """
    axis = Grid(grid.L, grid.J, 1)
    P, Q = _avg_factors_1d(axis)
    if grid.d == 1:
        return P.copy()
    pref = tensor_prefactor(2, grid.h)
    return (pref * (sp.kron(Q, P) + sp.kron(P, Q))).tocsr()


@lru_cache(maxsize=None)
def _avg_solve(grid: Grid):
    return spla.factorized(avg_matrix(grid).tocsc())


# ---------------------------------------------------------------------------
# discrete Laplacian (Dirichlet ghost cells)


def discrete_laplacian_apply(grid: Grid, f) -> np.ndarray:
    """Apply the negative discrete Laplacian stencil to a cell field.

    d=2: (8/(3h^2)) [f_i - (1/8) sum of the 8 neighbors]; d=1 analog
    (2/h^2) [f_i - (f_{i-1} + f_{i+1})/2].  Missing neighbors count as 0.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != grid.shape:
        f = grid.unflatten(f)
    if grid.d == 1:
        acc = np.zeros_like(f)
        acc[:-1] += f[1:]
        acc[1:] += f[:-1]
        return (2.0 / grid.h**2) * (f - 0.5 * acc)
    acc = np.zeros_like(f)
    for o1 in (-1, 0, 1):
        for o2 in (-1, 0, 1):
            if o1 == o2 == 0:
                continue
            s1 = slice(max(0, -o1), grid.J - max(0, o1))
            s2 = slice(max(0, -o2), grid.J - max(0, o2))
            t1 = slice(max(0, o1), grid.J - max(0, -o1))
            t2 = slice(max(0, o2), grid.J - max(0, -o2))
            acc[s1, s2] += f[t1, t2]
    return (8.0 / (3.0 * grid.h**2)) * (f - acc / 8.0)


@lru_cache(maxsize=None)
def laplacian_matrix(grid: Grid) -> sp.csr_matrix:
    """Sparse matrix of discrete_laplacian_apply on flattened cell fields."""
    J = grid.J
    if grid.d == 1:
        main = np.full(J, 2.0 / grid.h**2)
        off = np.full(J - 1, -1.0 / grid.h**2)
        return sp.diags([off, main, off], [-1, 0, 1]).tocsr()
    c = 8.0 / (3.0 * grid.h**2)
    A1 = sp.diags([np.ones(J - 1), np.ones(J - 1)], [-1, 1])
    I = sp.identity(J)
    nb = sp.kron(I, A1) + sp.kron(A1, I) + sp.kron(A1, A1)
    return (c * (sp.identity(J * J) - nb / 8.0)).tocsr()


# ---------------------------------------------------------------------------
# implementable restriction and H^-1 projection


def tilde_restriction(grid: Grid, v, rule=None) -> np.ndarray:
    """Coefficients whose field has the same cell averages as v.

    v may be a callable (averaged by quadrature) or a cell-average array.
    """
    if callable(v):
        vbar = cell_average(grid, v, rule)
    else:
        vbar = np.asarray(v, dtype=float)
    sol = _avg_solve(grid)(grid.flatten(vbar))
    return grid.unflatten(sol)


def h1neg_projection(disc: Discretization, v) -> np.ndarray:
    """H^-1-orthogonal projection of v onto the basis span.

    Solves M c = ((v, psi_i))_i; v is a callable or an array of values at
    the discretization's quadrature points.
    """
    return disc.project(disc.psi_load(v))
