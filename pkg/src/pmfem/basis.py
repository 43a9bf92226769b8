"""Closed-form evaluation of the sparse H^-1 finite element basis.

The 1D basis couples a piecewise constant function phi_i with its exact
Dirichlet inverse Laplacian psi_i = (-Delta)^{-1} phi_i, a C^1 piecewise
quadratic with the same three-cell support.  In d >= 2 the basis is built
from tensor products of the 1D pairs so that psi remains the exact inverse
Laplacian of phi.
"""

from __future__ import annotations

import numpy as np

from .grid import Grid


def tensor_prefactor(d: int, h: float) -> float:
    """Scaling constant of the tensor-product basis; 1 in one dimension."""
    if d == 1:
        return 1.0
    return (3.0 / d ** (1.0 / (d - 1)) / h**2) ** (d - 1)


def _phi_values(J: int, b: np.ndarray, off: np.ndarray) -> np.ndarray:
    """Values of the piecewise constant basis b (0-based) on cell b + off."""
    interior = (b > 0) & (b < J - 1)
    val = np.zeros(np.broadcast(b, off).shape)
    val = np.where(interior & (np.abs(off) == 1), -0.5, val)
    val = np.where(interior & (off == 0), 1.0, val)
    val = np.where((b == 0) & (off == 0), 1.5, val)
    val = np.where((b == 0) & (off == 1), -0.5, val)
    val = np.where((b == J - 1) & (off == 0), 1.5, val)
    val = np.where((b == J - 1) & (off == -1), -0.5, val)
    return val


def _psi_values(J: int, h: float, L: float, b: np.ndarray, off: np.ndarray,
                x: np.ndarray) -> np.ndarray:
    """Values of the quadratic basis b (0-based) at x, given x lies in cell b + off."""
    r = x - (-L + b * h)  # coordinate relative to the left edge of cell b
    interior = (b > 0) & (b < J - 1)
    left_b = b == 0
    right_b = b == J - 1

    val = np.zeros(np.broadcast(b, off, x).shape)
    val = np.where(interior & (off == -1), 0.25 * (r + h) ** 2, val)
    val = np.where(interior & (off == 0), -0.5 * (r - 0.5 * h) ** 2 + 0.375 * h**2, val)
    val = np.where(interior & (off == 1), 0.25 * (2.0 * h - r) ** 2, val)

    val = np.where(left_b & (off == 0), -0.75 * r**2 + h * r, val)
    s = r - h
    val = np.where(left_b & (off == 1),
                   0.25 * s**2 - 0.5 * h * s + 0.25 * h**2, val)

    t = -r  # distance below the node x_{J-1}
    val = np.where(right_b & (off == -1),
                   0.25 * t**2 - 0.5 * h * t + 0.25 * h**2, val)
    u = h - r
    val = np.where(right_b & (off == 0), -0.75 * u**2 + h * u, val)
    return val


def _axis_eval(grid: Grid, i, x, kind: str) -> np.ndarray:
    """Evaluate one 1D basis function (1-based index i) at coordinates x."""
    i = np.asarray(i)
    if np.any(i < 1) or np.any(i > grid.J):
        raise ValueError(f"basis index out of range 1..{grid.J}")
    x = np.asarray(x, dtype=float)
    cells = grid.axis_cells(x) - 1  # 0-based cell indices
    b = i - 1
    off = cells - b
    inside = np.abs(off) <= 1
    off = np.where(inside, off, 0)
    if kind == "phi":
        val = _phi_values(grid.J, b, off)
    else:
        val = _psi_values(grid.J, grid.h, grid.L, b, off, x)
    return np.where(inside, val, 0.0)


def phi1d_eval(grid: Grid, i, x):
    """Value of the 1D piecewise constant basis function phi_i at x."""
    return _axis_eval(grid, i, x, "phi")


def psi1d_eval(grid: Grid, i, x):
    """Value of psi_i = (-Delta)^{-1} phi_i at x (piecewise quadratic)."""
    return _axis_eval(grid, i, x, "psi")


def _point_coords(grid: Grid, x):
    """Normalize point input to a tuple of d coordinate arrays."""
    if isinstance(x, (tuple, list)):
        coords = [np.asarray(c, dtype=float) for c in x]
    else:
        arr = np.asarray(x, dtype=float)
        if grid.d == 1:
            coords = [arr]
        elif arr.ndim >= 1 and arr.shape[-1] == grid.d:
            coords = [arr[..., k] for k in range(grid.d)]
        else:
            raise ValueError("expected points with last axis of length d")
    if len(coords) != grid.d:
        raise ValueError(f"expected {grid.d} coordinate arrays")
    return coords


def phi_nd_eval(grid: Grid, mi, x):
    """Value of the tensor-product basis function for multi-index mi at x."""
    coords = _point_coords(grid, x)
    if grid.d == 1:
        return phi1d_eval(grid, mi[0], coords[0])
    pref = tensor_prefactor(grid.d, grid.h)
    total = 0.0
    for k in range(grid.d):
        term = phi1d_eval(grid, mi[k], coords[k])
        for l in range(grid.d):
            if l != k:
                term = term * psi1d_eval(grid, mi[l], coords[l])
        total = total + term
    return pref * total


def psi_nd_eval(grid: Grid, mi, x):
    """Value of the tensor-product inverse-Laplacian basis function at x."""
    coords = _point_coords(grid, x)
    if grid.d == 1:
        return psi1d_eval(grid, mi[0], coords[0])
    pref = tensor_prefactor(grid.d, grid.h)
    term = psi1d_eval(grid, mi[0], coords[0])
    for k in range(1, grid.d):
        term = term * psi1d_eval(grid, mi[k], coords[k])
    return pref * term


def eval_field(grid: Grid, coeffs: np.ndarray, x):
    """Evaluate u_h = sum_i c_i phi_i at points x.

    Only the <= 3^d basis functions whose support contains each point
    contribute.  coeffs is indexed [i_1 - 1, ..., i_d - 1].
    """
    coeffs = np.asarray(coeffs)
    if coeffs.shape != grid.shape:
        coeffs = grid.unflatten(coeffs)
    coords = _point_coords(grid, x)
    cells = [grid.axis_cells(c) - 1 for c in coords]  # 0-based
    out = np.zeros(np.broadcast(*coords).shape)
    J = grid.J

    if grid.d == 1:
        m = cells[0]
        for off in (-1, 0, 1):
            b = m + off
            valid = (b >= 0) & (b < J)
            bc = np.clip(b, 0, J - 1)
            val = _phi_values(J, bc, -off * np.ones_like(bc))
            out += np.where(valid, coeffs[bc] * val, 0.0)
        return out

    pref = tensor_prefactor(grid.d, grid.h)
    m1, m2 = cells
    x1, x2 = coords
    phi_v = [[None] * 3 for _ in range(2)]
    psi_v = [[None] * 3 for _ in range(2)]
    for axis, (m, xc) in enumerate(((m1, x1), (m2, x2))):
        for j, off in enumerate((-1, 0, 1)):
            b = np.clip(m + off, 0, J - 1)
            co = -off * np.ones_like(b)
            phi_v[axis][j] = _phi_values(J, b, co)
            psi_v[axis][j] = _psi_values(J, grid.h, grid.L, b, co, xc)
    for j1, o1 in enumerate((-1, 0, 1)):
        b1 = m1 + o1
        v1 = (b1 >= 0) & (b1 < J)
        b1c = np.clip(b1, 0, J - 1)
        for j2, o2 in enumerate((-1, 0, 1)):
            b2 = m2 + o2
            valid = v1 & (b2 >= 0) & (b2 < J)
            b2c = np.clip(b2, 0, J - 1)
            shape = phi_v[0][j1] * psi_v[1][j2] + psi_v[0][j1] * phi_v[1][j2]
            out += np.where(valid, coeffs[b1c, b2c] * shape, 0.0)
    return pref * out
