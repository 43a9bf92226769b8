"""Uniform rectangular partitions of (-L, L)^d with multi-index addressing."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from functools import cached_property

import numpy as np

# Relative slack used to decide whether a coordinate sits exactly on a node.
_NODE_TOL = 1e-9


@dataclass(frozen=True)
class Grid:
    """Uniform partition of the box (-L, L)^d into J^d half-open cells.

    Nodes along each axis are x_k = -L + k*h for k = 0..J with h = 2L/J.
    Cell i (1-based multi-index) is the box prod_k (x_{i_k - 1}, x_{i_k}];
    the point x = -L is assigned to the first cell so that every point of
    the closed domain belongs to exactly one cell.

    Flat indices are 0-based with the first component varying fastest.
    """

    L: float
    J: int
    d: int

    def __post_init__(self) -> None:
        if self.L <= 0:
            raise ValueError(f"domain half-width must be positive, got L={self.L}")
        if self.J < 4:
            raise ValueError(f"need at least 4 cells per direction, got J={self.J}")
        if self.d not in (1, 2):
            raise ValueError(f"only dimensions 1 and 2 are supported, got d={self.d}")

    @property
    def h(self) -> float:
        return 2.0 * self.L / self.J

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.J,) * self.d

    @property
    def n_cells(self) -> int:
        return self.J**self.d

    @property
    def cell_volume(self) -> float:
        return self.h**self.d

    @cached_property
    def nodes(self) -> np.ndarray:
        return -self.L + self.h * np.arange(self.J + 1)

    @cached_property
    def cell_centers(self) -> np.ndarray:
        return self.nodes[:-1] + 0.5 * self.h

    # -- point location ----------------------------------------------------

    def axis_cells(self, x) -> np.ndarray:
        """1-based cell indices along one axis for coordinates in (-L, L].

        Coordinates that coincide with a node x_k (up to a relative slack)
        are assigned to the cell with right endpoint x_k; x = -L maps to
        cell 1.
        """
        t = (np.asarray(x, dtype=float) + self.L) / self.h
        k = np.rint(t)
        on_node = np.abs(t - k) <= _NODE_TOL * self.J
        cells = np.where(on_node, k, np.ceil(t)).astype(int)
        cells = np.where(cells == 0, 1, cells)
        if np.any(cells < 1) or np.any(cells > self.J):
            raise ValueError("point outside the domain (-L, L]^d")
        return cells

    def cell_of_point(self, x) -> tuple[int, ...]:
        """Multi-index of the unique cell containing the point x."""
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if x.shape != (self.d,):
            raise ValueError(f"expected a point with {self.d} coordinates")
        return tuple(int(self.axis_cells(c)) for c in x)

    # -- index arithmetic --------------------------------------------------

    def flat_index(self, mi: tuple[int, ...]) -> int:
        """0-based flat index of a 1-based multi-index (first axis fastest)."""
        self._check_index(mi)
        flat = 0
        for k in reversed(range(self.d)):
            flat = flat * self.J + (mi[k] - 1)
        return flat

    def multi_index(self, flat: int) -> tuple[int, ...]:
        if not 0 <= flat < self.n_cells:
            raise ValueError(f"flat index {flat} out of range")
        out = []
        for _ in range(self.d):
            out.append(flat % self.J + 1)
            flat //= self.J
        return tuple(out)

    def flatten(self, values: np.ndarray) -> np.ndarray:
        """Flatten an array indexed [i_1 - 1, ..., i_d - 1] to a vector."""
        return np.asarray(values).reshape(self.n_cells, order="F")

    def unflatten(self, vec: np.ndarray) -> np.ndarray:
        return np.asarray(vec).reshape(self.shape, order="F")

    # -- stencil neighborhoods ---------------------------------------------

    def stencil_neighbors(self, mi: tuple[int, ...]):
        """Cells sharing a closure point with cell mi, as (index, offset) pairs."""
        self._check_index(mi)
        out = []
        for off in itertools.product((-1, 0, 1), repeat=self.d):
            nb = tuple(mi[k] + off[k] for k in range(self.d))
            if all(1 <= nb[k] <= self.J for k in range(self.d)):
                out.append((nb, off))
        return out

    def _check_index(self, mi: tuple[int, ...]) -> None:
        if len(mi) != self.d or not all(1 <= c <= self.J for c in mi):
            raise ValueError(f"invalid multi-index {mi} for J={self.J}, d={self.d}")
