"""Brownian increment tables and noise contributions to the scheme load.

Increments follow the convention that the first time step carries no noise
(Delta_1 beta = 0), so every stochastic run starts with one deterministic
step.  Each Monte-Carlo path uses seed = base_seed + path_index.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .assembly import Discretization
from .grid import Grid


@dataclass(frozen=True)
class IncrementTable:
    """Increments Delta_n beta_k, shape (N, r); row n=1 (index 0) is zero."""

    N: int
    tau: float
    r: int
    seed: int
    increments: np.ndarray = field(repr=False)

    @property
    def cumulative(self) -> np.ndarray:
        """W(t_n) for n = 0..N, shape (N + 1, r); W(t_0) = 0.

        Because the first increment is dropped, W(t_1) = 0 as well: the
        discrete path starts moving after the first step.
        """
        W = np.zeros((self.N + 1, self.r))
        np.cumsum(self.increments, axis=0, out=W[1:])
        return W


def brownian_increments(N: int, tau: float, r: int, seed: int) -> IncrementTable:
    if N < 1 or r < 1 or tau <= 0:
        raise ValueError("need N >= 1, r >= 1, tau > 0")
    rng = np.random.default_rng(seed)
    inc = np.zeros((N, r))
    if N > 1:
        inc[1:] = rng.normal(0.0, np.sqrt(tau), size=(N - 1, r))
    return IncrementTable(N=N, tau=tau, r=r, seed=seed, increments=inc)


@dataclass(frozen=True)
class NoiseModel:
    """Noise kinds: none; linear sigma(u) = u (one mode); spacetime
    sigma0 * sum_k u chi_k / |D_k| (one mode per cell)."""

    kind: str = "none"
    sigma0: float = 1.0

    def __post_init__(self):
        if self.kind not in ("none", "linear", "spacetime"):
            raise ValueError(f"unknown noise kind {self.kind!r}")

    def modes(self, grid: Grid) -> int:
        if self.kind == "none":
            return 1  # placeholder stream, never consumed
        if self.kind == "linear":
            return 1
        return grid.n_cells

    @property
    def lambda_b(self) -> float:
        """Monotonicity shift entering the step-size restriction."""
        if self.kind == "none":
            return 0.0
        if self.kind == "linear":
            return 2.0
        return 2.0  # conservative default; not derived for spacetime noise


def noise_load(model: NoiseModel, disc: Discretization, prev: np.ndarray,
               inc_row: np.ndarray) -> np.ndarray:
    """Load vector with entries (sigma^r(u^{n-1}) Dbeta_n, psi_i)_{L^2}."""
    grid = disc.grid
    inc_row = np.asarray(inc_row, dtype=float)
    if inc_row.shape != (model.modes(grid),):
        raise ValueError(f"expected {model.modes(grid)} increment entries, "
                         f"got shape {inc_row.shape}")
    if model.kind == "none":
        return np.zeros(grid.n_cells)
    prev = np.asarray(prev, dtype=float)
    if model.kind == "linear":
        # (u^{n-1} Dbeta, psi_i) = Dbeta * (M @ c) since M_ij = (phi_j, psi_i)
        return float(inc_row[0]) * (disc.mass @ grid.flatten(prev))
    # spacetime: sigma0 * sum_k Dbeta_k |D_k|^-1 int_{D_k} u_h psi_i;
    # weight the quadrature values of u_h by the per-cell factor and take
    # the psi load.
    F = disc.field_at_quad(prev)
    w = model.sigma0 * grid.unflatten(inc_row) / grid.cell_volume
    if grid.d == 1:
        G = F * w[:, None]
    else:
        G = F * w[:, None, :, None]
    return grid.flatten(disc.psi_load(G))
