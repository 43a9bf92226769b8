"""Implicit Euler time stepping for the very-weak scheme.

Each step solves M(u^n - u^{n-1}) + tau K(u^n) = tau b^n + s^n with
K(u)_i = int |u_h|^{p-2} u_h phi_i dx, by damped Newton.  The Jacobian
M + tau J_K is symmetric positive definite, so the 1D path uses a banded
direct solve and the 2D path mass-preconditioned conjugate gradients with
a sparse-LU fallback.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg as sla
import scipy.sparse.linalg as spla

from .assembly import Discretization
from .grid import Grid
from .noise import IncrementTable, NoiseModel, brownian_increments, noise_load


@dataclass(frozen=True)
class SchemeConfig:
    T: float
    N: int
    p: float
    forcing: object = None  # callable f(t, *coords) or None
    noise: NoiseModel = field(default_factory=NoiseModel)
    newton_tol: float = 1e-10
    newton_maxit: int = 50
    quad_order: int = 3

    def __post_init__(self):
        if self.T <= 0 or self.N < 1:
            raise ValueError("need T > 0 and N >= 1")
        if self.p <= 1:
            raise ValueError("nonlinearity exponent must exceed 1")
        tau_max = 1.0 / (2.0 * (1.0 + self.noise.lambda_b))
        if self.tau > tau_max:
            raise ValueError(
                f"step size tau={self.tau:.4g} exceeds the stability bound "
                f"{tau_max:.4g} for noise kind {self.noise.kind!r}")

    @property
    def tau(self) -> float:
        return self.T / self.N


class NewtonError(RuntimeError):
    def __init__(self, msg, residual):
        super().__init__(msg)
        self.residual = residual


@dataclass
class Trajectory:
    """Coefficient history u^0..u^N with the step-constant interpolants."""

    grid: Grid
    config: SchemeConfig
    seed: int
    coeffs: np.ndarray  # (N + 1, J^d)
    increments: IncrementTable | None = None
    energies: np.ndarray | None = None  # (u^n)^T M u^n per step
    lp_norms: np.ndarray | None = None  # ||u^n||_{L^p}^p per step

    @property
    def times(self) -> np.ndarray:
        return self.config.tau * np.arange(self.config.N + 1)

    def step_of(self, t: float) -> int:
        """Index n with t in ((n-1)tau, n tau]; t = 0 maps to n = 1."""
        tau = self.config.tau
        n = int(np.ceil(t / tau - 1e-12))
        return min(max(n, 1), self.config.N)

    def interp_right(self, t: float) -> np.ndarray:
        """u_tau(t): the right-constant interpolant, u^n on ((n-1)tau, n tau]."""
        return self.coeffs[self.step_of(t)]

    def interp_left(self, t: float) -> np.ndarray:
        """u_tau^-(t): u^{n-1} on [(n-1)tau, n tau), zero on [0, tau)."""
        n = int(np.floor(t / self.config.tau + 1e-9))
        n = min(max(n, 0), self.config.N)
        return self.coeffs[n] if n >= 1 else np.zeros_like(self.coeffs[0])

    def dump_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["n", "t"] + [f"c_{i + 1}" for i in range(self.grid.n_cells)])
            for n, t in enumerate(self.times):
                w.writerow([n, f"{t:.10g}"] + [f"{c:.17g}" for c in self.coeffs[n]])


# ---------------------------------------------------------------------------
# initial data


def initial_condition(disc: Discretization, kind: str = "delta_regularized",
                      v=None) -> np.ndarray:
    """Projected initial coefficients (flattened).

    delta_regularized: the unit-mass piecewise constant (2h)^{-d} on the
    2^d central cells, pushed through the H^-1 projection.  function: the
    projection of a pointwise-evaluable v.
    """
    grid = disc.grid
    if kind == "function":
        if v is None:
            raise ValueError("function kind needs a callable v")
        return grid.flatten(disc.project(disc.psi_load(v)))
    if kind != "delta_regularized":
        raise ValueError(f"unknown initial condition kind {kind!r}")
    if grid.J % 2:
        raise ValueError("delta_regularized initial data needs even J")
    cells = np.zeros(grid.shape)
    mid = (grid.J // 2 - 1, grid.J // 2)
    if grid.d == 1:
        cells[list(mid)] = 1.0
    else:
        cells[np.ix_(mid, mid)] = 1.0
    cells *= (2.0 * grid.h) ** (-grid.d)
    values = _cellwise_to_quad(disc, cells)
    return grid.flatten(disc.project(disc.psi_load(values)))


def _cellwise_to_quad(disc: Discretization, cells: np.ndarray) -> np.ndarray:
    q = disc.rule.q
    if disc.grid.d == 1:
        return np.repeat(cells[:, None], q, axis=1)
    return np.broadcast_to(cells[:, None, :, None],
                           (disc.grid.J, q, disc.grid.J, q)).copy()


# ---------------------------------------------------------------------------
# one implicit step


class _NewtonLinearSolver:
    """Direct banded solve in 1D; in 2D conjugate gradients preconditioned
    by a lagged sparse LU of a recent Newton matrix, refactored only when
    the iteration count degrades.  One instance per trajectory."""

    def __init__(self, disc: Discretization, max_cg: int = 40):
        self.disc = disc
        self.max_cg = max_cg
        self._lu = None

    def solve(self, A, b):
        if self.disc.grid.d == 1:
            return sla.solve_banded((2, 2), A, b)
        if self._lu is None:
            return self._refactor(A, b)
        prec = spla.LinearOperator(A.shape, matvec=self._lu.solve)
        count = [0]

        def cb(_):
            count[0] += 1

        x, info = spla.cg(A, b, rtol=1e-12, atol=1e-13 * np.linalg.norm(b),
                          M=prec, maxiter=self.max_cg, callback=cb)
        if info != 0:
            return self._refactor(A, b)
        if count[0] > self.max_cg // 2:
            self._lu = None  # force a fresh factorization next call
        return x

    def _refactor(self, A, b):
        self._lu = spla.splu(A.tocsc())
        return self._lu.solve(b)


def step(disc: Discretization, cfg: SchemeConfig, u_prev: np.ndarray,
         b_vec=None, s_vec=None, solver: _NewtonLinearSolver | None = None
         ) -> np.ndarray:
    """Advance one implicit Euler step; returns the new flat coefficients."""
    grid = disc.grid
    if solver is None:
        solver = _NewtonLinearSolver(disc)
    tau = cfg.tau
    u_prev = np.asarray(u_prev, dtype=float).reshape(grid.n_cells)
    rhs = disc.mass @ u_prev
    if b_vec is not None:
        rhs = rhs + np.asarray(b_vec, dtype=float)
    if s_vec is not None:
        rhs = rhs + np.asarray(s_vec, dtype=float)

    u = u_prev.copy()
    if cfg.p > 2.0 and not np.any(u):
        # K(0) = J_K(0) = 0 would stall Newton; one Picard step with the
        # mass matrix gives a usable starting point.
        u = disc.mass_solve(rhs)

    def residual(w):
        return disc.mass @ w + tau * disc.grid.flatten(
            disc.nonlinear_term(w, cfg.p)) - rhs

    F = residual(u)
    norm = np.linalg.norm(F)
    for _ in range(cfg.newton_maxit):
        if norm <= cfg.newton_tol:
            return u
        if grid.d == 1:
            A = disc.mass_banded + tau * disc.nonlinear_jacobian_banded(u, cfg.p)
        else:
            A = (disc.mass + tau * disc.nonlinear_jacobian(u, cfg.p)).tocsr()
        delta = solver.solve(A, -F)
        lam = 1.0
        while lam >= 1e-8:
            trial = u + lam * delta
            Ft = residual(trial)
            nt = np.linalg.norm(Ft)
            if nt <= (1.0 - 1e-4 * lam) * norm:
                u, F, norm = trial, Ft, nt
                break
            lam *= 0.5
        else:
            break  # line search failed; report below
    if norm <= cfg.newton_tol:
        return u
    raise NewtonError(f"Newton stalled at residual {norm:.3e} "
                      f"(tol {cfg.newton_tol:.1e})", norm)


# ---------------------------------------------------------------------------
# full trajectory


def run_path(disc: Discretization, cfg: SchemeConfig, seed: int = 0,
             u0=None, check_energy: bool | None = None) -> Trajectory:
    """Run the scheme from the regularized delta (or given u0) for N steps."""
    grid = disc.grid
    if u0 is None:
        u0 = initial_condition(disc)
    u0 = np.asarray(u0, dtype=float).reshape(grid.n_cells)

    table = None
    if cfg.noise.kind != "none":
        table = brownian_increments(cfg.N, cfg.tau, cfg.noise.modes(grid), seed)

    deterministic = cfg.noise.kind == "none" and cfg.forcing is None
    if check_energy is None:
        check_energy = deterministic

    coeffs = np.empty((cfg.N + 1, grid.n_cells))
    coeffs[0] = u0
    energies = np.empty(cfg.N + 1)
    lp = np.empty(cfg.N + 1)
    energies[0], lp[0] = _diagnostics(disc, u0, cfg.p)

    u = u0
    solver = _NewtonLinearSolver(disc)
    for n in range(1, cfg.N + 1):
        b_vec = None
        if cfg.forcing is not None:
            t_n = n * cfg.tau
            b_vec = cfg.tau * grid.flatten(
                disc.psi_load(lambda *xs: cfg.forcing(t_n, *xs)))
        s_vec = None
        if table is not None:
            s_vec = noise_load(cfg.noise, disc, grid.unflatten(u),
                               table.increments[n - 1])
        try:
            u = step(disc, cfg, u, b_vec, s_vec, solver)
        except NewtonError as exc:
            raise NewtonError(f"step {n}: {exc}", exc.residual) from None
        coeffs[n] = u
        energies[n], lp[n] = _diagnostics(disc, u, cfg.p)
        if check_energy and energies[n] > energies[n - 1] * (1 + 1e-10) + 1e-14:
            raise RuntimeError(
                f"energy increased at step {n}: "
                f"{energies[n - 1]:.6e} -> {energies[n]:.6e}")
    return Trajectory(grid=grid, config=cfg, seed=seed, coeffs=coeffs,
                      increments=table, energies=energies, lp_norms=lp)


def _diagnostics(disc: Discretization, u: np.ndarray, p: float):
    energy = float(u @ (disc.mass @ u))
    F = disc.field_at_quad(u)
    if disc.grid.d == 1:
        lp = float(np.sum(np.abs(F) ** p * disc.quad_weights[None, :]))
    else:
        lp = float(np.sum(np.abs(F) ** p * disc._w4))
    return energy, lp
