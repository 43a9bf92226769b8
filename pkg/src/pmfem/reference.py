"""Reference solutions and error metrics.

Closed-form Barenblatt profiles (deterministic and the lognormal-rescaled
stochastic variant for p=3, d=1), truncated sine-series heat solutions for
the p=2 reduction, L^p space-time errors of trajectories, and discrete
support extraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.integrate
import scipy.linalg as sla

from .assembly import Discretization
from .basis import eval_field
from .grid import Grid
from .noise import IncrementTable
from .transfer import cell_average_coeffs


# ---------------------------------------------------------------------------
# Barenblatt profile


@dataclass(frozen=True)
class BarenblattParams:
    p: float
    d: int
    a: float
    b: float
    k: float
    C: float
    mass: float

    @property
    def support_coefficient(self) -> float:
        """sqrt(2d(p-1)C / (a(p-2))) = sqrt(C/k); sqrt(12 C) at (p,d)=(3,1)."""
        return math.sqrt(self.C / self.k)


def barenblatt_constants(p: float, d: int, mass: float = 1.0) -> BarenblattParams:
    """Self-similar profile constants with C normalized to the given mass."""
    if p <= 2:
        raise ValueError("profile defined for p > 2")
    if d not in (1, 2):
        raise ValueError("d must be 1 or 2")
    if mass <= 0:
        raise ValueError("mass must be positive")
    a = d / (d * (p - 2.0) + 2.0)
    b = a / d
    k = a * (p - 2.0) / (2.0 * d * (p - 1.0))
    m = 1.0 / (p - 2.0)
    # I = int_{|z| <= 1} (1 - |z|^2)^m dz by numeric radial integration
    if d == 1:
        I = 2.0 * scipy.integrate.quad(lambda z: (1.0 - z * z) ** m, 0.0, 1.0)[0]
    else:
        I = 2.0 * math.pi * scipy.integrate.quad(
            lambda r: (1.0 - r * r) ** m * r, 0.0, 1.0)[0]
    C = (mass * k ** (d / 2.0) / I) ** (1.0 / (m + d / 2.0))
    return BarenblattParams(p=p, d=d, a=a, b=b, k=k, C=C, mass=mass)


def barenblatt(params: BarenblattParams, t, x):
    """u_B(t, x) = t^{-a} (C - k |x|^2 t^{-2b})_+^{1/(p-2)} for t > 0."""
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0):
        raise ValueError("profile defined for t > 0")
    if isinstance(x, (tuple, list)):
        r2 = sum(np.asarray(c, dtype=float) ** 2 for c in x)
    else:
        x = np.asarray(x, dtype=float)
        r2 = x**2 if params.d == 1 else np.sum(x**2, axis=-1)
    bracket = params.C - params.k * r2 * t ** (-2.0 * params.b)
    return t ** (-params.a) * np.maximum(bracket, 0.0) ** (1.0 / (params.p - 2.0))


def support_radius(params: BarenblattParams, t) -> np.ndarray:
    return params.support_coefficient * np.asarray(t, dtype=float) ** params.b


# ---------------------------------------------------------------------------
# stochastic transform (p = 3, d = 1, sigma(u) = u)


class StochasticBarenblatt:
    """Pathwise exact solution u_B(int_0^t e^{W-s/2} ds, x) e^{W(t)-t/2}.

    Consumes the same increment table as the scheme; the time integral is
    trapezoidal on the table's grid.
    """

    def __init__(self, params: BarenblattParams, path: IncrementTable):
        if params.p != 3.0 or params.d != 1:
            raise ValueError("transform available for p = 3, d = 1 only")
        self.params = params
        self.path = path
        self.W = path.cumulative[:, 0]
        self.times = path.tau * np.arange(path.N + 1)
        self.factor = np.exp(self.W - 0.5 * self.times)  # e^{W(t_n) - t_n/2}
        self.theta = np.concatenate(
            ([0.0], scipy.integrate.cumulative_trapezoid(self.factor, self.times)))

    def _at(self, t: float):
        """(theta(t), e^{W(t) - t/2}); between grid points W and theta are
        linearly interpolated."""
        t = float(t)
        if not 0.0 < t <= self.times[-1] + 1e-9 * self.path.tau:
            raise ValueError(f"time {t} outside the path's interval")
        th = float(np.interp(t, self.times, self.theta))
        fac = math.exp(float(np.interp(t, self.times, self.W)) - 0.5 * t)
        return th, fac

    def __call__(self, t, x):
        th, fac = self._at(t)
        return barenblatt(self.params, th, x) * fac

    def radius(self, t) -> float:
        """Pathwise support radius sqrt(C/k) theta(t)^{1/3} (= sqrt(12C)... )."""
        th, _ = self._at(t)
        return self.params.support_coefficient * th ** self.params.b


def stochastic_exact(params: BarenblattParams, t, x, path: IncrementTable):
    return StochasticBarenblatt(params, path)(t, x)


# ---------------------------------------------------------------------------
# L^p metrics


def _axis_quadrature(grid: Grid, rule, breaks=()):
    """Composite per-axis quadrature points/weights honoring breakpoints."""
    pts, wts = [], []
    for m in range(grid.J):
        lo, hi = grid.nodes[m], grid.nodes[m + 1]
        cuts = sorted({lo, hi} | {b for b in breaks if lo < b < hi})
        for a, b in zip(cuts[:-1], cuts[1:]):
            pts.append(a + (b - a) * rule.nodes)
            wts.append((b - a) * rule.weights)
    return np.concatenate(pts), np.concatenate(wts)


def lp_distance(disc: Discretization, coeffs, target, p: float,
                axis_breaks=()) -> float:
    """|| u_h - target ||_{L^p(D)} by composite quadrature.

    axis_breaks lists coordinates where target is discontinuous along each
    axis; cells are split there so indicator targets integrate cleanly.
    """
    grid = disc.grid
    x, w = _axis_quadrature(grid, disc.rule, axis_breaks)
    if grid.d == 1:
        diff = eval_field(grid, coeffs, x) - np.asarray(target(x), dtype=float)
        return float(np.sum(np.abs(diff) ** p * w) ** (1.0 / p))
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    field = eval_field(grid, coeffs, (X1, X2))
    diff = field - np.asarray(target(X1, X2), dtype=float)
    return float(np.sum(np.abs(diff) ** p * w[:, None] * w[None, :]) ** (1.0 / p))


def lp_spacetime_error(disc: Discretization, traj, exact, p: float,
                       t_lo: float, T: float) -> float:
    """|| exact - u_tau ||_{L^p((t_lo, T) x D)} for the right-constant
    interpolant u_tau = u^n on ((n-1)tau, n tau].

    Space is compared through cell averages, the natural observable of the
    piecewise-constant state space: the raw field carries an O(h) in-cell
    interpolation error that would swamp the scheme's own convergence,
    while cell averages are superconvergent.  The time integral over each
    step uses the midpoint rule.
    """
    from .transfer import cell_average, cell_average_coeffs

    grid = disc.grid
    tau = traj.config.tau
    vol = grid.cell_volume
    terms = []
    for n in range(1, traj.config.N + 1):
        lo = max((n - 1) * tau, t_lo)
        hi = min(n * tau, T)
        if hi <= lo:
            continue
        t_mid = (n - 0.5) * tau
        uh = cell_average_coeffs(grid, traj.coeffs[n])
        ub = cell_average(grid, lambda *xs: exact(t_mid, *xs), disc.rule)
        terms.append((hi - lo) * vol * np.sum(np.abs(ub - uh) ** p))
    return float(math.fsum(terms) ** (1.0 / p))


def lp_spacetime_error_field(disc: Discretization, traj, exact, p: float,
                             t_lo: float, T: float) -> float:
    """Same norm but with the raw field compared pointwise by quadrature
    and exact sampled at the step endpoints t_n; diagnostic companion to
    lp_spacetime_error (dominated by the O(h) in-cell error)."""
    tau = traj.config.tau
    terms = []
    for n in range(1, traj.config.N + 1):
        lo = max((n - 1) * tau, t_lo)
        hi = min(n * tau, T)
        if hi <= lo:
            continue
        t_n = n * tau
        F = disc.field_at_quad(traj.coeffs[n])
        if disc.grid.d == 1:
            E = np.asarray(exact(t_n, disc.quad_points), dtype=float)
            cell = np.sum(np.abs(E - F) ** p * disc.quad_weights[None, :])
        else:
            xq = disc.quad_points
            E = np.asarray(exact(t_n, xq[:, :, None, None], xq[None, None, :, :]),
                           dtype=float)
            cell = np.sum(np.abs(E - F) ** p * disc._w4)
        terms.append((hi - lo) * cell)
    return float(math.fsum(terms) ** (1.0 / p))


# ---------------------------------------------------------------------------
# discrete support


def discrete_support(grid: Grid, coeffs, eps: float = 1e-8) -> np.ndarray:
    """Boolean grid-shaped mask of cells whose field average exceeds eps."""
    if eps <= 0:
        raise ValueError("threshold must be positive")
    return np.abs(cell_average_coeffs(grid, grid.unflatten(np.asarray(coeffs)))) > eps


def support_interval(grid: Grid, coeffs, eps: float = 1e-8):
    """d=1: outermost coordinates of the supported cells, or None if empty."""
    mask = discrete_support(grid, coeffs, eps)
    idx = np.nonzero(mask)[0]
    if idx.size == 0:
        return None
    return float(grid.nodes[idx[0]]), float(grid.nodes[idx[-1] + 1])


# ---------------------------------------------------------------------------
# heat equation oracles (p = 2)


def dirichlet_eigenvalue(L: float, k) -> np.ndarray:
    """Eigenvalues of -Delta on (-L, L) with zero boundary, mode k >= 1."""
    return (np.asarray(k, dtype=float) * math.pi / (2.0 * L)) ** 2


def sine_mode(L: float, k: int, x):
    return np.sin(k * math.pi * (np.asarray(x, dtype=float) + L) / (2.0 * L))


def heat_fourier(L: float, modes: dict, t: float, x):
    """Truncated sine-series Dirichlet heat solution.

    modes maps k (int, d=1) or (k1, k2) to the coefficient of the product
    of sine modes; the semigroup multiplies each by e^{-lambda t}.
    """
    out = 0.0
    for key, coef in modes.items():
        if np.isscalar(key):
            lam = dirichlet_eigenvalue(L, key)
            shape = sine_mode(L, key, x)
        else:
            k1, k2 = key
            lam = dirichlet_eigenvalue(L, k1) + dirichlet_eigenvalue(L, k2)
            x1, x2 = x if isinstance(x, (tuple, list)) else (x[..., 0], x[..., 1])
            shape = sine_mode(L, k1, x1) * sine_mode(L, k2, x2)
        out = out + coef * math.exp(-lam * t) * shape
    return out


def implicit_heat_trajectory(disc: Discretization, u0, tau: float,
                             steps: int) -> np.ndarray:
    """Backward-Euler heat iterates via the dense (Gram, mass) eigenpencil.

    Solves G v = lambda M v once and propagates c^n = V (I + tau L)^{-n}
    V^{-1} c^0 — an arithmetic route independent of the Newton stepper.
    """
    M = disc.mass.toarray()
    G = disc.gram.toarray()
    lam, V = sla.eigh(G, M)  # V^T M V = I
    y = V.T @ (M @ np.asarray(u0, dtype=float).reshape(-1))
    decay = (1.0 + tau * lam) ** (-np.arange(steps + 1)[:, None])
    return (decay * y[None, :]) @ V.T
