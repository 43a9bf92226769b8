"""End-to-end acceptance suite.

Each test prints a `CRITERION k: PASS/FAIL` line (visible with -s, or in
the captured output on failure) and covers one of the headline checks:

1. deterministic 1D convergence table (anchors, spatial/temporal slopes)
2. deterministic 2D convergence diagonal (anchor, monotonicity, slopes)
3. projection approximation rates (smooth h^1, indicator h^{2/3})
4. stochastic 1D Monte-Carlo error level and diagonal trend
5. exact discrete identities of the basis/stencil machinery
6. oracle equivalence of the stepper in the linear (p = 2) reduction
7. finite speed of propagation of the discrete supports
8. pathwise stability of the energy and L^3 dissipation functionals
"""

import math
import time

import numpy as np
import pytest

from pmfem.assembly import Discretization
from pmfem.basis import phi1d_eval, psi1d_eval
from pmfem.experiments import ExperimentConfig, fit_slope, run_projection_study
from pmfem.grid import Grid
from pmfem.noise import NoiseModel, brownian_increments
from pmfem.reference import (StochasticBarenblatt, barenblatt,
                             barenblatt_constants, dirichlet_eigenvalue,
                             implicit_heat_trajectory, lp_spacetime_error,
                             sine_mode, support_interval)
from pmfem.stepper import SchemeConfig, initial_condition, run_path, step
from pmfem.transfer import (cell_average_coeffs, discrete_laplacian_apply,
                            tilde_restriction)

T, T_LO, P = 0.1, 0.01, 3.0

_det_cache = {}


def _det_error(d, J, N, L=1.5):
    """Space-time L^3 cell-average error of the deterministic run, cached."""
    key = (d, J, N)
    if key not in _det_cache:
        disc = Discretization(Grid(L, J, d))
        cfg = SchemeConfig(T=T, N=N, p=P)
        traj = run_path(disc, cfg)
        params = barenblatt_constants(P, d)
        if d == 1:
            exact = lambda t, x: barenblatt(params, t, x)
        else:
            exact = lambda t, x1, x2: barenblatt(params, t, (x1, x2))
        err = lp_spacetime_error(disc, traj, exact, P, T_LO, T)
        _det_cache[key] = (err, traj, disc)
    return _det_cache[key]


def _report(num, ok, detail):
    print(f"CRITERION {num}: {'PASS' if ok else 'FAIL'} - {detail}", flush=True)
    assert ok, f"criterion {num}: {detail}"


# ---------------------------------------------------------------------------
# 1. deterministic 1D convergence


def test_criterion_1_deterministic_1d_convergence():
    start = time.monotonic()
    anchors = {(64, 128): 0.0028429, (256, 1024): 0.00060724}
    vals = {}
    for J in (32, 64, 128, 256):
        vals[(J, 1024)] = _det_error(1, J, 1024)[0]
    for N in (128, 256, 512):
        vals[(256, N)] = _det_error(1, 256, N)[0]
    vals[(64, 128)] = _det_error(1, 64, 128)[0]
    elapsed = time.monotonic() - start

    checks = []
    for key, ref in anchors.items():
        checks.append(("anchor" + str(key), 0.5 * ref <= vals[key] <= 1.5 * ref,
                       f"{vals[key]:.6g} vs {ref}"))
    hs = [3.0 / J for J in (32, 64, 128, 256)]
    s_h, _ = fit_slope(hs, [vals[(J, 1024)] for J in (32, 64, 128, 256)])
    checks.append(("spatial slope", 1.2 <= s_h <= 1.8, f"{s_h:.3f}"))
    taus = [T / N for N in (128, 256, 512, 1024)]
    s_t, _ = fit_slope(taus, [vals[(256, N)] for N in (128, 256, 512, 1024)])
    checks.append(("temporal slope", 0.7 <= s_t <= 1.1, f"{s_t:.3f}"))
    checks.append(("runtime", elapsed <= 300.0, f"{elapsed:.1f}s"))
    ok = all(c[1] for c in checks)
    _report(1, ok, "; ".join(f"{n}={d} ({'ok' if o else 'BAD'})"
                             for n, o, d in checks))


# ---------------------------------------------------------------------------
# 2. deterministic 2D convergence


def test_criterion_2_deterministic_2d_convergence():
    start = time.monotonic()
    diag = (8, 16, 32, 64, 128, 256)
    errs = {J: _det_error(2, J, J)[0] for J in diag}
    elapsed = time.monotonic() - start

    checks = []
    ref = 0.015466
    checks.append(("anchor(64,64)", 0.5 * ref <= errs[64] <= 1.5 * ref,
                   f"{errs[64]:.6g} vs {ref}"))
    mono = all(errs[diag[i + 1]] < errs[diag[i]] for i in range(len(diag) - 1))
    checks.append(("diagonal monotone",
                   mono, " > ".join(f"{errs[J]:.4g}" for J in diag)))
    # along the diagonal h and tau halve together, so the two fitted rates
    # (vs h and vs tau) are read off the same refinement sequence
    last = diag[-4:]
    s_h, _ = fit_slope([3.0 / J for J in last], [errs[J] for J in last])
    s_t, _ = fit_slope([T / J for J in last], [errs[J] for J in last])
    checks.append(("spatial slope", 0.7 <= s_h <= 1.2, f"{s_h:.3f}"))
    checks.append(("temporal slope", 0.7 <= s_t <= 1.2, f"{s_t:.3f}"))
    checks.append(("runtime", elapsed <= 1800.0, f"{elapsed:.1f}s"))
    ok = all(c[1] for c in checks)
    _report(2, ok, "; ".join(f"{n}={d} ({'ok' if o else 'BAD'})"
                             for n, o, d in checks))


# ---------------------------------------------------------------------------
# 3. projection rates


def test_criterion_3_projection_rates():
    # L = 1.0 keeps the indicator's discontinuity lines on grid nodes for
    # every J in the sweep, which is what the h^{2/3} rate requires; with
    # unaligned cuts the in-cell error saturates at a lower rate
    cfg = ExperimentConfig(experiment="project", d=2, L=1.0,
                           J_list=(16, 32, 64, 128), N_list=(1,))
    _, slopes = run_projection_study(cfg)
    checks = []
    for (target, op), (slope, _) in sorted(slopes.items()):
        lo, hi = (0.8, 1.2) if target == "barenblatt" else (0.52, 0.82)
        checks.append((f"{target}/{op}", lo <= slope <= hi, f"{slope:.3f}"))
    ok = all(c[1] for c in checks)
    _report(3, ok, "; ".join(f"{n}={d} ({'ok' if o else 'BAD'})"
                             for n, o, d in checks))


# ---------------------------------------------------------------------------
# 4. stochastic 1D Monte Carlo


def _mc_mean(J, N, samples, seed=0):
    disc = Discretization(Grid(1.5, J, 1))
    cfg = SchemeConfig(T=T, N=N, p=P, noise=NoiseModel("linear"))
    params = barenblatt_constants(P, 1)
    errs = []
    for i in range(samples):
        traj = run_path(disc, cfg, seed=seed + i)
        exact = StochasticBarenblatt(params, traj.increments)
        errs.append(lp_spacetime_error(disc, traj, exact, P, T_LO, T))
    mean = math.fsum(errs) / len(errs)
    var = math.fsum((e - mean) ** 2 for e in errs) / (len(errs) - 1)
    return mean, math.sqrt(var / len(errs))


def test_criterion_4_stochastic_1d_monte_carlo():
    samples = 1000
    mean, se = _mc_mean(64, 128, samples)
    checks = [("mean(64,128)", 0.004 <= mean <= 0.02,
               f"{mean:.6g} +/- {se:.2g}")]
    # refinement diagonal N = 2J: each level must not sit above the
    # previous one by more than twice the combined Monte-Carlo error
    diag = [(16, 32), (32, 64), (64, 128), (128, 256)]
    stats = {(16, 32): _mc_mean(16, 32, samples),
             (32, 64): _mc_mean(32, 64, samples),
             (64, 128): (mean, se),
             (128, 256): _mc_mean(128, 256, samples)}
    for a, b in zip(diag[:-1], diag[1:]):
        ma, sa = stats[a]
        mb, sb = stats[b]
        tol = 2.0 * math.hypot(sa, sb)
        checks.append((f"{a}->{b}", mb < ma + tol,
                       f"{ma:.4g} -> {mb:.4g} (2se {tol:.2g})"))
    ok = all(c[1] for c in checks)
    _report(4, ok, "; ".join(f"{n}={d} ({'ok' if o else 'BAD'})"
                             for n, o, d in checks))


# ---------------------------------------------------------------------------
# 5. exact identities


def test_criterion_5_exact_identities():
    checks = []
    rng = np.random.default_rng(0)

    # cell averages of the implementable restriction reproduce the input
    for d in (1, 2):
        g = Grid(1.5, 8, d)
        vbar = rng.standard_normal(g.shape)
        c = tilde_restriction(g, vbar)
        err = np.max(np.abs(cell_average_coeffs(g, c) - vbar))
        checks.append((f"roundtrip d={d}", err < 1e-10, f"{err:.2e}"))

    # mass matrix sparsity and SPD
    for d in (1, 2):
        disc = Discretization(Grid(1.5, 8, d))
        nnz = int(np.max(np.diff(disc.mass.indptr)))
        M = disc.mass.toarray()
        spd = np.allclose(M, M.T) and np.linalg.eigvalsh(M).min() > 0
        checks.append((f"nnz d={d}", nnz == 5**d, str(nnz)))
        checks.append((f"SPD d={d}", spd, ""))

    # -psi'' = phi per sub-interval, psi in C^1, psi(+-L) = 0
    g = Grid(1.5, 8, 1)
    eps, worst = 1e-5, 0.0
    for i in (1, 4, 8):
        for cell in range(max(i - 1, 1), min(i + 1, 8) + 1):
            x = g.nodes[cell - 1] + g.h * np.array([0.25, 0.5, 0.75])
            d2 = (psi1d_eval(g, i, x + eps) - 2 * psi1d_eval(g, i, x)
                  + psi1d_eval(g, i, x - eps)) / eps**2
            worst = max(worst, np.max(np.abs(-d2 - phi1d_eval(g, i, x))))
    checks.append(("-psi''=phi", worst < 1e-4, f"{worst:.2e}"))
    kink = max(abs((psi1d_eval(g, 4, g.nodes[k] - 1e-7)
                    - psi1d_eval(g, 4, g.nodes[k] - 2e-7)) / 1e-7
                   - (psi1d_eval(g, 4, g.nodes[k] + 2e-7)
                      - psi1d_eval(g, 4, g.nodes[k] + 1e-7)) / 1e-7)
               for k in (2, 3, 4))
    checks.append(("psi C1", kink < 1e-5, f"{kink:.2e}"))
    bd = max(abs(psi1d_eval(g, i, -1.5)) + abs(psi1d_eval(g, i, 1.5))
             for i in range(1, 9))
    checks.append(("psi(+-L)=0", bd < 1e-14, f"{bd:.2e}"))

    # a_{i,1} + a_{i,2} + a_{i,3} = 3/4 pointwise on every interior cell,
    # where a_{i,j}(x) = (3 / 2h^2) psi_{i+1-j... }(x): the scaled sum of
    # the three overlapping psi is constant
    rngx = g.nodes[3] + g.h * np.array([0.1, 0.4, 0.9])
    ssum = 1.5 / g.h**2 * sum(psi1d_eval(g, j, rngx) for j in (3, 4, 5))
    checks.append(("a-sum 3/4", np.max(np.abs(ssum - 0.75)) < 1e-12,
                   f"{ssum[0]:.12f}"))

    # discrete Laplacian: annihilates constants, exact on quadratics,
    # second-order consistency on sine modes
    for d in (1, 2):
        gd = Grid(1.5, 16, d)
        f = np.ones(gd.shape)
        r = discrete_laplacian_apply(gd, f)
        core = r[1:-1] if d == 1 else r[1:-1, 1:-1]
        checks.append((f"const d={d}", np.max(np.abs(core)) < 1e-12, ""))
        if d == 1:
            q = gd.cell_centers**2
        else:
            q = (gd.cell_centers**2)[:, None] + np.zeros(gd.J)[None, :]
        rq = discrete_laplacian_apply(gd, q)
        core = rq[1:-1] if d == 1 else rq[1:-1, 1:-1]
        checks.append((f"quadratic d={d}",
                       np.max(np.abs(core + 2.0)) < 1e-10, ""))
    errs = []
    for J in (16, 32, 64):
        gd = Grid(1.5, J, 1)
        f = sine_mode(gd.L, 1, gd.cell_centers)
        lam = dirichlet_eigenvalue(gd.L, 1)
        r = discrete_laplacian_apply(gd, f)
        errs.append(np.max(np.abs(r - lam * f)[1:-1]))
    slope, _ = fit_slope([3.0 / J for J in (16, 32, 64)], errs)
    checks.append(("sine consistency slope", 1.8 <= slope <= 2.2,
                   f"{slope:.3f}"))

    # first Brownian increment is identically zero
    tab = brownian_increments(8, 0.01, 4, seed=1)
    checks.append(("first increment zero", not np.any(tab.increments[0]), ""))

    ok = all(c[1] for c in checks)
    _report(5, ok, "; ".join(f"{n}={d} ({'ok' if o else 'BAD'})"
                             for n, o, d in checks))


# ---------------------------------------------------------------------------
# 6. oracle equivalence (p = 2)


def test_criterion_6_oracle_equivalence():
    checks = []
    for d, J in ((1, 32), (2, 8)):
        disc = Discretization(Grid(1.5, J, d))
        cfg = SchemeConfig(T=0.05, N=10, p=2.0)
        u0 = initial_condition(disc)
        traj = run_path(disc, cfg, u0=u0, check_energy=False)
        oracle = implicit_heat_trajectory(disc, u0, cfg.tau, cfg.N)
        rel = np.max(np.abs(traj.coeffs - oracle)) / np.max(np.abs(oracle))
        checks.append((f"heat oracle d={d}", rel < 1e-8, f"{rel:.2e}"))

    # Newton uniqueness: the same step equation solved from a different
    # starting iterate (an independent root finder seeded far away) lands
    # on the same root
    import scipy.optimize
    disc = Discretization(Grid(1.5, 16, 1))
    cfg = SchemeConfig(T=0.1, N=16, p=3.0)
    u_prev = initial_condition(disc)
    u_a = step(disc, cfg, u_prev)
    rng = np.random.default_rng(2)
    rhs = disc.mass @ u_prev

    def residual(w):
        return disc.mass @ w + cfg.tau * disc.grid.flatten(
            disc.nonlinear_term(w, cfg.p)) - rhs

    start = u_a + 0.5 * rng.standard_normal(16)
    sol = scipy.optimize.root(residual, start, tol=1e-13)
    dev = np.max(np.abs(u_a - sol.x))
    checks.append(("Newton uniqueness", sol.success and dev < 1e-8,
                   f"{dev:.2e}"))

    # Jacobian consistency with finite differences
    c = rng.standard_normal(16) * 0.3 + 1.0
    Jm = disc.nonlinear_jacobian(c, 3.0).toarray()
    eps = 1e-6
    worst = 0.0
    for k in (0, 5, 11):
        cp, cm = c.copy(), c.copy()
        cp[k] += eps
        cm[k] -= eps
        fd = (disc.nonlinear_term(cp, 3.0) - disc.nonlinear_term(cm, 3.0)) \
            / (2 * eps)
        worst = max(worst, np.max(np.abs(Jm[:, k] - fd)))
    checks.append(("Jacobian FD", worst < 1e-6, f"{worst:.2e}"))

    ok = all(c[1] for c in checks)
    _report(6, ok, "; ".join(f"{n}={d} ({'ok' if o else 'BAD'})"
                             for n, o, d in checks))


# ---------------------------------------------------------------------------
# 7. finite speed of propagation


def _contained(grid, traj, radius_of, n_steps):
    margin = 2.0 * grid.h
    for n in range(1, n_steps + 1):
        t = n * traj.config.tau
        amp = float(np.max(np.abs(cell_average_coeffs(grid, traj.coeffs[n]))))
        iv = support_interval(grid, traj.coeffs[n], max(1e-8, 1e-2 * amp))
        if iv is None:
            continue
        r = radius_of(t)
        if iv[0] < -r - margin or iv[1] > r + margin:
            return False, (n, iv, r)
    return True, None


def test_criterion_7_finite_speed_of_propagation():
    J, N = 64, 128
    grid = Grid(1.5, J, 1)
    disc = Discretization(grid)
    params = barenblatt_constants(P, 1)
    checks = []

    err, traj, _ = _det_error(1, J, N)
    from pmfem.reference import support_radius
    ok_det, info = _contained(grid, traj, lambda t: float(
        support_radius(params, t)), N)
    checks.append(("deterministic", ok_det, str(info) if info else "all steps"))

    cfg = SchemeConfig(T=T, N=N, p=P, noise=NoiseModel("linear"))
    bad = 0
    first_bad = None
    for i in range(100):
        traj = run_path(disc, cfg, seed=i)
        exact = StochasticBarenblatt(params, traj.increments)
        ok_i, info = _contained(grid, traj, exact.radius, N)
        if not ok_i:
            bad += 1
            first_bad = first_bad or (i, info)
    checks.append(("100 noisy paths", bad == 0,
                   f"{bad} violating paths {first_bad or ''}"))
    ok = all(c[1] for c in checks)
    _report(7, ok, "; ".join(f"{n}={d} ({'ok' if o else 'BAD'})"
                             for n, o, d in checks))


# ---------------------------------------------------------------------------
# 8. stability of the discrete functionals


def test_criterion_8_stability_functionals():
    diag = [(32, 64), (64, 128), (128, 256)]
    max_e, dissip = [], []
    for J, N in diag:
        _, traj, _ = _det_error(1, J, N)
        max_e.append(float(np.max(traj.energies)))
        dissip.append(traj.config.tau * float(np.sum(traj.lp_norms[1:])))
    checks = []
    for name, vals in (("max energy", max_e), ("tau*sum L3^3", dissip)):
        spread = (max(vals) - min(vals)) / max(vals)
        checks.append((name, spread < 0.20,
                       f"spread {spread:.1%} over {[f'{v:.4g}' for v in vals]}"))
    ok = all(c[1] for c in checks)
    _report(8, ok, "; ".join(f"{n}={d} ({'ok' if o else 'BAD'})"
                             for n, o, d in checks))
