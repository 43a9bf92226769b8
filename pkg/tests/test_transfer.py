import numpy as np
import pytest

from pmfem.assembly import Discretization
from pmfem.grid import Grid
from pmfem.reference import lp_distance
from pmfem.transfer import (avg_matrix, cell_average, cell_average_coeffs,
                            discrete_laplacian_apply, h1neg_projection,
                            laplacian_matrix, tilde_restriction)


def test_cell_average_constant():
    g = Grid(1.5, 8, 2)
    bar = cell_average(g, lambda x1, x2: 3.0 * np.ones_like(x1))
    np.testing.assert_allclose(bar, 3.0, rtol=1e-14)


def test_cell_average_lp_stable_and_first_order():
    # || bar R_h v ||_p <= || v ||_p and || v - bar R_h v ||_p = O(h)
    p = 3.0
    v = lambda x: np.cos(3.0 * x) + 0.5 * x
    errs = []
    for J in (16, 32, 64):
        g = Grid(1.5, J, 1)
        disc = Discretization(g)
        bar = cell_average(g, v)
        vals = disc.eval_on_quad(v)
        norm_v = np.sum(np.abs(vals) ** p * disc.quad_weights[None, :]) ** (1 / p)
        norm_bar = (np.sum(np.abs(bar) ** p) * g.cell_volume) ** (1 / p)
        assert norm_bar <= norm_v * (1 + 1e-12)
        err = np.sum(np.abs(vals - bar[:, None]) ** p
                     * disc.quad_weights[None, :]) ** (1 / p)
        errs.append(err)
    assert errs[0] / errs[1] == pytest.approx(2.0, rel=0.1)
    assert errs[1] / errs[2] == pytest.approx(2.0, rel=0.1)


def test_laplacian_constant_interior():
    g = Grid(1.5, 8, 2)
    r = discrete_laplacian_apply(g, np.ones(g.shape))
    np.testing.assert_allclose(r[1:-1, 1:-1], 0.0, atol=1e-12)


def test_laplacian_exact_on_quadratic():
    g = Grid(1.5, 8, 2)
    f = (g.cell_centers**2)[:, None] * np.ones(g.J)[None, :]
    r = discrete_laplacian_apply(g, f)
    np.testing.assert_allclose(r[1:-1, 1:-1], -2.0, rtol=1e-12)


def test_laplacian_dimension_guards():
    g1 = Grid(1.5, 8, 1)
    f = np.ones(8)
    r = discrete_laplacian_apply(g1, f)
    np.testing.assert_allclose(r[1:-1], 0.0, atol=1e-12)


def test_laplacian_consistency_on_sine_modes():
    # interior truncation error of the stencil on e_1 decays like h^2
    from pmfem.reference import dirichlet_eigenvalue, sine_mode
    errs = {}
    for d in (1, 2):
        errs[d] = []
        for J in (16, 32, 64):
            g = Grid(1.5, J, d)
            lam = dirichlet_eigenvalue(g.L, 1) * d
            if d == 1:
                f = sine_mode(g.L, 1, g.cell_centers)
                r = discrete_laplacian_apply(g, f)
                err = np.abs(r - lam * f)[1:-1].max()
            else:
                s = sine_mode(g.L, 1, g.cell_centers)
                f = s[:, None] * s[None, :]
                r = discrete_laplacian_apply(g, f)
                err = np.abs(r - lam * f)[1:-1, 1:-1].max()
            errs[d].append(err)
        assert errs[d][0] / errs[d][1] == pytest.approx(4.0, rel=0.2)
        assert errs[d][1] / errs[d][2] == pytest.approx(4.0, rel=0.2)


def test_laplacian_matrix_spd():
    for d in (1, 2):
        g = Grid(1.5, 8, d)
        A = laplacian_matrix(g).toarray()
        np.testing.assert_allclose(A, A.T, atol=0)
        assert np.linalg.eigvalsh(A).min() > 0


def test_avg_matrix_interior_rows_are_scaled_stencil():
    for d, fac in ((1, None), (2, None)):
        g = Grid(1.5, 8, d)
        fac = g.h**2 / 2.0 if d == 1 else 3.0 * g.h**2 / 8.0
        rng = np.random.default_rng(0)
        x = rng.standard_normal(g.n_cells)
        r1 = g.unflatten(avg_matrix(g) @ x)
        r2 = fac * discrete_laplacian_apply(g, g.unflatten(x))
        if d == 1:
            np.testing.assert_allclose(r1[1:-1], r2[1:-1], atol=1e-12)
        else:
            np.testing.assert_allclose(r1[1:-1, 1:-1], r2[1:-1, 1:-1], atol=1e-12)


def test_tilde_restriction_roundtrip():
    # cell averages of tilde R_h v equal the cell averages of v exactly
    rng = np.random.default_rng(1)
    for d in (1, 2):
        g = Grid(1.5, 8, d)
        vbar = rng.standard_normal(g.shape)
        c = tilde_restriction(g, vbar)
        np.testing.assert_allclose(cell_average_coeffs(g, c), vbar, atol=1e-11)
        v = (lambda x: np.sin(x)) if d == 1 else (lambda x1, x2: np.sin(x1) * x2)
        c = tilde_restriction(g, v)
        np.testing.assert_allclose(cell_average_coeffs(g, c),
                                   cell_average(g, v), atol=1e-11)


def test_tilde_restriction_zero():
    g = Grid(1.5, 8, 2)
    c = tilde_restriction(g, np.zeros(g.shape))
    np.testing.assert_allclose(c, 0.0, atol=1e-13)


def test_projection_idempotent_on_vh():
    rng = np.random.default_rng(2)
    for d in (1, 2):
        disc = Discretization(Grid(1.5, 8, d))
        c0 = rng.standard_normal(disc.grid.shape)
        vals = disc.field_at_quad(c0)
        np.testing.assert_allclose(h1neg_projection(disc, vals), c0, atol=1e-10)


def test_projection_zero():
    disc = Discretization(Grid(1.5, 8, 1))
    c = h1neg_projection(disc, lambda x: np.zeros_like(x))
    np.testing.assert_allclose(c, 0.0, atol=1e-13)


def test_projection_nonexpansive_h1neg():
    # (P_h v, P_h v)_{H^-1} <= (v, P_h v)_{H^-1}: c^T M c <= psi_load(v) . c
    disc = Discretization(Grid(1.5, 8, 1))
    v = lambda x: np.sign(x) * np.cos(x)
    c = disc.grid.flatten(h1neg_projection(disc, v))
    lhs = c @ (disc.mass @ c)
    rhs = disc.grid.flatten(disc.psi_load(v)) @ c
    assert lhs <= rhs + 1e-12


def test_projection_first_order_on_smooth_target():
    from pmfem.reference import barenblatt, barenblatt_constants
    bp = barenblatt_constants(3.0, 2)
    target = lambda x1, x2: barenblatt(bp, 0.1, (x1, x2))
    errs = []
    for J in (8, 16, 32):
        disc = Discretization(Grid(1.5, J, 2))
        c = h1neg_projection(disc, target)
        errs.append(lp_distance(disc, c, target, 3.0))
    assert errs[0] / errs[2] == pytest.approx(4.0, rel=0.35)
