"""Very-weak (H^-1) finite element solver for stochastic porous-medium and
fast-diffusion equations, with the experiment harness used for the
convergence and support studies."""

from .assembly import Discretization, alpha, alpha_prime, make_rule
from .basis import eval_field, phi_nd_eval, psi_nd_eval
from .grid import Grid
from .noise import IncrementTable, NoiseModel, brownian_increments, noise_load
from .reference import (BarenblattParams, StochasticBarenblatt, barenblatt,
                        barenblatt_constants, discrete_support, heat_fourier,
                        implicit_heat_trajectory, lp_distance,
                        lp_spacetime_error, support_interval, support_radius)
from .stepper import (NewtonError, SchemeConfig, Trajectory,
                      initial_condition, run_path, step)
from .transfer import (cell_average, cell_average_coeffs,
                       discrete_laplacian_apply, h1neg_projection,
                       tilde_restriction)

__all__ = [
    "Grid", "Discretization", "make_rule", "alpha", "alpha_prime",
    "eval_field", "phi_nd_eval", "psi_nd_eval",
    "IncrementTable", "NoiseModel", "brownian_increments", "noise_load",
    "BarenblattParams", "StochasticBarenblatt", "barenblatt",
    "barenblatt_constants", "discrete_support", "heat_fourier",
    "implicit_heat_trajectory", "lp_distance", "lp_spacetime_error",
    "support_interval", "support_radius",
    "NewtonError", "SchemeConfig", "Trajectory", "initial_condition",
    "run_path", "step",
    "cell_average", "cell_average_coeffs", "discrete_laplacian_apply",
    "h1neg_projection", "tilde_restriction",
]

__version__ = "0.1.0"
