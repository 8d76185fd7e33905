"""Stochastic Runge-Kutta Lawson schemes for semi-linear SDEs.

``dX = sum_m (A_m X + g_m(t, X)) dW_m`` with commuting matrices ``A_m``
(``W_0 = t``).  The linear part is handled exactly by a matrix exponential
and the remainder by an SRK scheme.  Submodules:

* :mod:`~stochlawson.linalg`: matrix exponential and Kronecker helpers.
* :mod:`~stochlawson.model`: the SDE type and Itô/Stratonovich conversion.
* :mod:`~stochlawson.noise`: reproducible Brownian increments and coarsening.
* :mod:`~stochlawson.schemes`: tableaus, Lawson steppers and the scheme registry.
* :mod:`~stochlawson.stability`: mean-square stability matrices and regions.
* :mod:`~stochlawson.experiments`: Monte Carlo convergence and moment studies.
* :mod:`~stochlawson.problems`: built-in test problems.
"""

from .model import Interpretation, IntegrationGrid, LinearMap, SemiLinearSde, exact_linear_solution
from .noise import sample_grid, sample_paths
from .problems import make_problem
from .schemes import get_scheme, integrate, integrate_global, run_paths, scheme_names, srk_lawson_step

__version__ = "0.1.0"

__all__ = [
    "Interpretation",
    "IntegrationGrid",
    "LinearMap",
    "SemiLinearSde",
    "exact_linear_solution",
    "sample_grid",
    "sample_paths",
    "make_problem",
    "get_scheme",
    "integrate",
    "integrate_global",
    "run_paths",
    "scheme_names",
    "srk_lawson_step",
]
