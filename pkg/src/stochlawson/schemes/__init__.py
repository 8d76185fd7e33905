"""SRK tableaus, the Lawson stepper, integration loops and the scheme registry."""

from .closed_form import (
    em_sl_step,
    midpoint_residual,
    platen15_sl_step,
    platen_sl_step,
    platen_weak2_sl_step,
)
from .implicit_platen import ImplicitPlatenStepper, implicit_platen_step
from .registry import METHODS, Scheme, get_scheme, scheme_names
from .runner import PathIntegrator, PathRun, integrate, integrate_global, run_paths
from .stepper import (
    BLOWUP_NORM,
    DivergenceError,
    LawsonMode,
    LawsonStepper,
    NewtonError,
    Trajectory,
    lawson_form,
    srk_lawson_step,
)
from .tableau import (
    SrkCoefficients,
    SrkTableau,
    tableau_euler_maruyama,
    tableau_midpoint,
    tableau_platen,
    tableau_platen_strong_15,
    tableau_platen_weak_2,
)
