"""Named schemes: an underlying method combined with a Lawson mode.

Names follow ``<method>`` (the underlying, non-Lawson scheme) or
``<method>-<mode>`` with mode ``raw``, ``dsl`` or ``fsl``, e.g. ``em-dsl``,
``platen-weak2-dsl``, ``midpoint-fsl``.  ``implicit-platen`` has no Lawson
variants.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

from ..model import Interpretation, ito_from_stratonovich, stratonovich_from_ito
from .implicit_platen import ImplicitPlatenStepper
from .stepper import LawsonMode, LawsonStepper, lawson_form
from .tableau import (
    SrkTableau,
    tableau_euler_maruyama,
    tableau_midpoint,
    tableau_platen,
    tableau_platen_strong_15,
    tableau_platen_weak_2,
)

__all__ = ["Scheme", "get_scheme", "scheme_names", "METHODS"]

METHODS = {
    "em": tableau_euler_maruyama,
    "platen": tableau_platen,
    "midpoint": tableau_midpoint,
    "platen15": tableau_platen_strong_15,
    "platen-weak2": tableau_platen_weak_2,
    "implicit-platen": None,
}


@dataclass(frozen=True, eq=False)
class Scheme:
    """A runnable scheme.  ``tableau`` is ``None`` for the implicit Platen comparator."""

    name: str
    method: str
    mode: LawsonMode
    tableau: Optional[SrkTableau]

    @property
    def needs_dz(self):
        return self.tableau is not None and self.tableau.needs_dz

    @property
    def strong_order(self):
        return 1.0 if self.tableau is None else self.tableau.strong_order

    @property
    def weak_order(self):
        return 1.0 if self.tableau is None else self.tableau.weak_order

    @property
    def interpretation(self):
        if self.tableau is not None and self.tableau.stratonovich:
            return Interpretation.STRATONOVICH
        return Interpretation.ITO

    def prepare(self, sde):
        """The SDE rewritten in the interpretation this scheme is built for."""
        if self.interpretation is Interpretation.STRATONOVICH:
            return stratonovich_from_ito(sde)
        return ito_from_stratonovich(sde)

    def make_stepper(self, sde, h):
        """Step map for ``sde`` (in any interpretation) at step size ``h``."""
        sde = self.prepare(sde)
        if self.tableau is None:
            return ImplicitPlatenStepper(sde, h)
        return LawsonStepper(lawson_form(sde, self.mode), self.tableau, h)


def scheme_names():
    names = []
    for method, factory in METHODS.items():
        names.append(method)
        if factory is not None:
            names.extend(f"{method}-{mode.value}" for mode in LawsonMode)
    return names


def get_scheme(name):
    """Look up a scheme by name; raises ``KeyError`` listing the valid names."""
    key = str(name).strip().lower()
    method, mode = key, LawsonMode.RAW
    head, _, tail = key.rpartition("-")
    if head and tail in {m.value for m in LawsonMode}:
        method, mode = head, LawsonMode(tail)
    if method not in METHODS or (METHODS[method] is None and key != method):
        raise KeyError(f"unknown scheme {name!r}; choose from {', '.join(scheme_names())}")
    factory = METHODS[method]
    tableau = None if factory is None else factory()
    return Scheme(key, method, mode, tableau)
