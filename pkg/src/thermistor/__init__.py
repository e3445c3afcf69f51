"""Delay-scheme solver for a thermistor in an RLC circuit.

The voltage obeys an integrated RLC equation, the potential a
temperature-dependent conductivity problem and the temperature a nonlinear
heat equation with Joule heating. Coefficients are frozen at the temperature
one slab earlier, which turns each slab into a contraction for the voltage.
"""
from .circuit import CircuitParams, Source, rlc_closed_form, threshold_tau_star
from .config import RunConfig, parse_config
from .grid import Grid, build_grid
from .laws import MaterialLaws, Truncation, make_material_laws
from .scheme import SchemeConfig, exponent_pair, run, tau_refinement_study

__all__ = [
    "CircuitParams",
    "Grid",
    "MaterialLaws",
    "RunConfig",
    "SchemeConfig",
    "Source",
    "Truncation",
    "build_grid",
    "exponent_pair",
    "make_material_laws",
    "parse_config",
    "rlc_closed_form",
    "run",
    "tau_refinement_study",
    "threshold_tau_star",
]
