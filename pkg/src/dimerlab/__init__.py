"""Numerical laboratory for the periodically driven Bose-Hubbard dimer.

Exact Floquet analysis of the N-particle problem, mean-field phase-space
cartography of the driven pendulum, and semiclassical requantization of
invariant tubes.
"""

__version__ = "0.1.0"

from .floquet import FloquetSolution, floquet_solve, quasienergy_sweep  # noqa: E402
from .husimi import HusimiGrid, PhasePoint, coherent_state, husimi_grid  # noqa: E402
from .meanfield import (  # noqa: E402
    InvariantCurve,
    MeanFieldParams,
    find_periodic_orbit,
    poincare_section,
    trace_invariant_curve,
)
from .model import DimerParams, static_spectrum  # noqa: E402
from .propagation import evolve_state, monodromy, return_probability_series  # noqa: E402
from .semiclassics import quantize_island, semiclassical_quasienergy  # noqa: E402

__all__ = [
    "DimerParams",
    "FloquetSolution",
    "HusimiGrid",
    "InvariantCurve",
    "MeanFieldParams",
    "PhasePoint",
    "coherent_state",
    "evolve_state",
    "find_periodic_orbit",
    "floquet_solve",
    "husimi_grid",
    "monodromy",
    "poincare_section",
    "quantize_island",
    "quasienergy_sweep",
    "return_probability_series",
    "semiclassical_quasienergy",
    "static_spectrum",
    "trace_invariant_curve",
]
