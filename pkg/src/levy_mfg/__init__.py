"""Solvers and diagnostics for degenerate nonlocal mean field games with
controlled time change on the periodic torus."""

from .errors import CflError, ConvergenceError, LevyMfgError, NumericalError, ValidationError
from .grid_levy import (
    DiscreteOperator,
    Grid,
    LevyMeasureSpec,
    apply_operator,
    assemble_operator,
    check_operator_bounds,
    holder_exponent,
    holder_seminorm,
    split_operator,
)
from .hamiltonian import ConjugatePair, check_pair, make_table1_pair, numeric_conjugate

__version__ = "0.1.0"

__all__ = [
    "CflError",
    "ConjugatePair",
    "ConvergenceError",
    "DiscreteOperator",
    "Grid",
    "LevyMeasureSpec",
    "LevyMfgError",
    "NumericalError",
    "ValidationError",
    "__version__",
    "apply_operator",
    "assemble_operator",
    "check_operator_bounds",
    "check_pair",
    "holder_exponent",
    "holder_seminorm",
    "make_table1_pair",
    "numeric_conjugate",
    "split_operator",
]
