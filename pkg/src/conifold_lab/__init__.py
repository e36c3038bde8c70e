"""Numerical toolkit for the Ricci-flat conifold metrics and the
balanced-metric gluing construction built on them."""

from conifold_lab.errors import (
    BasisError,
    ConifoldError,
    ConvergenceError,
    DegreeError,
    DomainError,
    PositivityError,
    QuadratureError,
    SearchError,
    VerificationError,
)

__version__ = "0.1.0"

__all__ = [
    "BasisError",
    "ConifoldError",
    "ConvergenceError",
    "DegreeError",
    "DomainError",
    "PositivityError",
    "QuadratureError",
    "SearchError",
    "VerificationError",
    "__version__",
]
