"""Numerical lab for spinor curvature estimates on asymptotically flat initial data."""

from .clifford import STANDARD, CliffordRep, Conventions
from .geometry import InitialDataSet
from .grid import Grid

__all__ = ["Grid", "InitialDataSet", "CliffordRep", "Conventions", "STANDARD"]
__version__ = "0.1.0"
