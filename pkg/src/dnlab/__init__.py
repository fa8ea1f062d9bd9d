"""Dirichlet-to-Neumann operators on strips and half spaces: coercivity
certificates, sharp Rayleigh constants and one-phase Muskat decay."""
from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:
    __version__ = "0.1.0"

from .dno import DnOperator, boundedness_report, flat_symbol
from .domain import BoundaryFn, HalfSpaceGeometry, StripGeometry, flatten
from .spectral import PeriodicGrid, SpectralField

__all__ = [
    "BoundaryFn",
    "DnOperator",
    "HalfSpaceGeometry",
    "PeriodicGrid",
    "SpectralField",
    "StripGeometry",
    "boundedness_report",
    "flat_symbol",
    "flatten",
]
