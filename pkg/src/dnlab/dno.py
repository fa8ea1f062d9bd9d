"""Dirichlet-to-Neumann operator: flat closed forms and general geometries."""
from __future__ import annotations

import numpy as np

from .domain import (
    DEFAULT_GRADING,
    BoundaryFn,
    Geometry,
    HalfSpaceGeometry,
    StripGeometry,
    flatten,
)
from .elliptic import (
    DEFAULT_TOL,
    DiscreteOperator,
    EllipticSolution,
    FlatPreconditioner,
    dn_trace,
    solve,
)
from .errors import ConstantInput
from .spectral import MultiplierSymbol, SpectralField, half_norm, norm_h_neg_half, sup_norm


def flat_symbol(depth: float) -> MultiplierSymbol:
    """``|k|`` for the flat half space, ``|k| tanh(a |k|)`` for the flat strip of depth ``a``."""
    if depth <= 0:
        raise ValueError("depth must be positive")
    if np.isinf(depth):
        return MultiplierSymbol(lambda k: k, "|D|")
    return MultiplierSymbol(lambda k: k * np.tanh(depth * k), f"|D|tanh({depth:g}|D|)")


class DnOperator:
    """DN map of a fixed geometry at a fixed resolution.

    The flattened system and the flat-case preconditioner are built once.
    :meth:`update_top` swaps the upper boundary (used by time stepping);
    the preconditioner is only rebuilt when the boundary has moved by more
    than ``refresh * ||f||_inf`` since the last rebuild.
    """

    def __init__(
        self,
        geometry: Geometry,
        nz: int = 128,
        grading: float | None = DEFAULT_GRADING,
        tol: float = DEFAULT_TOL,
        z: np.ndarray | None = None,
        refresh: float = 0.05,
    ):
        self.nz = nz
        self.grading = grading
        self.tol = tol
        self.refresh = refresh
        self._z = z
        self._set_geometry(geometry, rebuild_precond=True)
        self.preconditioner_builds = 1

    def _set_geometry(self, geometry: Geometry, rebuild_precond: bool):
        self.geometry = geometry
        self.system = flatten(geometry, self.nz, self.grading, self._z)
        self.operator = DiscreteOperator(self.system)
        if rebuild_precond:
            self.precond = FlatPreconditioner(self.system)
            self._precond_top = geometry.top.values.copy()

    @property
    def grid(self):
        return self.geometry.grid

    def update_top(self, f: SpectralField | BoundaryFn) -> None:
        top = f if isinstance(f, BoundaryFn) else BoundaryFn.from_field(f)
        geom = self.geometry
        if isinstance(geom, StripGeometry):
            new = StripGeometry(top, geom.bottom, geom.h_min)
        else:
            new = HalfSpaceGeometry(top, geom.depth)
        moved = np.max(np.abs(top.values - self._precond_top))
        rebuild = moved > self.refresh * sup_norm(top.field)
        self._set_geometry(new, rebuild)
        if rebuild:
            self.preconditioner_builds += 1

    def solve(self, g: SpectralField, tol: float | None = None) -> EllipticSolution:
        return solve(
            self.system, g, tol or self.tol, operator=self.operator, precond=self.precond
        )

    def apply(self, g: SpectralField) -> SpectralField:
        return dn_trace(self.solve(g))

    __call__ = apply

    def discrete_flat_symbol(self) -> np.ndarray:
        """DN multiplier of the x-averaged geometry for ``k = 0 .. n/2``
        (exact discrete symbol when the geometry is flat)."""
        return self.precond.flat_symbol()

    def describe(self) -> dict:
        d = self.geometry.describe()
        d.update(nz=self.system.nz, grading=self.grading)
        return d


def boundedness_report(op: DnOperator, g: SpectralField) -> float:
    """``||G g||_{H^{-1/2}} / ||g||_{1/2}``; the denominator is the plain
    half seminorm on the unit torus and the tempered one in R-mode."""
    denom = half_norm(g)
    if denom <= 1e-14 * max(1.0, sup_norm(g)):
        raise ConstantInput("boundedness ratio is undefined for constant data")
    return norm_h_neg_half(op.apply(g)) / denom
