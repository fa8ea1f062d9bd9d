"""Boundary data, fluid-domain geometry and the flattening change of variables.

Both domains are mapped onto a product strip ``T x (z_bot, 0)``:

* strip ``b < y < f``:      rho(x, z) = (z + 1) f(x) - z b(x),  z in (-1, 0)
* half space ``y < f``:     rho(x, z) = z + f(x),               z in (-L, 0)

Laplace's equation for ``phi`` becomes ``div(A grad v) = 0`` for
``v = phi(x, rho(x, z))`` with

    A = [[rho_z, -rho_x], [-rho_x, (1 + rho_x^2) / rho_z]],   det A = 1.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Union

import numpy as np

from .errors import SeparationViolation
from .spectral import (
    PeriodicGrid,
    SpectralField,
    derivative,
    fine_sup,
    padded_size,
    sup_norm,
    to_fine,
)

# two-point Gauss rule on [0, 1]; exact for the cubic-in-z integrands of the form
GAUSS_S = np.array([0.5 - 0.5 / np.sqrt(3.0), 0.5 + 0.5 / np.sqrt(3.0)])
GAUSS_W = np.array([0.5, 0.5])

DEFAULT_GRADING = 0.03  # grading length of the z mesh


@dataclass(frozen=True)
class BoundaryFn:
    field: SpectralField
    lipschitz: float

    @classmethod
    def from_field(cls, field: SpectralField) -> "BoundaryFn":
        return cls(field, fine_sup(derivative(field).values))

    @classmethod
    def from_values(cls, grid: PeriodicGrid, values) -> "BoundaryFn":
        return cls.from_field(SpectralField(grid, values))

    @property
    def grid(self) -> PeriodicGrid:
        return self.field.grid

    @property
    def values(self) -> np.ndarray:
        return self.field.values


@dataclass(frozen=True)
class StripGeometry:
    """Finite-depth domain ``b(x) < y < f(x)``; ``h`` is measured, not trusted."""

    top: BoundaryFn
    bottom: BoundaryFn
    h_min: float = 1e-6

    def __post_init__(self):
        if self.top.grid != self.bottom.grid:
            raise ValueError("top and bottom must share a grid")
        if self.h < self.h_min:
            raise SeparationViolation(
                f"min(f - b) = {self.h:.3e} is below the allowed minimum {self.h_min:.1e}"
            )

    kind = "strip"

    @property
    def grid(self) -> PeriodicGrid:
        return self.top.grid

    @property
    def h(self) -> float:
        return float(np.min(self.top.values - self.bottom.values))

    @property
    def thickness_w1inf(self) -> float:
        """``||f - b||_{W^{1,inf}} = sup|f - b| + sup|(f - b)'|``."""
        diff = self.top.field - self.bottom.field
        return sup_norm(diff) + fine_sup(derivative(diff).values)

    @property
    def mean_thickness(self) -> float:
        return float(np.mean(self.top.values - self.bottom.values))

    def describe(self) -> dict:
        return {
            "kind": self.kind,
            "n": self.grid.n,
            "h": self.h,
            "lip_top": self.top.lipschitz,
            "lip_bottom": self.bottom.lipschitz,
            "thickness_w1inf": self.thickness_w1inf,
        }


@dataclass(frozen=True)
class HalfSpaceGeometry:
    """Infinite-depth domain ``y < f(x)``, truncated at ``z = -depth`` with a
    homogeneous Neumann condition."""

    top: BoundaryFn
    depth: float = 8.0

    def __post_init__(self):
        if self.depth < 4:
            raise ValueError("truncation depth must be at least 4")

    kind = "halfspace"

    @property
    def grid(self) -> PeriodicGrid:
        return self.top.grid

    def describe(self) -> dict:
        return {"kind": self.kind, "n": self.grid.n, "depth": self.depth, "lip_top": self.top.lipschitz}


Geometry = Union[StripGeometry, HalfSpaceGeometry]


def graded_nodes(extent: float, nz: int, grading: float | None) -> np.ndarray:
    """Vertical nodes ``-extent = z_0 < ... < z_nz = 0`` clustered at the top.

    ``z(s) = -c (exp(beta (1 - s)) - 1)`` for uniform ``s``, with ``c`` the
    grading length and ``beta = log(1 + extent / c)``. Cell sizes are about
    ``(c + |z|) beta / nz``, growing linearly with depth, which suits the
    ``exp(|k| z)`` profiles of the harmonic extension. ``grading=None``
    gives a uniform mesh.
    """
    s = np.arange(nz + 1) / nz
    if grading is None:
        return -extent * (1.0 - s)
    beta = np.log1p(extent / grading)
    z = -grading * np.expm1(beta * (1.0 - s))
    z[0], z[-1] = -extent, 0.0
    return z


@dataclass(frozen=True, eq=False)
class FlattenedSystem:
    """Coefficient field of the flattened problem.

    Coarse arrays have shape ``(nz + 1, n)`` (node rows, bottom first).
    Quadrature arrays ``a11, a12, a22`` have shape ``(2, nz, 3n/2)``: Gauss
    point, cell, and the 3/2-padded x grid.
    """

    kind: str
    grid: PeriodicGrid
    z: np.ndarray
    rho: np.ndarray
    rho_z: np.ndarray
    rho_x: np.ndarray
    a11: np.ndarray
    a12: np.ndarray
    a22: np.ndarray
    geometry: object = None

    @property
    def nz(self) -> int:
        return len(self.z) - 1

    @property
    def hz(self) -> np.ndarray:
        return np.diff(self.z)

    def matrix_at(self, i: int, j: int) -> np.ndarray:
        """Coefficient matrix at coarse node (z-row ``i``, x-index ``j``)."""
        rz, rx = self.rho_z[i, j], self.rho_x[i, j]
        return np.array([[rz, -rx], [-rx, (1.0 + rx * rx) / rz]])


def _coefficients(rho_z, rho_x):
    return rho_z, -rho_x, (1.0 + rho_x**2) / rho_z


def _gauss_z(z: np.ndarray) -> np.ndarray:
    return z[:-1][None, :] + GAUSS_S[:, None] * np.diff(z)[None, :]


def build_flatten_finite(
    geom: StripGeometry, nz: int, grading: float | None = DEFAULT_GRADING
) -> FlattenedSystem:
    """Flatten a strip onto ``z in (-1, 0)``.

    ``grading`` (see :func:`graded_nodes`) is in physical units and is
    converted with the mean thickness, so a flat strip of depth ``a`` gets the same physical nodes
    as a truncated half space of depth ``a``.
    """
    grid = geom.grid
    if geom.h < geom.h_min:
        raise SeparationViolation(f"min(f - b) = {geom.h:.3e}")
    spacing = None if grading is None else grading / geom.mean_thickness
    z = graded_nodes(1.0, nz, spacing)
    f, b = geom.top.values, geom.bottom.values
    df = derivative(geom.top.field).values
    db = derivative(geom.bottom.field).values
    zc = z[:, None]
    rho = (zc + 1.0) * f - zc * b
    rho_z = np.broadcast_to(f - b, rho.shape).copy()
    rho_x = (zc + 1.0) * df - zc * db

    zq = _gauss_z(z)[..., None]
    thick_f = to_fine(f - b)[None, None, :]
    df_f, db_f = to_fine(df)[None, None, :], to_fine(db)[None, None, :]
    rx_q = (zq + 1.0) * df_f - zq * db_f
    rz_q = np.broadcast_to(thick_f, rx_q.shape)
    if np.min(rz_q) <= 0:
        raise SeparationViolation("interpolated thickness is not positive on the fine grid")
    a11, a12, a22 = _coefficients(rz_q, rx_q)
    return FlattenedSystem("strip", grid, z, rho, rho_z, rho_x, np.ascontiguousarray(a11), a12, a22, geom)


def extend_nodes(z: np.ndarray, extent: float) -> np.ndarray:
    """Append cells below ``z`` continuing its geometric grading down to ``-extent``.

    The original nodes are kept, so solutions on the two meshes differ only
    through the deeper truncation.
    """
    if extent <= -z[0]:
        raise ValueError("new extent must exceed the current one")
    ratio = max(z[1] - z[0], 1e-300) / max(z[2] - z[1], 1e-300) if len(z) > 2 else 1.0
    ratio = max(ratio, 1.0)
    h = z[1] - z[0]
    extra = [z[0]]
    while extra[-1] > -extent:
        h *= ratio
        extra.append(extra[-1] - h)
    extra = np.array(extra[1:])
    if len(extra) > 1 and extra[-2] + extent < 0.5 * h:
        extra = extra[:-1]
    extra[-1] = -extent
    return np.concatenate([extra[::-1], z])


def build_flatten_infinite(
    geom: HalfSpaceGeometry,
    nz: int,
    grading: float | None = DEFAULT_GRADING,
    z: np.ndarray | None = None,
) -> FlattenedSystem:
    """Flatten a half space onto ``z in (-L, 0)`` with ``rho = z + f``.

    Explicit ``z`` nodes override ``nz``/``grading``.
    """
    grid = geom.grid
    if z is None:
        z = graded_nodes(geom.depth, nz, grading)
    else:
        z = np.asarray(z, dtype=float)
        if not np.isclose(z[0], -geom.depth) or z[-1] != 0.0 or np.any(np.diff(z) <= 0):
            raise ValueError("z nodes must increase from -depth to 0")
        nz = len(z) - 1
    f = geom.top.values
    df = derivative(geom.top.field).values
    rho = z[:, None] + f[None, :]
    rho_z = np.ones_like(rho)
    rho_x = np.broadcast_to(df, rho.shape).copy()

    m = padded_size(grid.n)
    df_f = np.broadcast_to(to_fine(df)[None, None, :], (2, nz, m))
    a11, a12, a22 = _coefficients(np.ones((2, nz, m)), df_f)
    return FlattenedSystem("halfspace", grid, z, rho, rho_z, rho_x, a11, np.ascontiguousarray(a12), a22, geom)


def flatten(
    geom: Geometry,
    nz: int,
    grading: float | None = DEFAULT_GRADING,
    z: np.ndarray | None = None,
) -> FlattenedSystem:
    if isinstance(geom, StripGeometry):
        if z is not None:
            raise ValueError("explicit z nodes are only supported for half spaces")
        return build_flatten_finite(geom, nz, grading)
    return build_flatten_infinite(geom, nz, grading, z)


# -- lower-bound constant ----------------------------------------------------


@dataclass(frozen=True)
class CoercivityBound:
    structural: float
    c_cal: float

    @property
    def value(self) -> float:
        return self.c_cal * self.structural


def structural_factor(geom: Geometry) -> float:
    """Geometry-dependent part of the coercivity constant.

    strip:      h / (1 + ||f'||^2_inf + ||f - b||^2_{W^{1,inf}})
    half space: 1 / (1 + ||f'||_inf)
    """
    if isinstance(geom, StripGeometry):
        return geom.h / (1.0 + geom.top.lipschitz**2 + geom.thickness_w1inf**2)
    return 1.0 / (1.0 + geom.top.lipschitz)


def coercivity_bound_M(geom: Geometry, c_cal: float) -> CoercivityBound:
    return CoercivityBound(structural_factor(geom), c_cal)


# -- boundary presets and I/O -------------------------------------------------


def random_lipschitz(
    grid: PeriodicGrid, seed: int, slope: float = 1.0, kmax: int = 16, decay: float = 2.0
) -> SpectralField:
    """Zero-mean random trigonometric polynomial with ``|k|^-decay`` amplitudes,
    rescaled so that ``max |f'|`` equals ``slope``."""
    rng = np.random.default_rng(seed)
    kmax = min(kmax, grid.n // 4)
    k = np.arange(1, kmax + 1)
    amp = rng.standard_normal(kmax) * k**-decay
    phase = rng.uniform(0.0, 2 * np.pi, kmax)
    x = grid.x
    vals = np.sum(amp[:, None] * np.cos(k[:, None] * x[None, :] + phase[:, None]), axis=0)
    fld = SpectralField(grid, vals)
    if slope == 0:
        return fld * 0.0
    lip = fine_sup(derivative(fld).values)
    return fld * (slope / lip)


PRESETS = ("flat", "single-mode", "multi-mode", "random-lip")
PRESET_PARAMS = {
    "flat": {"level"},
    "single-mode": {"level", "amplitude", "mode"},
    "multi-mode": {"level", "amplitudes", "modes"},
    "random-lip": {"level", "seed", "slope", "kmax"},
}


def preset(name: str, grid: PeriodicGrid, **params) -> SpectralField:
    """Closed-form boundary presets.

    ``flat``: constant ``level`` (default 0). ``single-mode``:
    ``amplitude * cos(mode x)``. ``multi-mode``: sum of
    ``amplitudes[i] * cos(modes[i] x)``. ``random-lip``: see
    :func:`random_lipschitz` (needs ``seed``).
    """
    if name not in PRESETS:
        raise ValueError(f"unknown preset {name!r}; choose from {PRESETS}")
    unknown = sorted(set(params) - PRESET_PARAMS[name])
    if unknown:
        raise ValueError(f"unknown parameter(s) {', '.join(unknown)} for preset {name!r}")
    x = grid.x
    if name == "flat":
        return SpectralField(grid, np.full(grid.n, float(params.get("level", 0.0))))
    if name == "single-mode":
        amp = params.get("amplitude", 0.1)
        mode = params.get("mode", 1)
        return SpectralField(grid, params.get("level", 0.0) + amp * np.cos(mode * x))
    if name == "multi-mode":
        modes = params.get("modes", [1, 3])
        amps = params.get("amplitudes", [0.3, 0.1])
        if len(modes) != len(amps):
            raise ValueError("modes and amplitudes must have the same length")
        vals = sum(a * np.cos(m * x) for a, m in zip(amps, modes))
        return SpectralField(grid, params.get("level", 0.0) + np.asarray(vals, dtype=float))
    if name == "random-lip":
        if "seed" not in params:
            raise ValueError("random-lip preset needs a seed")
        fld = random_lipschitz(
            grid, int(params["seed"]), params.get("slope", 1.0), params.get("kmax", 16)
        )
        return fld + params.get("level", 0.0)


def load_boundary_csv(path: str | Path, period: float = 2 * np.pi) -> SpectralField:
    """Read ``N`` samples (one per row, optional header) at ``x_j = j L / N``."""
    values = []
    with open(path, newline="") as fh:
        for row in csv.reader(fh):
            if not row or not row[0].strip():
                continue
            try:
                values.append(float(row[-1]))
            except ValueError:
                if values:
                    raise
    grid = PeriodicGrid(len(values), 1, period)
    return SpectralField(grid, np.array(values))
