"""Periodic grids, Fourier multipliers and the Sobolev/Hoelder/Lebesgue norms.

Convention: for a grid of period ``L`` per axis the Fourier coefficients are

    g_hat(xi) = L^{-d} * integral of g(x) exp(-i xi.x) dx,   xi = 2 pi k / L,

so on the unit torus (``L = 2 pi``) ``<|D| g, g> = ||g||^2_{H^{1/2}}`` holds
exactly and every norm below shares one normalisation.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class PeriodicGrid:
    """Uniform grid on the torus ``[0, period)^dim`` with ``n`` points per axis.

    A period larger than ``2 pi`` is how the real line is emulated
    ("R-mode"); see :func:`real_line_grid`.
    """

    n: int
    dim: int = 1
    period: float = TWO_PI

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 8, got {self.n}")
        if self.period <= 0:
            raise ValueError("period must be positive")

    @property
    def dx(self) -> float:
        return self.period / self.n

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.dim

    @property
    def volume(self) -> float:
        return self.period ** self.dim

    @property
    def is_unit_torus(self) -> bool:
        return np.isclose(self.period, TWO_PI)

    @property
    def x(self) -> np.ndarray:
        """Node coordinates along one axis."""
        return np.arange(self.n) * self.dx

    def mesh(self) -> tuple[np.ndarray, ...]:
        axes = [self.x] * self.dim
        return tuple(np.meshgrid(*axes, indexing="ij"))

    def wavenumbers(self) -> np.ndarray:
        """Physical frequencies ``2 pi k / L`` along one axis (FFT ordering)."""
        return TWO_PI * np.fft.fftfreq(self.n, d=self.dx)

    def abs_xi(self) -> np.ndarray:
        """``|xi|`` on the full FFT index set, shape ``self.shape``."""
        k = self.wavenumbers()
        if self.dim == 1:
            return np.abs(k)
        kx, ky = np.meshgrid(k, k, indexing="ij")
        return np.hypot(kx, ky)

    def field(self, values) -> "SpectralField":
        return SpectralField(self, values)

    def from_function(self, func: Callable[..., np.ndarray]) -> "SpectralField":
        return SpectralField(self, func(*self.mesh()))


def real_line_grid(n: int, period: float = 32 * np.pi) -> PeriodicGrid:
    """Large-period torus standing in for the real line."""
    if period < 32 * np.pi - 1e-12:
        raise ValueError("R-mode requires a period of at least 32 pi")
    return PeriodicGrid(n=n, dim=1, period=period)


@dataclass(frozen=True, eq=False)
class SpectralField:
    """Real samples on a :class:`PeriodicGrid` with lazily cached coefficients."""

    grid: PeriodicGrid
    values: np.ndarray
    _coef: list = field(default_factory=list, repr=False, compare=False)

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.shape:
            raise ValueError(f"values shape {vals.shape} does not match grid {self.grid.shape}")
        vals = vals.copy()
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)

    @classmethod
    def from_coefficients(cls, grid: PeriodicGrid, coef: np.ndarray) -> "SpectralField":
        vals = np.fft.ifftn(np.asarray(coef) * grid.n ** grid.dim).real
        return cls(grid, vals)

    @property
    def coefficients(self) -> np.ndarray:
        """Fourier coefficients in FFT ordering (mean value at index 0)."""
        if not self._coef:
            c = np.fft.fftn(self.values) / self.grid.n ** self.grid.dim
            c.setflags(write=False)
            self._coef.append(c)
        return self._coef[0]

    def __add__(self, other):
        return SpectralField(self.grid, self.values + _vals(other))

    def __sub__(self, other):
        return SpectralField(self.grid, self.values - _vals(other))

    def __mul__(self, scalar):
        return SpectralField(self.grid, self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self):
        return SpectralField(self.grid, -self.values)

    def map(self, func: Callable[[np.ndarray], np.ndarray]) -> "SpectralField":
        return SpectralField(self.grid, func(self.values))


def _vals(other):
    return other.values if isinstance(other, SpectralField) else other


@dataclass(frozen=True)
class MultiplierSymbol:
    """Radial Fourier multiplier ``xi -> m(|xi|)``."""

    func: Callable[[np.ndarray], np.ndarray]
    name: str = "m"

    def __call__(self, abs_xi) -> np.ndarray:
        return np.asarray(self.func(np.asarray(abs_xi, dtype=float)), dtype=float)


IDENTITY = MultiplierSymbol(lambda k: np.ones_like(k), "1")
ABS_D = MultiplierSymbol(lambda k: k, "|D|")


def apply_multiplier(g: SpectralField, m: MultiplierSymbol) -> SpectralField:
    coef = g.coefficients * m(g.grid.abs_xi())
    return SpectralField.from_coefficients(g.grid, coef)


def inner(u: SpectralField, w: SpectralField) -> float:
    """L2 pairing by the equal-weight (trapezoid) rule."""
    return float(np.sum(u.values * w.values) * u.grid.dx ** u.grid.dim)


def mean(g: SpectralField) -> float:
    return float(g.coefficients.flat[0].real)


def _weighted_sum(g: SpectralField, weight: np.ndarray) -> float:
    return float(g.grid.volume * np.sum(weight * np.abs(g.coefficients) ** 2))


def seminorm_hs(g: SpectralField, s: float) -> float:
    """Homogeneous ``H^s`` seminorm for ``s`` in ``[-1, 1]``.

    ``s = 0`` gives the full L2 norm (the mean is kept); for ``s != 0`` the
    zero frequency is dropped.
    """
    if not -1.0 <= s <= 1.0:
        raise ValueError("s must lie in [-1, 1]")
    xi = g.grid.abs_xi()
    if s == 0:
        weight = np.ones_like(xi)
    else:
        weight = np.zeros_like(xi)
        nz = xi > 0
        weight[nz] = xi[nz] ** (2 * s)
    return np.sqrt(_weighted_sum(g, weight))


def norm_wt_half(g: SpectralField) -> float:
    """Low-frequency tempered half seminorm, weight ``min(|xi|, |xi|^2)``.

    On the unit torus every nonzero ``|xi| >= 1`` so this is the plain
    ``H^{1/2}`` seminorm.
    """
    xi = g.grid.abs_xi()
    return np.sqrt(_weighted_sum(g, np.minimum(xi, xi**2)))


def norm_h_neg_half(u: SpectralField) -> float:
    xi = u.grid.abs_xi()
    return np.sqrt(_weighted_sum(u, (1.0 + xi**2) ** -0.5))


def half_norm(g: SpectralField) -> float:
    """The half-order norm matching the grid: torus -> H^{1/2}, R-mode -> tempered."""
    return seminorm_hs(g, 0.5) if g.grid.is_unit_torus else norm_wt_half(g)


def lp_norm(g: SpectralField, p: float) -> float:
    if p < 1:
        raise ValueError("p must be >= 1")
    vol = g.grid.dx ** g.grid.dim
    if np.isinf(p):
        return float(np.max(np.abs(g.values)))
    return float((np.sum(np.abs(g.values) ** p) * vol) ** (1.0 / p))


def sup_norm(g: SpectralField) -> float:
    return float(np.max(np.abs(g.values)))


def holder_seminorm(g: SpectralField, alpha: float) -> float:
    """Largest difference quotient over all distinct grid pairs.

    Uses the periodic distance. This is a lower bound for the continuum
    seminorm that converges as the grid is refined. O(N^2).
    """
    if g.grid.dim != 1:
        raise ValueError("Hoelder norms are implemented for d = 1 only")
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    vals = g.values
    n = g.grid.n
    best = 0.0
    # shift s and n - s give the same pair set, so s <= n/2 suffices
    for s in range(1, n // 2 + 1):
        dist = min(s, n - s) * g.grid.dx
        diff = np.max(np.abs(vals - np.roll(vals, s)))
        best = max(best, diff / dist**alpha)
    return float(best)


def holder_norm(g: SpectralField, alpha: float) -> float:
    return sup_norm(g) + holder_seminorm(g, alpha)


def derivative(g: SpectralField, axis: int = 0) -> SpectralField:
    """Spectral derivative; the Nyquist mode is dropped."""
    k = g.grid.wavenumbers().copy()
    k[g.grid.n // 2] = 0.0
    shape = [1] * g.grid.dim
    shape[axis] = g.grid.n
    coef = g.coefficients * (1j * k).reshape(shape)
    return SpectralField.from_coefficients(g.grid, coef)


# -- 3/2-rule padding ---------------------------------------------------------


def padded_size(n: int) -> int:
    return 3 * n // 2


def pad_spectrum(half: np.ndarray, n: int) -> np.ndarray:
    """Zero-pad an ``rfft`` spectrum (last axis) from ``n`` to ``3n/2`` points.

    The coarse Nyquist coefficient is halved so that the padded function
    interpolates the coarse samples.
    """
    m = padded_size(n)
    out = np.zeros(half.shape[:-1] + (m // 2 + 1,), dtype=complex)
    out[..., : n // 2] = half[..., : n // 2]
    out[..., n // 2] = 0.5 * half[..., n // 2]
    return out * (m / n)


def truncate_spectrum(half_fine: np.ndarray, n: int) -> np.ndarray:
    """Exact transpose of :func:`pad_spectrum` followed by the fine ``irfft``.

    Composed with ``rfft`` on the fine grid and ``irfft`` on the coarse
    grid this is the Euclidean adjoint of the interpolation map.
    """
    out = np.zeros(half_fine.shape[:-1] + (n // 2 + 1,), dtype=complex)
    out[..., : n // 2] = half_fine[..., : n // 2]
    out[..., n // 2] = half_fine[..., n // 2].real
    return out


def to_fine(values: np.ndarray) -> np.ndarray:
    """Band-limited interpolation of the last axis onto the 3/2 grid."""
    n = values.shape[-1]
    return np.fft.irfft(pad_spectrum(np.fft.rfft(values, axis=-1), n), n=padded_size(n), axis=-1)


def dealiased_product(a: SpectralField, b: SpectralField) -> SpectralField:
    """Pointwise product computed on the 3/2 grid and truncated back (d = 1)."""
    if a.grid.dim != 1:
        raise ValueError("dealiased_product supports d = 1")
    n = a.grid.n
    prod = to_fine(a.values) * to_fine(b.values)
    m = padded_size(n)
    half = np.fft.rfft(prod) * (n / m)
    half = half[: n // 2 + 1].copy()
    half[n // 2] = half[n // 2].real
    return SpectralField(a.grid, np.fft.irfft(half, n=n))


def fine_sup(values: np.ndarray) -> float:
    """Sup norm sampled on the 3/2 grid (closer to the continuum maximum)."""
    return float(np.max(np.abs(to_fine(values))))
