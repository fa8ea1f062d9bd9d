"""Certification of the coercive lower bounds for the DN quadratic form.

Every certificate compares a measured ratio with ``C_cal * structural``.
The structural factor comes from the geometry
(:func:`dnlab.domain.structural_factor`); ``C_cal`` stands in for the
unspecified dimensional constant and is calibrated once on flat geometries
at the working resolution (:func:`calibrated_constant`).
"""
from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import integrate
from scipy.interpolate import CubicHermiteSpline
from scipy.sparse.linalg import LinearOperator, lobpcg

from .dno import DnOperator
from .domain import (
    DEFAULT_GRADING,
    BoundaryFn,
    HalfSpaceGeometry,
    StripGeometry,
    coercivity_bound_M,
    structural_factor,
)
from .elliptic import dirichlet_energy, trace_pairing
from .errors import ConstantInput, NoConvergence, NonConvex, NonZeroMean
from .spectral import PeriodicGrid, SpectralField, half_norm, lp_norm, mean, sup_norm

CALIBRATION_H = 0.5
CALIBRATION_MAX_DEPTH = 10.0


# -- calibration ----------------------------------------------------------------


@functools.lru_cache(maxsize=64)
def _calibrate(kind, n, period, nz, grading, depth, h_lo, n_depths):
    grid = PeriodicGrid(n, 1, period)
    zero = BoundaryFn.from_values(grid, np.zeros(n))
    k = np.abs(grid.wavenumbers()[1 : n // 2])

    def min_ratio(geom):
        sym = DnOperator(geom, nz=nz, grading=grading).discrete_flat_symbol()
        return float(np.min(sym[1 : n // 2] / k))

    if kind == "halfspace":
        geom = HalfSpaceGeometry(zero, depth)
        return min_ratio(geom) / structural_factor(geom)
    best = math.inf
    for a in np.geomspace(h_lo, CALIBRATION_MAX_DEPTH, n_depths):
        geom = StripGeometry(zero, BoundaryFn.from_values(grid, np.full(n, -a)))
        best = min(best, min_ratio(geom) / structural_factor(geom))
    return best


def calibrated_constant(
    kind: str,
    grid: PeriodicGrid,
    nz: int = 128,
    grading: float | None = DEFAULT_GRADING,
    depth: float = 8.0,
    h_lo: float = CALIBRATION_H,
    n_depths: int = 41,
) -> float:
    """Smallest ``(sharp flat ratio) / structural`` over the flat family.

    Strips: flat strips of depth ``a`` in ``[h_lo, 10]`` (log-spaced).
    Half spaces: the flat truncated half space of the given depth.
    Computed with the discrete flat symbol at the given resolution, so
    the calibration sees the same discretisation as the certificates.
    """
    if kind not in ("strip", "halfspace"):
        raise ValueError(f"unknown geometry kind {kind!r}")
    return _calibrate(kind, grid.n, grid.period, nz, grading, depth, h_lo, n_depths)


def calibration_for(op: DnOperator, h_lo: float = CALIBRATION_H) -> float:
    depth = getattr(op.geometry, "depth", 8.0)
    return calibrated_constant(op.geometry.kind, op.grid, op.system.nz, op.grading, depth, h_lo)


# -- quadratic certificate ---------------------------------------------------


@dataclass
class CoercivityReport:
    geometry: dict
    pairing: float
    pairing_energy: float
    seminorm2: float
    ratio: float
    structural_factor: float
    C_cal: float
    bound: float
    passed: bool
    seed: int | None = None
    extra: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        out = {
            "geometry": self.geometry,
            "seed": self.seed,
            "pairing": self.pairing,
            "seminorm2": self.seminorm2,
            "ratio": self.ratio,
            "structural_factor": self.structural_factor,
            "C_cal": self.C_cal,
            "pass": bool(self.passed),
            "pairing_energy": self.pairing_energy,
            "bound": self.bound,
        }
        out.update(self.extra)
        return out


def _require_nonconstant(seminorm2: float, g: SpectralField):
    if seminorm2 <= 1e-28 * max(1.0, sup_norm(g)) ** 2:
        raise ConstantInput("the half seminorm vanishes; data is constant")


def certify(
    op: DnOperator, g: SpectralField, c_cal: float | None = None, seed: int | None = None
) -> CoercivityReport:
    """Measure ``<G g, g> / ||g||^2`` against the calibrated lower bound.

    The pairing is evaluated twice: as the trace pairing ``<G_h g, g>``
    and as the volume energy ``a(v, v)``.
    """
    semi2 = half_norm(g) ** 2
    _require_nonconstant(semi2, g)
    if c_cal is None:
        c_cal = calibration_for(op)
    sol = op.solve(g)
    pairing = trace_pairing(sol, g)
    bound = coercivity_bound_M(op.geometry, c_cal)
    ratio = pairing / semi2
    return CoercivityReport(
        geometry=op.describe(),
        pairing=pairing,
        pairing_energy=dirichlet_energy(sol),
        seminorm2=semi2,
        ratio=ratio,
        structural_factor=bound.structural,
        C_cal=c_cal,
        bound=bound.value,
        passed=ratio >= bound.value,
        seed=seed,
    )


# -- sharp constant ---------------------------------------------------------------


@dataclass
class SharpConstant:
    value: float
    residual: float
    iterations: int
    eigenvector: np.ndarray = field(repr=False)


def sharp_constant(
    op: DnOperator,
    mean_zero: bool = True,
    tol: float = 1e-8,
    maxiter: int = 200,
    block: int = 3,
    seed: int = 0,
) -> SharpConstant:
    """Smallest value of ``<G g, g> / ||g||^2_{H^{1/2}}`` over nonconstant ``g``.

    Solved as a standard symmetric eigenproblem for
    ``C = |D|^{-1/2} G |D|^{-1/2}`` on zero-mean grid functions with LOBPCG,
    preconditioned by the inverse of the flat discrete symbol ratio. Each
    application of ``C`` costs one elliptic solve per block column.

    Constants span the kernel of both forms, so ``mean_zero=False`` gives
    the same quotient; the flag is kept for interface symmetry. The grid
    Nyquist mode has no discrete derivative (its DN value is 0) and is
    excluded along with the constants.
    """
    grid = op.grid
    n = grid.n
    xi = grid.abs_xi()
    inv_sqrt = np.zeros(n)
    inv_sqrt[xi > 0] = xi[xi > 0] ** -0.5
    flat_ratio = np.ones(n)
    sym = op.discrete_flat_symbol()
    kk = np.fft.fftfreq(n, 1.0 / n).astype(int)
    idx = np.abs(kk)
    valid = (idx > 0) & (idx < n // 2)
    flat_ratio[valid] = sym[idx[valid]] / xi[valid]

    nyq = np.cos(np.pi * np.arange(n))[:, None]

    def project(vec):
        vec = vec - vec.mean(axis=0, keepdims=True)
        return vec - nyq * (nyq.T @ vec) / n

    def apply_c(h):
        h = np.asarray(h)
        cols = h.reshape(n, -1)
        out = np.empty_like(cols)
        for j in range(cols.shape[1]):
            g = np.fft.ifft(np.fft.fft(cols[:, j]) * inv_sqrt).real
            y = op.apply(SpectralField(grid, g)).values
            out[:, j] = np.fft.ifft(np.fft.fft(y) * inv_sqrt).real
        return project(out).reshape(h.shape)

    def apply_m(r):
        r = np.asarray(r)
        cols = r.reshape(n, -1)
        out = np.fft.ifft(np.fft.fft(cols, axis=0) / flat_ratio[:, None], axis=0).real
        return project(out).reshape(r.shape)

    a_op = LinearOperator((n, n), matvec=apply_c, matmat=apply_c, dtype=float)
    m_op = LinearOperator((n, n), matvec=apply_m, matmat=apply_m, dtype=float)
    rng = np.random.default_rng(seed)
    x0 = project(rng.standard_normal((n, block)))
    # bias the start towards the lowest modes, where the minimum sits for flat data
    x0[:, 0] += np.cos(grid.x)
    x0[:, 1 % block] += np.sin(grid.x)
    y = np.hstack([np.ones((n, 1)), nyq]) / math.sqrt(n)
    vals, vecs, hist = lobpcg(
        a_op, x0, M=m_op, Y=y, tol=tol, maxiter=maxiter, largest=False, retResidualNormsHistory=True
    )
    order = np.argsort(vals)
    lam = float(vals[order[0]])
    vec = vecs[:, order[0]]
    resid = float(np.linalg.norm(apply_c(vec) - lam * vec) / np.linalg.norm(vec))
    if resid > tol:
        raise NoConvergence(f"LOBPCG residual {resid:.2e} above {tol:.1e} after {len(hist)} iterations")
    g = np.fft.ifft(np.fft.fft(vec) * inv_sqrt).real
    return SharpConstant(lam, resid, len(hist), g)


# -- convex pairing -----------------------------------------------------------


TABLE_INTERVALS = 4096


@dataclass(frozen=True)
class ConvexPair:
    """A convex ``phi`` with its first two derivatives."""

    phi: Callable[[np.ndarray], np.ndarray]
    dphi: Callable[[np.ndarray], np.ndarray]
    ddphi: Callable[[np.ndarray], np.ndarray]
    name: str = "phi"

    @classmethod
    def power(cls, p: float) -> "ConvexPair":
        """``phi(z) = |z|^p`` for ``p >= 2``."""
        if p < 2:
            raise ValueError("power pairs need p >= 2")
        return cls(
            lambda z: np.abs(z) ** p,
            lambda z: p * np.abs(z) ** (p - 2) * z,
            lambda z: p * (p - 1) * np.abs(z) ** (p - 2),
            f"|z|^{p:g}",
        )

    def check(self, lo: float, hi: float, samples: int = TABLE_INTERVALS + 1) -> None:
        zs = np.linspace(lo, hi, samples)
        dd = np.asarray(self.ddphi(zs), dtype=float)
        if np.any(dd < 0):
            bad = zs[np.argmax(dd < 0)]
            raise NonConvex(f"phi'' < 0 at z = {bad:.6g}")
        eps = np.array([1e-6, 1e-7, -1e-6, -1e-7])
        q = np.asarray(self.dphi(eps), dtype=float) / eps
        if not np.all(np.isfinite(q)) or np.ptp(q) > 1e-3 * max(1.0, np.max(np.abs(q))):
            raise NonConvex("phi'(z)/z has no finite limit at 0")

    def psi_table(self, lo: float, hi: float) -> "PsiTable":
        return PsiTable.build(self, lo, hi)


def _sqrt_dd(pair: ConvexPair, z: float) -> float:
    dd = float(pair.ddphi(np.asarray(z)))
    if dd < 0:
        raise NonConvex(f"phi'' < 0 at z = {z:.6g}")
    return math.sqrt(dd)


def psi_from_phi(pair: ConvexPair, z: float) -> float:
    """``Psi(z)``: the integral of ``sqrt(phi'')`` from 0 to ``z`` (adaptive quadrature)."""
    if z == 0:
        return 0.0
    val, _ = integrate.quad(lambda t: _sqrt_dd(pair, t), 0.0, z, epsabs=0.0, epsrel=1e-13, limit=200)
    return float(val)


@dataclass(frozen=True)
class PsiTable:
    """``Psi`` tabulated on a uniform grid over ``[lo, hi]`` and interpolated
    with cubic Hermite splines (slopes are ``sqrt(phi'')`` exactly)."""

    lo: float
    hi: float
    spline: CubicHermiteSpline

    @classmethod
    def build(cls, pair: ConvexPair, lo: float, hi: float, intervals: int = TABLE_INTERVALS):
        if not lo < hi:
            raise ValueError("empty table range")
        pair.check(lo, hi, intervals + 1)
        zs = np.linspace(lo, hi, intervals + 1)
        if lo < 0 < hi:
            zs = np.union1d(zs, [0.0])
        slopes = np.sqrt(np.asarray(pair.ddphi(zs), dtype=float))
        seg = _segments(pair, zs)
        # accumulate outward from the node nearest 0 so that Psi(0) = 0 exactly
        i0 = int(np.argmin(np.abs(zs)))
        vals = np.zeros_like(zs)
        vals[i0] = psi_from_phi(pair, zs[i0])
        vals[i0 + 1 :] = vals[i0] + np.cumsum(seg[i0:])
        vals[:i0] = vals[i0] - np.cumsum(seg[:i0][::-1])[::-1]
        return cls(lo, hi, CubicHermiteSpline(zs, vals, slopes, extrapolate=False))

    def __call__(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if np.any(z < self.lo) or np.any(z > self.hi):
            raise ValueError("Psi table queried outside its range")
        return self.spline(z)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def _segments(pair, zs):
    """Integral of ``sqrt(phi'')`` over each table interval (16-point Gauss-Legendre)."""
    a, b = zs[:-1, None], zs[1:, None]
    t = 0.5 * (a + b) + 0.5 * (b - a) * _GL_X[None, :]
    dd = np.asarray(pair.ddphi(t), dtype=float)
    if np.any(dd < 0):
        raise NonConvex("phi'' < 0 inside the table range")
    return 0.5 * (zs[1:] - zs[:-1]) * (np.sqrt(dd) @ _GL_W)


def convex_certify(
    op: DnOperator,
    g: SpectralField,
    pair: ConvexPair,
    c_cal: float | None = None,
    seed: int | None = None,
) -> CoercivityReport:
    """Compare ``<G g, phi'(g)>`` with ``M ||Psi(g)||^2``."""
    r = sup_norm(g)
    if r == 0:
        raise ConstantInput("g vanishes identically")
    table = pair.psi_table(-r, r)
    psi_g = SpectralField(g.grid, table(g.values))
    semi2 = half_norm(psi_g) ** 2
    _require_nonconstant(semi2, psi_g)
    if c_cal is None:
        c_cal = calibration_for(op)
    sol = op.solve(g)
    pairing = trace_pairing(sol, SpectralField(g.grid, pair.dphi(g.values)))
    bound = coercivity_bound_M(op.geometry, c_cal)
    ratio = pairing / semi2
    return CoercivityReport(
        geometry=op.describe(),
        pairing=pairing,
        pairing_energy=float("nan"),
        seminorm2=semi2,
        ratio=ratio,
        structural_factor=bound.structural,
        C_cal=c_cal,
        bound=bound.value,
        passed=ratio >= bound.value,
        seed=seed,
        extra={"phi": pair.name},
    )


# -- L^p bounds -----------------------------------------------------------------


def poincare_quotient(g: SpectralField, p: float) -> float:
    """``|| |g|^{p/2-1} g ||^{2/p}_{H^{1/2}} / ||g||_{L^p}``; its sweep minimum is ``1/C'``."""
    q = g.map(lambda v: np.abs(v) ** (p / 2 - 1) * v)
    return half_norm(q) ** (2.0 / p) / lp_norm(g, p)


@dataclass
class LpReport:
    p: float
    lhs: float
    bound: float
    power_seminorm2: float
    lp_p: float
    poincare_quotient: float
    power_passed: bool
    lp_passed: bool | None
    c_prime: float | None
    C_cal: float
    structural_factor: float

    def to_json(self) -> dict:
        return asdict(self)


def lp_certify(
    op: DnOperator,
    g: SpectralField,
    p: float,
    c_cal: float | None = None,
    c_prime: float | None = None,
) -> LpReport:
    """Both sides of the ``L^p`` lower bound for zero-mean ``g``.

    ``power_passed``: ``<G g, p|g|^{p-2}g> >= M 4(p-1)/p || |g|^{p/2-1} g ||^2``
    (the convex bound with ``phi = |z|^p``).
    ``lp_passed`` (needs ``c_prime``, the empirical Poincare constant):
    ``lhs >= (M/2) (|| |g|^{p/2-1} g ||^2 + c_prime^{-p} ||g||_p^p)``.
    """
    if p < 2:
        raise ValueError("p must be >= 2")
    scale = max(1.0, sup_norm(g))
    if abs(mean(g)) > 1e-10 * scale:
        raise NonZeroMean(f"mean(g) = {mean(g):.3e}")
    if c_cal is None:
        c_cal = calibration_for(op)
    power = g.map(lambda v: np.abs(v) ** (p / 2 - 1) * v)
    semi2 = half_norm(power) ** 2
    _require_nonconstant(semi2, g)
    sol = op.solve(g)
    lhs = trace_pairing(sol, g.map(lambda v: p * np.abs(v) ** (p - 2) * v))
    bound = coercivity_bound_M(op.geometry, c_cal)
    lp_p = lp_norm(g, p) ** p
    power_ok = lhs >= bound.value * 4 * (p - 1) / p * semi2
    lp_ok = None
    if c_prime is not None:
        lp_ok = lhs >= 0.5 * bound.value * (semi2 + c_prime**-p * lp_p)
    return LpReport(
        p=p,
        lhs=lhs,
        bound=bound.value,
        power_seminorm2=semi2,
        lp_p=lp_p,
        poincare_quotient=semi2 ** (1.0 / p) / lp_norm(g, p),
        power_passed=bool(power_ok),
        lp_passed=lp_ok,
        c_prime=c_prime,
        C_cal=c_cal,
        structural_factor=bound.structural,
    )


# -- random data ------------------------------------------------------------------


def random_zero_mean(
    grid: PeriodicGrid, rng: np.random.Generator, kmax: int = 16, decay: float = 1.0
) -> SpectralField:
    """Zero-mean band-limited data with ``|k|^-decay`` amplitudes, unit L2 norm."""
    kmax = min(kmax, grid.n // 8)
    k = np.arange(1, kmax + 1)
    amp = rng.standard_normal(kmax) * k**-decay
    phase = rng.uniform(0.0, 2 * np.pi, kmax)
    vals = np.sum(amp[:, None] * np.cos(k[:, None] * grid.x[None, :] + phase[:, None]), axis=0)
    g = SpectralField(grid, vals)
    return g * (1.0 / lp_norm(g, 2))


def poincare_sweep(grid: PeriodicGrid, p: float, draws: int, seed: int) -> np.ndarray:
    """Poincare quotients of ``draws`` seeded zero-mean samples."""
    rng = np.random.default_rng(seed)
    return np.array([poincare_quotient(random_zero_mean(grid, rng), p) for _ in range(draws)])
