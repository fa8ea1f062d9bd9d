"""Galerkin solver for ``div(A grad v) = 0`` on the flattened strip.

Discretisation: Fourier collocation in x (coefficient products on the 3/2
grid) times continuous P1 elements in z, two-point Gauss quadrature per cell.
The bilinear form

    a(u, w) = sum_{cells, q} w_q hz dx_f sum_m (P grad u)^T A (P grad w)

is assembled matrix-free; ``K`` below is its Euclidean matrix
(``a(u, w) = w . K u``). The top row of nodes carries Dirichlet data, the
bottom Neumann condition is natural.

The Dirichlet-to-Neumann trace is defined by ``<G_h g, w> = a(v, E w)``
with ``E w`` the top-row hat extension, i.e. ``G_h g = (K v)_top / dx``.
With this choice ``<G_h g, g> = a(v, v)`` up to the interior residual, so the
energy identity is tested at solver tolerance rather than at
discretisation order.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .domain import GAUSS_S, GAUSS_W, FlattenedSystem
from .errors import NoConvergence
from .spectral import PeriodicGrid, SpectralField, pad_spectrum, padded_size, truncate_spectrum

DEFAULT_TOL = 1e-14


class DiscreteOperator:
    """Matrix-free stiffness operator ``K`` on node arrays of shape ``(nz + 1, n)``."""

    def __init__(self, system: FlattenedSystem):
        self.system = system
        grid = system.grid
        self.n = grid.n
        self.m = padded_size(grid.n)
        k = grid.wavenumbers()[: self.n // 2 + 1].copy()
        k[-1] = 0.0  # Nyquist carries no derivative
        self.ik = 1j * k
        self.hz = system.hz
        dx_f = grid.period / self.m
        # quadrature weight per Gauss point and cell, folded into the fluxes
        self.wq = [GAUSS_W[q] * dx_f * self.hz[:, None] for q in range(2)]

    def _to_fine(self, half: np.ndarray) -> np.ndarray:
        return np.fft.irfft(pad_spectrum(half, self.n), n=self.m, axis=-1)

    def _from_fine(self, vals: np.ndarray) -> np.ndarray:
        return truncate_spectrum(np.fft.rfft(vals, axis=-1), self.n)

    def apply(self, u: np.ndarray) -> np.ndarray:
        sys = self.system
        uh = np.fft.rfft(u, axis=-1)
        duh = (uh[1:] - uh[:-1]) / self.hz[:, None]
        uz = self._to_fine(duh)
        rh = np.zeros_like(uh)
        fz_total = 0.0
        for q, s in enumerate(GAUSS_S):
            ux = self._to_fine(self.ik * ((1.0 - s) * uh[:-1] + s * uh[1:]))
            fx = (sys.a11[q] * ux + sys.a12[q] * uz) * self.wq[q]
            fz_total = fz_total + (sys.a12[q] * ux + sys.a22[q] * uz) * self.wq[q]
            gx = -self.ik * self._from_fine(fx)
            rh[:-1] += (1.0 - s) * gx
            rh[1:] += s * gx
        gz = self._from_fine(fz_total / self.hz[:, None])
        rh[:-1] -= gz
        rh[1:] += gz
        return np.fft.irfft(rh, n=self.n, axis=-1)

    def energy(self, u: np.ndarray) -> float:
        return float(np.sum(u * self.apply(u)))


class FlatPreconditioner:
    """Exact inverse of the x-averaged operator, mode by mode in x.

    With coefficients replaced by their x-means the mixed term vanishes
    (``rho_x`` has zero mean) and every Fourier mode decouples into a
    tridiagonal system in z, solved here by a vectorised Thomas sweep.
    For flat geometries this is the exact interior inverse.
    """

    def __init__(self, system: FlattenedSystem):
        grid = system.grid
        n = grid.n
        self.n = n
        self.dx = grid.dx
        k = grid.wavenumbers()[: n // 2 + 1].copy()
        k[-1] = 0.0
        scale = np.ones(n // 2 + 1)
        scale[-1] = 0.5  # padded Nyquist mode has half the coarse L2 weight
        self.scale = scale
        hz = system.hz
        nz = len(hz)
        a11 = system.a11.mean(axis=-1)  # (2, nz)
        a22 = system.a22.mean(axis=-1)
        k2 = (k**2)[:, None]
        diag = np.zeros((n // 2 + 1, nz + 1))
        off = np.zeros((n // 2 + 1, nz))
        for q, s in enumerate(GAUSS_S):
            w = GAUSS_W[q] * hz
            mass = w * a11[q]
            stiff = w * a22[q] / hz**2
            diag[:, :-1] += k2 * mass * (1 - s) ** 2 + stiff
            diag[:, 1:] += k2 * mass * s**2 + stiff
            off += k2 * mass * s * (1 - s) - stiff
        self.diag, self.off = diag, off
        # Thomas factorisation of the interior block (rows 0 .. nz-1), z-major
        d = diag[:, :nz].T.copy()
        e = off[:, : nz - 1].T.copy()
        den = np.empty_like(d)
        cp = np.empty_like(e)
        den[0] = d[0]
        for i in range(nz - 1):
            cp[i] = e[i] / den[i]
            den[i + 1] = d[i + 1] - e[i] * cp[i]
        self._e, self._den, self._cp = e, den, cp

    def _tridiag_solve(self, rhs: np.ndarray) -> np.ndarray:
        e, den, cp = self._e, self._den, self._cp
        nz = rhs.shape[0]
        y = np.empty_like(rhs)
        y[0] = rhs[0] / den[0]
        for i in range(1, nz):
            y[i] = (rhs[i] - e[i - 1] * y[i - 1]) / den[i]
        for i in range(nz - 2, -1, -1):
            y[i] -= cp[i] * y[i + 1]
        return y

    def apply(self, r_interior: np.ndarray) -> np.ndarray:
        rh = np.fft.rfft(r_interior, axis=-1) / (self.dx * self.scale)
        return np.fft.irfft(self._tridiag_solve(rh), n=self.n, axis=-1)

    def lift(self, g: np.ndarray) -> np.ndarray:
        """Node array with top row ``g`` and the flat harmonic extension below."""
        nz = self.diag.shape[1] - 1
        gh = np.fft.rfft(g)
        rhs = np.zeros((nz, len(gh)), dtype=complex)
        rhs[-1] = -self.off[:, nz - 1] * gh
        v = np.empty((nz + 1, self.n))
        v[:nz] = np.fft.irfft(self._tridiag_solve(rhs), n=self.n, axis=-1)
        v[nz] = g
        return v

    def flat_symbol(self) -> np.ndarray:
        """Discrete DN multiplier of the averaged operator for ``k = 0 .. n/2``.

        For a flat geometry this is exactly what :func:`solve` + :func:`dn_trace`
        return on ``cos(k x)``.
        """
        nz = self.diag.shape[1] - 1
        ones = np.ones(self.n // 2 + 1, dtype=complex)
        rhs = np.zeros((nz, len(ones)), dtype=complex)
        rhs[-1] = -self.off[:, nz - 1]
        u = self._tridiag_solve(rhs)
        flux = self.off[:, nz - 1] * u[-1] + self.diag[:, nz]
        sym = (flux * self.scale).real
        sym[-1] = np.nan  # Nyquist is not a meaningful single mode
        return sym


@dataclass(eq=False)
class EllipticSolution:
    grid: PeriodicGrid
    z: np.ndarray
    v: np.ndarray
    kv: np.ndarray
    residual: float
    iterations: int
    energy_history: list = field(default_factory=list)

    @property
    def top_flux(self) -> np.ndarray:
        return self.kv[-1]


def pcg(apply_a, precond, r0, tol_abs, maxiter):
    """Preconditioned CG for ``A x = r0`` from ``x = 0``.

    Returns ``(x, residual_norm, iterations, J)`` with ``J`` the running
    value of ``x.A x / 2 - r0.x`` after every iteration.
    """
    x = np.zeros_like(r0)
    r = r0.copy()
    rnorm = np.linalg.norm(r)
    history = [0.0]
    if rnorm <= tol_abs:
        return x, rnorm, 0, history
    z = precond(r)
    p = z.copy()
    rz = np.sum(r * z)
    for it in range(1, maxiter + 1):
        ap = apply_a(p)
        pap = np.sum(p * ap)
        if pap <= 0:
            raise NoConvergence(f"non-positive curvature {pap:.3e} at iteration {it}")
        alpha = rz / pap
        x += alpha * p
        r -= alpha * ap
        history.append(history[-1] - 0.5 * alpha * rz)
        rnorm = np.linalg.norm(r)
        if rnorm <= tol_abs:
            return x, rnorm, it, history
        z = precond(r)
        rz_new = np.sum(r * z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise NoConvergence(f"CG did not reach {tol_abs:.2e} in {maxiter} iterations (last {rnorm:.2e})")


def solve(
    system: FlattenedSystem,
    g: SpectralField,
    tol: float = DEFAULT_TOL,
    maxiter: int | None = None,
    operator: DiscreteOperator | None = None,
    precond: FlatPreconditioner | None = None,
) -> EllipticSolution:
    """Galerkin harmonic extension of ``g`` into the flattened domain.

    ``tol`` bounds the interior residual relative to the residual of the
    top-row-only extension of ``g``.
    """
    if g.grid != system.grid:
        raise ValueError("g must live on the system's x-grid")
    if tol <= 0:
        raise ValueError("tol must be positive")
    op = operator or DiscreteOperator(system)
    pre = precond or FlatPreconditioner(system)
    nz = system.nz
    if maxiter is None:
        maxiter = 10 * system.grid.n * nz

    top_only = np.zeros((nz + 1, system.grid.n))
    top_only[-1] = g.values
    bnorm = np.linalg.norm(op.apply(top_only)[:-1])

    v0 = pre.lift(g.values)
    kv0 = op.apply(v0)
    e0 = float(np.sum(v0 * kv0))

    def apply_ii(d):
        full = np.zeros((nz + 1, system.grid.n))
        full[:-1] = d
        return op.apply(full)[:-1]

    delta, _, iters, history = pcg(apply_ii, pre.apply, -kv0[:-1], tol * bnorm, maxiter)
    v = v0
    v[:-1] += delta
    kv = op.apply(v)
    res = np.linalg.norm(kv[:-1]) / bnorm if bnorm > 0 else 0.0
    return EllipticSolution(
        system.grid, system.z, v, kv, float(res), iters, [e0 + 2 * j for j in history]
    )


def dn_trace(sol: EllipticSolution) -> SpectralField:
    return SpectralField(sol.grid, sol.top_flux / sol.grid.dx)


def dirichlet_energy(sol: EllipticSolution) -> float:
    return float(np.sum(sol.v * sol.kv))


def trace_pairing(sol: EllipticSolution, w: SpectralField) -> float:
    """``<G_h g, w>`` evaluated as ``a(v, E w)``."""
    return float(np.sum(sol.top_flux * w.values))
