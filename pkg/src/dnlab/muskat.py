"""One-phase Muskat flow ``f_t = -G_f(f)`` on the torus over an infinitely deep fluid.

The stepper is first-order IMEX: the flat linearisation ``-|D|`` is treated
implicitly, the remainder ``|D| f - G_f(f)`` explicitly. The mean is
re-projected to its initial value after every step.
"""
from __future__ import annotations

import csv
import io
import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .dno import DnOperator
from .domain import (
    DEFAULT_GRADING,
    BoundaryFn,
    HalfSpaceGeometry,
    extend_nodes,
    graded_nodes,
)
from .elliptic import DEFAULT_TOL
from .errors import NonPositiveValues, StabilityViolation
from .spectral import (
    SpectralField,
    derivative,
    fine_sup,
    holder_norm,
    lp_norm,
    mean,
    norm_h_neg_half,
    seminorm_hs,
    sup_norm,
)

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class MuskatConfig:
    nz: int = 128
    depth: float = 8.0
    grading: float | None = DEFAULT_GRADING
    tol: float = DEFAULT_TOL
    dt_max: float = 5e-3
    cfl: float = 0.5
    sample_dt: float = 0.05
    alphas: tuple = (0.25, 0.5, 0.75)
    scheme: str = "imex"
    sup_tol_rel: float = 1e-6
    slope_tol: float = 1e-3
    slope_flag: float = 1e-2
    refresh: float = 0.05
    depth_check: bool = True
    depth_check_tol: float = 1e-8
    max_depth: float = 64.0

    def __post_init__(self):
        if self.scheme not in ("imex", "rk4"):
            raise ValueError("scheme must be 'imex' or 'rk4'")
        if self.dt_max <= 0 or self.sample_dt <= 0:
            raise ValueError("time steps must be positive")


@dataclass(frozen=True, eq=False)
class MuskatState:
    t: float
    f: SpectralField
    mean0: float

    @property
    def linf(self) -> float:
        return sup_norm(self.f)

    @property
    def lipschitz(self) -> float:
        return fine_sup(derivative(self.f).values)

    @property
    def mean(self) -> float:
        return mean(self.f)

    @property
    def l2(self) -> float:
        return lp_norm(self.f, 2)


class MuskatSolver:
    """Right-hand side and time stepping for a fixed grid and configuration."""

    def __init__(self, config: MuskatConfig = MuskatConfig()):
        self.config = config
        self.op: DnOperator | None = None
        self.z: np.ndarray | None = None
        self.depth = config.depth
        self.depth_checks: list[dict] = []
        self.max_mean_drift = 0.0

    def _make_op(self, f: SpectralField, depth: float, z: np.ndarray) -> DnOperator:
        geom = HalfSpaceGeometry(BoundaryFn.from_field(f), depth)
        cfg = self.config
        return DnOperator(geom, nz=len(z) - 1, grading=cfg.grading, tol=cfg.tol, z=z, refresh=cfg.refresh)

    def _ensure_op(self, f: SpectralField):
        if self.op is not None:
            return
        cfg = self.config
        self.z = graded_nodes(self.depth, cfg.nz, cfg.grading)
        self.op = self._make_op(f, self.depth, self.z)

    def rhs(self, f: SpectralField) -> SpectralField:
        """``-G_f(f)``: DN map of the half space below ``f`` applied to ``f``."""
        self._ensure_op(f)
        self.op.update_top(f)
        return -self.op.apply(f)

    def check_depth(self, f: SpectralField) -> float:
        """Double the truncation depth until the right-hand side moves by less
        than ``depth_check_tol`` (sup norm); the top mesh is kept fixed."""
        cfg = self.config
        self._ensure_op(f)
        current = self.rhs(f)
        while True:
            z2 = extend_nodes(self.z, 2 * self.depth)
            op2 = self._make_op(f, 2 * self.depth, z2)
            deeper = -op2.apply(f)
            change = float(np.max(np.abs(deeper.values - current.values)))
            self.depth_checks.append({"depth": self.depth, "doubled": 2 * self.depth, "change": change})
            if change < cfg.depth_check_tol:
                return self.depth
            if 2 * self.depth > cfg.max_depth:
                log.warning("depth check not met at depth %g (change %.2e)", self.depth, change)
                return self.depth
            self.depth, self.z, self.op, current = 2 * self.depth, z2, op2, deeper

    def dt_for(self, state: MuskatState) -> float:
        grid = state.f.grid
        kmax = grid.n / 2 * (2 * np.pi / grid.period)
        lip = state.lipschitz
        if lip == 0:
            return self.config.dt_max
        return min(self.config.dt_max, self.config.cfl / (kmax * lip))

    def step(self, state: MuskatState, dt: float, rhs_now: SpectralField | None = None) -> MuskatState:
        if dt <= 0:
            raise ValueError("dt must be positive")
        f = state.f
        r = rhs_now if rhs_now is not None else self.rhs(f)
        grid = f.grid
        n = grid.n
        if self.config.scheme == "imex":
            xi = grid.abs_xi()
            fh = np.fft.fft(f.values)
            rh = np.fft.fft(r.values)
            new = (fh + dt * (xi * fh + rh)) / (1.0 + dt * xi)
        else:
            k1 = r
            k2 = self.rhs(f + k1 * (0.5 * dt))
            k3 = self.rhs(f + k2 * (0.5 * dt))
            k4 = self.rhs(f + k3 * dt)
            vals = f.values + dt / 6.0 * (k1.values + 2 * k2.values + 2 * k3.values + k4.values)
            new = np.fft.fft(vals)
        drift = abs(new[0].real / n - state.mean0)
        self.max_mean_drift = max(self.max_mean_drift, drift)
        new[0] = state.mean0 * n
        f_new = SpectralField(grid, np.fft.ifft(new).real)
        tol = self.config.sup_tol_rel * self._sup0
        if sup_norm(f_new) > sup_norm(f) + tol:
            raise StabilityViolation(
                f"sup norm rose from {sup_norm(f):.12g} to {sup_norm(f_new):.12g} at t={state.t:.6g}, dt={dt:.3g}"
            )
        return MuskatState(state.t + dt, f_new, state.mean0)

    def initial_state(self, f0: SpectralField) -> MuskatState:
        self._sup0 = sup_norm(f0)
        return MuskatState(0.0, f0, mean(f0))


@dataclass
class DecayRecord:
    """Sampled diagnostics; one row per sample time."""

    alphas: tuple
    rows: list = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    @property
    def columns(self) -> list[str]:
        return (
            ["t", "l2", "hhalf", "linf", "lipschitz"]
            + [f"c_alpha_{a:g}" for a in self.alphas]
            + ["dtf_hneghalf"]
        )

    def append(self, state: MuskatState, dtf: SpectralField):
        if self.rows and state.t <= self.rows[-1][0]:
            raise ValueError("sample times must increase strictly")
        f = state.f
        row = [state.t, lp_norm(f, 2), seminorm_hs(f, 0.5), sup_norm(f), state.lipschitz]
        row += [holder_norm(f, a) for a in self.alphas]
        row.append(norm_h_neg_half(dtf))
        self.rows.append(row)

    def __len__(self):
        return len(self.rows)

    def column(self, key: str) -> np.ndarray:
        idx = self.columns.index(key)
        return np.array([r[idx] for r in self.rows], dtype=float)

    @property
    def t(self) -> np.ndarray:
        return self.column("t")

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(self.columns)
        for r in self.rows:
            writer.writerow([repr(float(v)) for v in r])
        return buf.getvalue()


@dataclass(frozen=True)
class DecayFit:
    rate: float
    r2: float
    samples: int


def fit_decay(record: DecayRecord, key: str, window: tuple | None = None) -> DecayFit:
    """Least-squares line through ``(t, log y)``; the rate is minus the slope."""
    t = record.t
    y = record.column(key)
    if window is not None:
        sel = (t >= window[0]) & (t <= window[1])
        t, y = t[sel], y[sel]
    if len(t) < 10:
        raise ValueError(f"need at least 10 samples in the window, got {len(t)}")
    if np.any(y <= 0):
        raise NonPositiveValues(f"column {key!r} has nonpositive values")
    ly = np.log(y)
    slope, icpt = np.polyfit(t, ly, 1)
    resid = ly - (slope * t + icpt)
    ss_tot = np.sum((ly - ly.mean()) ** 2)
    r2 = 1.0 - np.sum(resid**2) / ss_tot if ss_tot > 0 else 1.0
    return DecayFit(float(-slope), float(r2), len(t))


def _trapezoid(t, y):
    if len(t) < 2:
        return 0.0
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(t)))


def integrability_check(record: DecayRecord) -> dict:
    """Time integrals of ``||f||^2_{H^{1/2}}`` and ``||f_t||^2_{H^{-1/2}}`` over
    ``[0, T]`` and ``[0, T/2]`` with the relative tail between them."""
    t = record.t
    out = {}
    if len(t) == 0:
        return {"hhalf2": 0.0, "dtf2": 0.0, "hhalf2_half": 0.0, "dtf2_half": 0.0, "tail_hhalf2": 0.0, "tail_dtf2": 0.0}
    half = t <= 0.5 * t[-1] + 1e-12
    for key, col in (("hhalf2", "hhalf"), ("dtf2", "dtf_hneghalf")):
        y = record.column(col) ** 2
        full = _trapezoid(t, y)
        part = _trapezoid(t[half], y[half])
        out[key] = full
        out[key + "_half"] = part
        out["tail_" + key] = (full - part) / full if full > 0 else 0.0
    return out


@dataclass
class MuskatRun:
    record: DecayRecord
    final: MuskatState
    steps: int
    flags: dict
    snapshots: list = field(default_factory=list)


def simulate(
    f0: SpectralField,
    T: float,
    config: MuskatConfig = MuskatConfig(),
    snapshot_every: int = 0,
) -> MuskatRun:
    """Integrate to time ``T`` sampling diagnostics every ``config.sample_dt``.

    ``T = 0`` returns an empty record. ``snapshot_every > 0`` keeps the
    interface profile at every that-many-th sample.
    """
    if T < 0:
        raise ValueError("T must be nonnegative")
    solver = MuskatSolver(config)
    state = solver.initial_state(f0)
    record = DecayRecord(tuple(config.alphas))
    lip0 = state.lipschitz
    flags = {
        "max_mean_drift": 0.0,
        "max_sup_increase": 0.0,
        "max_slope_excess": 0.0,
        "max_l2_increase": 0.0,
        "depth": config.depth,
    }
    if T == 0:
        return MuskatRun(record, state, 0, _finish_flags(flags, config, solver))
    if config.depth_check and sup_norm(f0) > 0:
        flags["depth"] = solver.check_depth(f0)
    snaps = []
    r = solver.rhs(state.f)
    record.append(state, r)
    if snapshot_every:
        snaps.append((state.t, state.f.values.copy()))
    next_sample = config.sample_dt
    steps = 0
    eps = 1e-12 * max(1.0, T)
    while state.t < T - eps:
        target = min(next_sample, T)
        dt = min(solver.dt_for(state), target - state.t)
        new = solver.step(state, dt, r)
        flags["max_sup_increase"] = max(flags["max_sup_increase"], new.linf - state.linf)
        flags["max_l2_increase"] = max(flags["max_l2_increase"], new.l2 - state.l2)
        if lip0 > 0:
            flags["max_slope_excess"] = max(flags["max_slope_excess"], new.lipschitz / lip0 - 1.0)
        state = new
        steps += 1
        r = solver.rhs(state.f)
        if state.t >= target - eps:
            state = replace(state, t=target)
            record.append(state, r)
            if snapshot_every and len(record) % snapshot_every == 0:
                snaps.append((state.t, state.f.values.copy()))
            next_sample = target + config.sample_dt
    flags["depth_checks"] = solver.depth_checks
    flags["max_mean_drift"] = solver.max_mean_drift
    flags["mean_error"] = abs(state.mean - mean(f0))
    record.meta = {"lip0": lip0, "steps": steps}
    return MuskatRun(record, state, steps, _finish_flags(flags, config, solver), snaps)


def _finish_flags(flags: dict, config: MuskatConfig, solver: MuskatSolver) -> dict:
    excess = flags["max_slope_excess"]
    if excess <= config.slope_tol:
        slope = "pass"
    elif excess <= config.slope_flag:
        slope = "flag"
    else:
        slope = "fail"
    flags["slope_max_principle"] = slope
    flags["preconditioner_builds"] = solver.op.preconditioner_builds if solver.op else 0
    return flags
