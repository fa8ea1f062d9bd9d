"""Command-line front end: ``dnlab <command> [flags]``.

Every run writes JSON reports, CSV series, PNG figures and a
``manifest.json`` holding the resolved configuration, seed, code version
and the SHA-256 of each output. Passing a manifest back through
``--config`` reproduces the outputs byte for byte.

Exit codes: 0 ok, 1 configuration error, 2 tolerance failure,
3 stability violation in a time integration.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import math
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__, plotting
from .coercivity import (
    ConvexPair,
    calibrated_constant,
    certify,
    convex_certify,
    lp_certify,
    poincare_sweep,
    random_zero_mean,
    sharp_constant,
)
from .config import MANIFEST_KEY, ExperimentConfig, parse_config, read_config_text
from .dno import DnOperator, flat_symbol
from .domain import (
    BoundaryFn,
    HalfSpaceGeometry,
    StripGeometry,
    load_boundary_csv,
    preset,
    random_lipschitz,
)
from .errors import ConfigError, DnlabError, StabilityViolation
from .muskat import MuskatConfig, fit_decay, integrability_check, simulate
from .spectral import PeriodicGrid, SpectralField, mean, sup_norm

log = logging.getLogger("dnlab")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_TOLERANCE = 2
EXIT_STABILITY = 3
MANIFEST_VERSION = 1
EXECUTION_ONLY = ("out", "threads")


# -- output handling ---------------------------------------------------------------


def _plain(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_plain(v) for v in obj.tolist()]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        return x if math.isfinite(x) else repr(x)
    return obj


def _cell(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return "" if v is None else str(v)


class Report:
    """Output directory for one run; keeps the list of files it wrote."""

    def __init__(self, out: Path, figures: bool = True):
        self.out = Path(out)
        self.out.mkdir(parents=True, exist_ok=True)
        self.figures = figures
        self.files: list[str] = []

    def _path(self, name: str) -> Path:
        if name not in self.files:
            self.files.append(name)
        return self.out / name

    def json(self, name: str, data) -> None:
        text = json.dumps(_plain(data), indent=2, sort_keys=True) + "\n"
        self._path(name).write_text(text)

    def csv(self, name: str, header: list[str], rows: list) -> None:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_cell(v) for v in _iter(row, header)])
        self._path(name).write_text(buf.getvalue())

    def text(self, name: str, text: str) -> None:
        self._path(name).write_text(text)

    def figure(self, name: str, func, *args) -> None:
        if self.figures:
            func(*args, self._path(name))

    def manifest(self, cfg: ExperimentConfig) -> dict:
        config = {k: v for k, v in cfg.resolved().items() if k not in EXECUTION_ONLY}
        outputs = {name: hashlib.sha256((self.out / name).read_bytes()).hexdigest() for name in sorted(self.files)}
        data = {
            MANIFEST_KEY: MANIFEST_VERSION,
            "command": cfg.command,
            "seed": cfg.seed,
            "code_version": __version__,
            "config": config,
            "outputs": outputs,
        }
        (self.out / "manifest.json").write_text(json.dumps(_plain(data), indent=2, sort_keys=True) + "\n")
        return data


def _iter(row, header):
    if isinstance(row, dict):
        return [row[h] for h in header]
    return list(row)


def _map(func, tasks: list, threads: int) -> list:
    """Ordered map; results do not depend on ``threads``."""
    if threads <= 1 or len(tasks) < 2:
        return [func(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=threads) as ex:
        return list(ex.map(func, tasks))


def _child_seeds(seed: int, count: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(count)]


# -- geometry construction ---------------------------------------------------------


def make_grid(cfg: ExperimentConfig) -> PeriodicGrid:
    return PeriodicGrid(cfg.resolution.nx, 1, cfg.resolution.period)


def boundary_field(cfg: ExperimentConfig, loc: tuple, grid: PeriodicGrid) -> SpectralField:
    """Boundary described by the :class:`BoundarySpec` at ``loc`` in ``cfg``."""
    spec = cfg
    for part in loc:
        spec = spec[part] if isinstance(part, int) else getattr(spec, part)
    if spec.csv is not None:
        try:
            fld = load_boundary_csv(spec.csv, grid.period)
        except (OSError, ValueError) as exc:
            raise cfg.error(loc + ("csv",), f"cannot load boundary {spec.csv!r}: {exc}") from None
        if fld.grid.n != grid.n:
            raise cfg.error(loc + ("csv",), f"boundary has {fld.grid.n} samples, grid has {grid.n}")
        return fld
    params = dict(spec.params)
    if spec.preset == "random-lip":
        params.setdefault("seed", cfg.seed)
    try:
        return preset(spec.preset, grid, **params)
    except (TypeError, ValueError) as exc:
        raise cfg.error(loc + ("params",), f"preset {spec.preset!r}: {exc}") from None


def random_geometry(grid: PeriodicGrid, kind: str, seed: int, sweep, depth: float):
    """Seeded Lipschitz geometry with ``|f'| <= max_slope``; strips also get a
    Lipschitz bottom and a thickness in ``[min_thickness, max_thickness]``."""
    rng = np.random.default_rng(seed)
    slope = sweep.max_slope * rng.uniform(0.1, 1.0)
    top = random_lipschitz(grid, int(rng.integers(2**32)), slope)
    if kind == "halfspace":
        return HalfSpaceGeometry(BoundaryFn.from_field(top), depth), rng
    b0 = random_lipschitz(grid, int(rng.integers(2**32)), sweep.max_slope * rng.uniform(0.0, 1.0))
    h = rng.uniform(sweep.min_thickness, sweep.max_thickness)
    bottom = b0 + (float(np.min(top.values - b0.values)) - h)
    return StripGeometry(BoundaryFn.from_field(top), BoundaryFn.from_field(bottom)), rng


def _calibrations(cfg: ExperimentConfig, grid: PeriodicGrid, kinds) -> dict:
    res = cfg.resolution
    return {k: calibrated_constant(k, grid, res.nz, res.grading, res.depth) for k in kinds}


# -- flat-check ----------------------------------------------------------------------


def run_flat_check(cfg: ExperimentConfig, report: Report) -> int:
    """Solver DN multiplier against ``|k| tanh(a|k|)`` and ``|k|`` on flat domains."""
    fc = cfg.flat_check
    res = cfg.resolution
    grid = make_grid(cfg)
    if max(fc.modes) >= grid.n // 2:
        raise cfg.error(("flat_check", "modes"), f"modes must stay below nx/2 = {grid.n // 2}")
    if res.nz % 2**fc.refinements or res.nz // 2**fc.refinements < 4:
        raise cfg.error(("resolution", "nz"), f"nz = {res.nz} cannot be halved {fc.refinements} times")
    levels = [res.nz // 2**r for r in range(fc.refinements, -1, -1)]
    flat = BoundaryFn.from_values(grid, np.zeros(grid.n))
    k_scale = 2 * np.pi / grid.period
    rows, summary = [], []
    for depth in fc.depths:
        label = "inf" if depth == "inf" else f"{depth:g}"
        if depth == "inf":
            geom = HalfSpaceGeometry(flat, res.depth)
            symbol = flat_symbol(math.inf)
        else:
            geom = StripGeometry(flat, BoundaryFn.from_values(grid, np.full(grid.n, -float(depth))))
            symbol = flat_symbol(float(depth))
        worst = []
        for nz in levels:
            op = DnOperator(geom, nz=nz, grading=res.grading)
            errs = []
            for k in fc.modes:
                g = SpectralField(grid, np.cos(k * k_scale * grid.x))
                computed = float(np.sum(op.apply(g).values * g.values) / np.sum(g.values**2))
                exact = float(symbol(np.array(k * k_scale)))
                err = abs(computed - exact) / exact
                errs.append(err)
                rows.append({"depth": label, "k": k, "nz": nz, "computed": computed, "exact": exact, "rel_error": err})
            worst.append(max(errs))
        orders = [math.log2(worst[i] / worst[i + 1]) for i in range(len(worst) - 1)]
        ok = worst[-1] < fc.tol and orders[-1] >= fc.min_order
        summary.append({"depth": label, "max_rel_error": worst[-1], "errors_by_nz": dict(zip(map(str, levels), worst)), "orders": orders, "pass": ok})
    passed = all(s["pass"] for s in summary)
    report.csv("flat_check.csv", ["depth", "k", "nz", "computed", "exact", "rel_error"], rows)
    report.json("flat_check.json", {"tol": fc.tol, "min_order": fc.min_order, "nz_levels": levels, "depths": summary, "pass": passed})
    report.figure("flat_check.png", plotting.flat_check_figure, rows)
    return EXIT_OK if passed else EXIT_TOLERANCE


# -- coercivity sweeps -------------------------------------------------------------


def _coercivity_task(task):
    cfg, kind, index, seed, c_cal = task
    grid = make_grid(cfg)
    sweep = cfg.coercivity
    res = cfg.resolution
    geom, rng = random_geometry(grid, kind, seed, sweep, res.depth)
    op = DnOperator(geom, nz=res.nz, grading=res.grading)
    rows = []
    for d in range(sweep.draws_per_boundary):
        g = random_zero_mean(grid, rng, kmax=sweep.data_kmax)
        rep = certify(op, g, c_cal, seed)
        rows.append({
            "kind": kind,
            "boundary": index,
            "draw": d,
            "seed": seed,
            "h": getattr(geom, "h", float("inf")),
            "lip_top": geom.top.lipschitz,
            "pairing": rep.pairing,
            "energy": rep.pairing_energy,
            "stokes_rel": abs(rep.pairing - rep.pairing_energy) / abs(rep.pairing_energy),
            "seminorm2": rep.seminorm2,
            "ratio": rep.ratio,
            "structural_factor": rep.structural_factor,
            "bound": rep.bound,
            "pass": rep.passed,
        })
    return rows


def _task_list(cfg, sweep, c_cals, seed_offset: int = 0):
    seeds = _child_seeds(cfg.seed + seed_offset, len(sweep.kinds) * sweep.boundaries)
    tasks = []
    for j, kind in enumerate(sweep.kinds):
        for i in range(sweep.boundaries):
            tasks.append((cfg, kind, i, seeds[j * sweep.boundaries + i], c_cals[kind]))
    return tasks


def _summarise(rows, key_fail="pass"):
    out = {}
    for kind in dict.fromkeys(r["kind"] for r in rows):
        sel = [r for r in rows if r["kind"] == kind]
        q = np.array([r["ratio"] / r["bound"] for r in sel])
        out[kind] = {
            "count": len(sel),
            "failures": sum(not r[key_fail] for r in sel),
            "min_ratio_over_bound": float(q.min()),
            "median_ratio_over_bound": float(np.median(q)),
        }
    return out


COERCIVITY_COLUMNS = [
    "kind", "boundary", "draw", "seed", "h", "lip_top", "pairing", "energy",
    "stokes_rel", "seminorm2", "ratio", "structural_factor", "bound", "pass",
]


def run_coercivity(cfg: ExperimentConfig, report: Report) -> int:
    """Quadratic lower bound on a seeded Lipschitz family."""
    grid = make_grid(cfg)
    c_cals = _calibrations(cfg, grid, cfg.coercivity.kinds)
    rows = [r for batch in _map(_coercivity_task, _task_list(cfg, cfg.coercivity, c_cals), cfg.threads) for r in batch]
    passed = all(r["pass"] for r in rows)
    report.csv("coercivity.csv", COERCIVITY_COLUMNS, rows)
    report.json("coercivity.json", {
        "C_cal": c_cals,
        "by_kind": _summarise(rows),
        "max_stokes_rel": max(r["stokes_rel"] for r in rows),
        "pass": passed,
    })
    report.figure(
        "coercivity.png", plotting.ratio_histogram,
        [r["ratio"] for r in rows], [r["bound"] for r in rows], [r["kind"] for r in rows], "quadratic pairing",
    )
    return EXIT_OK if passed else EXIT_TOLERANCE


def _psi_closed_form(p: float, z: np.ndarray) -> np.ndarray:
    return 2.0 * math.sqrt((p - 1) / p) * np.abs(z) ** (p / 2 - 1) * z


def _convex_task(task):
    cfg, kind, index, seed, c_cal = task
    grid = make_grid(cfg)
    cv = cfg.convex
    res = cfg.resolution
    geom, rng = random_geometry(grid, kind, seed, cv, res.depth)
    op = DnOperator(geom, nz=res.nz, grading=res.grading)
    p = 2.0 if cv.phi == "square" else cv.p
    pair = ConvexPair.power(p)
    rows = []
    for d in range(cv.draws_per_boundary):
        g = random_zero_mean(grid, rng, kmax=cv.data_kmax)
        rep = convex_certify(op, g, pair, c_cal, seed)
        r = sup_norm(g)
        table = pair.psi_table(-r, r)
        psi_err = float(np.max(np.abs(table(g.values) - _psi_closed_form(p, g.values))))
        row = {
            "kind": kind,
            "boundary": index,
            "draw": d,
            "seed": seed,
            "phi": pair.name,
            "pairing": rep.pairing,
            "psi_seminorm2": rep.seminorm2,
            "ratio": rep.ratio,
            "bound": rep.bound,
            "psi_max_error": psi_err,
            "quadratic_match": float("nan"),
            "pass": rep.passed,
        }
        if cv.phi == "square":
            quad = certify(op, g, c_cal, seed)
            row["quadratic_match"] = abs(rep.pairing - 2 * quad.pairing) / abs(2 * quad.pairing)
        rows.append(row)
    return rows


CONVEX_COLUMNS = [
    "kind", "boundary", "draw", "seed", "phi", "pairing", "psi_seminorm2",
    "ratio", "bound", "psi_max_error", "quadratic_match", "pass",
]


def run_convex(cfg: ExperimentConfig, report: Report) -> int:
    """Convex pairing bound with ``phi = z^2`` or ``|z|^p``."""
    grid = make_grid(cfg)
    c_cals = _calibrations(cfg, grid, cfg.convex.kinds)
    rows = [r for batch in _map(_convex_task, _task_list(cfg, cfg.convex, c_cals), cfg.threads) for r in batch]
    psi_err = max(r["psi_max_error"] for r in rows)
    match = [r["quadratic_match"] for r in rows if not math.isnan(r["quadratic_match"])]
    checks = {
        "direction": all(r["pass"] for r in rows),
        "psi_closed_form": psi_err <= 1e-10,
        "quadratic_match": (max(match) <= 1e-10) if match else True,
    }
    passed = all(checks.values())
    report.csv("convex.csv", CONVEX_COLUMNS, rows)
    report.json("convex.json", {
        "C_cal": c_cals,
        "phi": rows[0]["phi"],
        "by_kind": _summarise(rows),
        "max_psi_error": psi_err,
        "max_quadratic_match": max(match) if match else None,
        "checks": checks,
        "pass": passed,
    })
    report.figure(
        "convex.png", plotting.ratio_histogram,
        [r["ratio"] for r in rows], [r["bound"] for r in rows], [r["kind"] for r in rows], rows[0]["phi"],
    )
    return EXIT_OK if passed else EXIT_TOLERANCE


# -- L^p bounds ------------------------------------------------------------------------


def poincare_stability(quotients: np.ndarray) -> dict:
    """Empirical constant ``1 / min(quotient)`` over all draws and over the two halves."""
    half = len(quotients) // 2
    c_all = 1.0 / float(np.min(quotients))
    c1 = 1.0 / float(np.min(quotients[:half]))
    c2 = 1.0 / float(np.min(quotients[half:]))
    return {"c_prime": c_all, "c_prime_first_half": c1, "c_prime_second_half": c2, "relative_spread": abs(c1 - c2) / min(c1, c2)}


def _lp_task(task):
    cfg, kind, index, seed, c_cal, p, c_prime = task
    grid = make_grid(cfg)
    res = cfg.resolution
    sweep = cfg.lp.sweep
    geom, rng = random_geometry(grid, kind, seed, sweep, res.depth)
    op = DnOperator(geom, nz=res.nz, grading=res.grading)
    g = random_zero_mean(grid, rng, kmax=sweep.data_kmax)
    rep = lp_certify(op, g, p, c_cal, c_prime)
    return {
        "p": p,
        "kind": kind,
        "boundary": index,
        "seed": seed,
        "lhs": rep.lhs,
        "bound": rep.bound,
        "power_seminorm2": rep.power_seminorm2,
        "lp_p": rep.lp_p,
        "power_pass": rep.power_passed,
        "lp_pass": rep.lp_passed,
    }


def run_lp(cfg: ExperimentConfig, report: Report) -> int:
    """Empirical Poincare constant and the ``L^p`` lower bound."""
    lp = cfg.lp
    grid = make_grid(cfg)
    seeds = _child_seeds(cfg.seed, len(lp.ps))
    poincare_rows, stats, quotients = [], {}, {}
    for p, s in zip(lp.ps, seeds):
        q = poincare_sweep(grid, p, lp.draws, s)
        quotients[p] = q
        st = poincare_stability(q)
        st["finite"] = bool(np.all(np.isfinite(q)) and np.min(q) > 0)
        st["stable"] = st["relative_spread"] < lp.stability_tol
        stats[f"{p:g}"] = st
        poincare_rows += [{"p": p, "draw": i, "quotient": v} for i, v in enumerate(q)]
    rows = []
    if lp.certify_boundaries:
        c_cals = _calibrations(cfg, grid, lp.sweep.kinds)
        tasks = []
        for j, p in enumerate(lp.ps):
            sweep = lp.sweep.model_copy(update={"boundaries": lp.certify_boundaries})
            for t in _task_list(cfg, sweep, c_cals, seed_offset=j + 1):
                tasks.append(t + (p, stats[f"{p:g}"]["c_prime"]))
        rows = _map(_lp_task, tasks, cfg.threads)
    passed = all(s["finite"] and s["stable"] for s in stats.values()) and all(
        r["power_pass"] and r["lp_pass"] for r in rows
    )
    report.csv("poincare.csv", ["p", "draw", "quotient"], poincare_rows)
    if rows:
        report.csv("lp.csv", ["p", "kind", "boundary", "seed", "lhs", "bound", "power_seminorm2", "lp_p", "power_pass", "lp_pass"], rows)
    report.json("lp.json", {
        "poincare": stats,
        "certified": len(rows),
        "failures": sum(not (r["power_pass"] and r["lp_pass"]) for r in rows),
        "pass": passed,
    })
    report.figure("poincare.png", plotting.poincare_figure, quotients)
    return EXIT_OK if passed else EXIT_TOLERANCE


# -- sharp constant ------------------------------------------------------------------------


def run_sharp(cfg: ExperimentConfig, report: Report) -> int:
    """Smallest DN Rayleigh quotient for each configured geometry."""
    sh = cfg.sharp
    res = cfg.resolution
    grid = make_grid(cfg)
    rows, cases = [], []
    for i, case in enumerate(sh.cases):
        top = BoundaryFn.from_field(boundary_field(cfg, ("sharp", "cases", i, "top"), grid))
        if case.kind == "strip":
            level = float(np.min(top.values)) - case.depth
            geom = StripGeometry(top, BoundaryFn.from_values(grid, np.full(grid.n, level)))
        else:
            geom = HalfSpaceGeometry(top, case.depth)
        nz = case.nz or res.nz
        op = DnOperator(geom, nz=nz, grading=res.grading)
        sc = sharp_constant(op, tol=sh.solver_tol, maxiter=sh.maxiter, seed=cfg.seed + i)
        err = abs(sc.value - case.expected) if case.expected is not None else None
        ok = err is None or case.tol is None or err <= case.tol
        rows.append({
            "case": i, "kind": case.kind, "depth": case.depth, "nz": nz, "value": sc.value,
            "expected": case.expected, "abs_error": err, "tol": case.tol,
            "residual": sc.residual, "iterations": sc.iterations, "pass": ok,
        })
        cases.append({"kind": case.kind, "depth": case.depth, "value": sc.value, "eigenvector": sc.eigenvector})
    passed = all(r["pass"] for r in rows)
    cols = ["case", "kind", "depth", "nz", "value", "expected", "abs_error", "tol", "residual", "iterations", "pass"]
    report.csv("sharp.csv", cols, rows)
    report.json("sharp.json", {"cases": rows, "pass": passed})
    report.figure("sharp.png", plotting.sharp_figure, cases, grid.x)
    return EXIT_OK if passed else EXIT_TOLERANCE


# -- Muskat ------------------------------------------------------------------------------------


def muskat_checks(run, cfg: ExperimentConfig, f0: SpectralField, c_cal: float, sup_tol: float) -> dict:
    """Pass/skip/fail status for each configured check plus the numbers behind it."""
    mk = cfg.muskat
    rec = run.record
    flags = run.flags
    out = {"status": {}, "rates": {}, "floor": None}
    if "max_principle" in mk.checks:
        ok = flags["max_sup_increase"] <= sup_tol and flags["slope_max_principle"] != "fail"
        out["status"]["max_principle"] = "pass" if ok else "fail"
    if "mean" in mk.checks:
        ok = flags["max_mean_drift"] <= 1e-9 and flags.get("mean_error", 0.0) <= 1e-9
        out["status"]["mean"] = "pass" if ok else "fail"
    zero_mean = abs(mean(f0)) <= 1e-12 * max(1.0, sup_norm(f0))
    decays = len(rec) >= 10 and sup_norm(f0) > 0 and zero_mean
    if decays:
        lip0 = rec.meta["lip0"]
        out["floor"] = c_cal / (1.0 + lip0)
        keys = ["l2", "hhalf", "linf"] + [f"c_alpha_{a:g}" for a in mk.alphas]
        for key in keys:
            fit = fit_decay(rec, key, mk.fit_window)
            out["rates"][key] = {"rate": fit.rate, "r2": fit.r2, "samples": fit.samples}
    if "decay" in mk.checks:
        if not decays:
            out["status"]["decay"] = "skipped"
        else:
            fitted = ["l2"] + [f"c_alpha_{a:g}" for a in mk.alphas]
            ok = all(out["rates"][k]["r2"] >= mk.min_r2 and out["rates"][k]["rate"] > 0 for k in fitted)
            ok = ok and out["rates"]["l2"]["rate"] >= out["floor"]
            out["status"]["decay"] = "pass" if ok else "fail"
    integ = integrability_check(rec)
    out["integrals"] = integ
    if "integrability" in mk.checks:
        if len(rec) < 2:
            out["status"]["integrability"] = "skipped"
        else:
            ok = integ["tail_hhalf2"] < mk.tail_tol and integ["tail_dtf2"] < mk.tail_tol
            out["status"]["integrability"] = "pass" if ok else "fail"
    return out


def run_muskat(cfg: ExperimentConfig, report: Report) -> int:
    """Integrate the one-phase flow and write the trajectory and decay summary."""
    mk = cfg.muskat
    res = cfg.resolution
    grid = make_grid(cfg)
    f0 = boundary_field(cfg, ("muskat", "f0"), grid)
    mcfg = MuskatConfig(
        nz=res.nz, depth=res.depth, grading=res.grading, dt_max=mk.dt_max, cfl=mk.cfl,
        sample_dt=mk.sample_dt, alphas=tuple(mk.alphas), scheme=mk.scheme, depth_check=mk.depth_check,
    )
    try:
        run = simulate(f0, mk.T, mcfg, snapshot_every=mk.snapshot_every)
    except StabilityViolation as exc:
        log.error("stability violation: %s", exc)
        report.json("decay.json", {"error": "StabilityViolation", "message": str(exc), "pass": False})
        return EXIT_STABILITY
    c_cal = calibrated_constant("halfspace", grid, res.nz, res.grading, res.depth)
    checks = muskat_checks(run, cfg, f0, c_cal, mcfg.sup_tol_rel * sup_norm(f0))
    passed = all(s != "fail" for s in checks["status"].values())
    report.text("trajectory.csv", run.record.to_csv())
    if run.snapshots:
        snap_rows = [{"t": t, "x": x, "f": v} for t, f in run.snapshots for x, v in zip(grid.x, f)]
        report.csv("snapshots.csv", ["t", "x", "f"], snap_rows)
    report.json("decay.json", {
        "T": mk.T,
        "steps": run.steps,
        "samples": len(run.record),
        "C_cal": c_cal,
        "lip0": run.record.meta.get("lip0", run.final.lipschitz),
        "rates": checks["rates"],
        "floor": checks["floor"],
        "integrals": checks["integrals"],
        "flags": run.flags,
        "checks": checks["status"],
        "pass": passed,
    })
    if len(run.record) > 1:
        series = {k: run.record.column(k) for k in run.record.columns[1:]}
        report.figure("decay.png", plotting.decay_figure, run.record.t, series)
    if run.snapshots:
        report.figure("snapshots.png", plotting.snapshot_figure, grid.x, run.snapshots)
    return EXIT_OK if passed else EXIT_TOLERANCE


RUNNERS = {
    "flat-check": run_flat_check,
    "coercivity": run_coercivity,
    "convex": run_convex,
    "lp": run_lp,
    "sharp": run_sharp,
    "muskat": run_muskat,
}


# -- entry point ---------------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="dnlab", description="DN operator coercivity and Muskat experiments.")
    parser.add_argument("command", choices=list(RUNNERS))
    parser.add_argument("--config", type=Path, help="JSON config or a manifest.json from an earlier run")
    parser.add_argument("--seed", type=int, help="root seed; required for sweeps")
    parser.add_argument("--out", type=Path, help="output directory (default: out)")
    parser.add_argument("--threads", type=int, help="worker processes for sweeps; outputs do not depend on it")
    parser.add_argument("--nx", type=int, help="Fourier points in x (power of two)")
    parser.add_argument("--nz", type=int, help="finite elements in z")
    parser.add_argument("--depth", type=float, help="half-space truncation depth (>= 4)")
    parser.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    parser.add_argument("-v", "--verbose", action="store_true")
    return parser


def _overrides(args) -> dict:
    over: dict = {"command": args.command}
    if args.seed is not None:
        over["seed"] = args.seed
    if args.out is not None:
        over["out"] = str(args.out)
    if args.threads is not None:
        over["threads"] = args.threads
    if args.no_figures:
        over["figures"] = False
    res = {k: getattr(args, k) for k in ("nx", "nz", "depth") if getattr(args, k) is not None}
    if res:
        over["resolution"] = res
    return over


def run(cfg: ExperimentConfig) -> int:
    """Execute one resolved configuration and write its manifest."""
    report = Report(Path(cfg.out), cfg.figures)
    with threadpool_limits(limits=1):
        code = RUNNERS[cfg.command](cfg, report)
    report.manifest(cfg)
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.config is None:
            cfg = parse_config("", "<flags>", _overrides(args))
        else:
            text = read_config_text(args.config)
            _check_command(text, str(args.config), args.command)
            cfg = parse_config(text, str(args.config), _overrides(args))
        return run(cfg)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return EXIT_CONFIG
    except DnlabError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_TOLERANCE


def _check_command(text: str, source: str, command: str) -> None:
    """A config file naming a different command is rejected."""
    try:
        data = json.loads(text)
    except json.JSONDecodeError:
        return
    if not isinstance(data, dict):
        return
    if MANIFEST_KEY in data and isinstance(data.get("config"), dict):
        data = data["config"]
    named = data.get("command")
    if named is not None and named != command:
        line = text[: text.find('"command"')].count("\n") + 1
        raise ConfigError(f"{source}:{line}: command: file is for {named!r}, not {command!r}")


if __name__ == "__main__":
    sys.exit(main())
