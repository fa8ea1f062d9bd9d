"""Acceptance suite: one test per criterion, each timed against its runtime limit.

Every test prints a single ``ACCEPTANCE <n> PASS|FAIL`` line.
"""
import csv
import json
import math
import time

import numpy as np
import pytest

from dnlab.cli import EXIT_OK, main, random_geometry
from dnlab.coercivity import ConvexPair, certify, random_zero_mean
from dnlab.config import Sweep
from dnlab.dno import DnOperator
from dnlab.muskat import MuskatConfig, fit_decay, simulate
from dnlab.spectral import PeriodicGrid, sup_norm

SEED = 2024


@pytest.fixture
def announce(pytestconfig):
    reporter = pytestconfig.pluginmanager.get_plugin("terminalreporter")

    def emit(number, ok, elapsed, limit, detail):
        budget = f"{elapsed:.1f}s" + (f" of {limit:.0f}s" if limit else "")
        line = f"ACCEPTANCE {number} {'PASS' if ok else 'FAIL'} [{budget}] {detail}"
        if reporter is not None:
            reporter.write_line("")
            reporter.write_line(line)
        else:
            print(line)

    return emit


def run_cli(args):
    t0 = time.perf_counter()
    code = main(args)
    return code, time.perf_counter() - t0


def load(path):
    return json.loads(path.read_text())


def read_csv(path):
    with open(path) as fh:
        return list(csv.DictReader(fh))


def tree(root):
    return {p.name: p.read_bytes() for p in sorted(root.iterdir())}


def test_1_flat_oracle(tmp_path, announce):
    code, elapsed = run_cli(["flat-check", "--out", str(tmp_path)])
    rep = load(tmp_path / "flat_check.json")
    by_depth = {d["depth"]: d for d in rep["depths"]}
    worst = {k: d["max_rel_error"] for k, d in by_depth.items()}
    ok = (
        code == EXIT_OK
        and set(by_depth) == {"1", "2", "inf"}
        and max(worst.values()) <= 1e-4
        and min(d["orders"][-1] for d in by_depth.values()) >= 1.9
        and rep["nz_levels"][-1] == 128
        and elapsed < 60
    )
    announce(1, ok, elapsed, 60, f"max rel error {worst}, orders {[round(d['orders'][-1], 2) for d in by_depth.values()]}")
    assert ok


def test_2_stokes_identity(announce):
    t0 = time.perf_counter()
    grid = PeriodicGrid(256)
    sweep = Sweep()
    worst = 0.0
    seeds = np.random.SeedSequence(SEED).spawn(50)
    for i, ss in enumerate(seeds):
        kind = "strip" if i % 2 else "halfspace"
        geom, rng = random_geometry(grid, kind, int(ss.generate_state(1)[0]), sweep, 8.0)
        g = grid.field(rng.standard_normal(grid.n))
        rep = certify(DnOperator(geom), g, 1.0)
        worst = max(worst, abs(rep.pairing - rep.pairing_energy) / abs(rep.pairing_energy))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-10 and elapsed < 120
    announce(2, ok, elapsed, 120, f"max relative Stokes gap {worst:.2e} over 50 pairs")
    assert ok


def test_3_coercivity_direction(tmp_path, announce):
    code, elapsed = run_cli(["coercivity", "--seed", str(SEED), "--out", str(tmp_path)])
    rep = load(tmp_path / "coercivity.json")
    rows = read_csv(tmp_path / "coercivity.csv")
    failures = sum(k["failures"] for k in rep["by_kind"].values())
    counts = {k: v["count"] for k, v in rep["by_kind"].items()}
    admissible = all(float(r["lip_top"]) <= 1 + 1e-12 for r in rows) and all(
        float(r["h"]) >= 0.5 - 1e-12 for r in rows if r["kind"] == "strip"
    )
    ok = code == EXIT_OK and failures == 0 and counts == {"halfspace": 100, "strip": 100} and admissible and elapsed < 600
    mins = {k: round(v["min_ratio_over_bound"], 3) for k, v in rep["by_kind"].items()}
    announce(3, ok, elapsed, 600, f"{failures} failures, min ratio/bound {mins}, C_cal {rep['C_cal']}")
    assert ok


def test_4_sharp_constant(tmp_path, announce):
    code, elapsed = run_cli(["sharp", "--seed", str(SEED), "--out", str(tmp_path)])
    cases = load(tmp_path / "sharp.json")["cases"]
    want = [(math.tanh(1.0), 1e-3), (math.tanh(2.0), 1e-3), (1.0, 1e-6)]
    ok = code == EXIT_OK and len(cases) == 3 and elapsed < 300
    ok = ok and all(abs(c["value"] - w) <= tol for c, (w, tol) in zip(cases, want))
    announce(4, ok, elapsed, 300, "errors " + ", ".join(f"{c['kind']} {c['depth']:g}: {c['abs_error']:.1e}" for c in cases))
    assert ok


def test_5_convex_pairing(tmp_path, announce):
    t0 = time.perf_counter()
    sq = tmp_path / "square"
    quart = tmp_path / "quartic"
    cfg_sq = tmp_path / "square.json"
    cfg_sq.write_text(json.dumps({"command": "convex", "convex": {"phi": "square"}}))
    code_sq = main(["convex", "--config", str(cfg_sq), "--seed", str(SEED), "--out", str(sq)])
    code_q = main(["convex", "--seed", str(SEED), "--out", str(quart)])
    rep_sq, rep_q = load(sq / "convex.json"), load(quart / "convex.json")
    # closed form of Psi for |z|^4 on a dense grid, independent of the sweep data
    table = ConvexPair.power(4.0).psi_table(-3.0, 3.0)
    z = np.linspace(-3.0, 3.0, 20001)
    psi_err = float(np.max(np.abs(table(z) - 2 * math.sqrt(3 / 4) * np.abs(z) * z)))
    draws = sum(v["count"] for v in rep_q["by_kind"].values())
    elapsed = time.perf_counter() - t0
    ok = (
        code_sq == EXIT_OK and code_q == EXIT_OK
        and rep_sq["max_quadratic_match"] <= 1e-10
        and rep_q["max_psi_error"] <= 1e-10 and psi_err <= 1e-10
        and rep_q["checks"]["direction"] and draws >= 100
    )
    announce(
        5, ok, elapsed, None,
        f"square vs 2x quadratic {rep_sq['max_quadratic_match']:.1e}, Psi error {max(psi_err, rep_q['max_psi_error']):.1e}, "
        f"{draws} quartic draws pass",
    )
    assert ok


def test_6_lp_poincare(tmp_path, announce):
    code, elapsed = run_cli(["lp", "--seed", str(SEED), "--out", str(tmp_path)])
    rep = load(tmp_path / "lp.json")
    stats = rep["poincare"]
    rows = read_csv(tmp_path / "poincare.csv")
    draws = {p: sum(1 for r in rows if float(r["p"]) == float(p)) for p in stats}
    ok = (
        code == EXIT_OK
        and set(stats) == {"2", "4"}
        and all(s["finite"] and s["relative_spread"] < 0.05 for s in stats.values())
        and all(n == 1000 for n in draws.values())
    )
    spreads = {p: f"{s['relative_spread']:.2%}" for p, s in stats.items()}
    announce(6, ok, elapsed, None, f"half-to-half spread {spreads}, C' {[round(s['c_prime'], 4) for s in stats.values()]}")
    assert ok


def test_7_muskat_linear(announce):
    t0 = time.perf_counter()
    grid = PeriodicGrid(64)
    f0 = grid.from_function(lambda x: 1e-3 * np.cos(x))
    run = simulate(f0, 5.0, MuskatConfig())
    fit = fit_decay(run.record, "l2")
    sup_ok = run.flags["max_sup_increase"] <= 1e-6 * sup_norm(f0)
    slope_ok = run.flags["slope_max_principle"] == "pass"
    elapsed = time.perf_counter() - t0
    ok = abs(fit.rate - 1.0) <= 1e-2 and run.flags["mean_error"] <= 1e-9 and sup_ok and slope_ok and elapsed < 120
    announce(
        7, ok, elapsed, 120,
        f"rate {fit.rate:.5f} (R2 {fit.r2:.8f}), mean error {run.flags['mean_error']:.1e}, "
        f"slope excess {run.flags['max_slope_excess']:.1e}",
    )
    assert ok


def test_8_muskat_nonlinear(tmp_path, announce):
    cfg = tmp_path / "muskat.json"
    cfg.write_text(json.dumps({"command": "muskat", "resolution": {"nx": 64}, "muskat": {"T": 20}}))
    code, elapsed = run_cli(["muskat", "--config", str(cfg), "--out", str(tmp_path / "o")])
    rep = load(tmp_path / "o" / "decay.json")
    keys = ["l2", "c_alpha_0.25", "c_alpha_0.5", "c_alpha_0.75"]
    rates = rep["rates"]
    integ = rep["integrals"]
    ok = (
        code == EXIT_OK
        and rep["T"] == 20
        and all(rates[k]["r2"] >= 0.99 and rates[k]["rate"] > 0 for k in keys)
        and rates["l2"]["rate"] >= rep["floor"]
        and integ["tail_hhalf2"] < 0.01 and integ["tail_dtf2"] < 0.01
        and elapsed < 900
    )
    summary = ", ".join(f"{k} {rates[k]['rate']:.3f}/R2 {rates[k]['r2']:.5f}" for k in keys)
    announce(8, ok, elapsed, 900, f"{summary}; floor {rep['floor']:.3f}; tails {integ['tail_hhalf2']:.1e}, {integ['tail_dtf2']:.1e}")
    assert ok


def test_9_manifest_rerun(tmp_path, announce):
    t0 = time.perf_counter()
    sweep_cfg = tmp_path / "sweep.json"
    sweep_cfg.write_text(json.dumps({"command": "convex", "resolution": {"nx": 64}, "convex": {"boundaries": 10}}))
    sim_cfg = tmp_path / "sim.json"
    sim_cfg.write_text(json.dumps({
        "command": "muskat",
        "resolution": {"nx": 32},
        "muskat": {"T": 1, "snapshot_every": 5, "f0": {"preset": "random-lip", "params": {"slope": 0.5}}},
    }))
    same = {}
    for name, command, cfg in (("sweep", "convex", sweep_cfg), ("simulation", "muskat", sim_cfg)):
        first, second = tmp_path / f"{name}_a", tmp_path / f"{name}_b"
        main([command, "--config", str(cfg), "--seed", "7", "--threads", "2", "--out", str(first)])
        main([command, "--config", str(first / "manifest.json"), "--threads", "1", "--out", str(second)])
        a, b = tree(first), tree(second)
        same[name] = a == b and len(a) >= 4
    elapsed = time.perf_counter() - t0
    ok = all(same.values())
    announce(9, ok, elapsed, None, f"byte-identical re-runs: {same}")
    assert ok
