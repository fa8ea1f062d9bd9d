import math

import numpy as np
import pytest

from dnlab.errors import NonPositiveValues, StabilityViolation
from dnlab.muskat import (
    DecayRecord,
    MuskatConfig,
    MuskatSolver,
    fit_decay,
    integrability_check,
    simulate,
)
from dnlab.spectral import PeriodicGrid, mean, sup_norm

GRID = PeriodicGrid(32)


def cos_mode(eps, k=1, grid=GRID):
    return grid.from_function(lambda x: eps * np.cos(k * x))


def amplitude(f, k=1):
    return 2 * abs(np.fft.rfft(f.values)[k]) / f.grid.n


def synthetic_record(t, l2):
    rec = DecayRecord((0.5,))
    width = len(rec.columns)
    rec.rows = [[ti, yi] + [1.0] * (width - 2) for ti, yi in zip(t, l2)]
    return rec


class TestRhs:
    def test_zero(self):
        assert np.all(MuskatSolver().rhs(GRID.field(np.zeros(32))).values == 0)

    def test_constant_interface_is_steady(self):
        r = MuskatSolver().rhs(GRID.field(np.full(32, 0.7)))
        assert np.max(np.abs(r.values)) < 1e-12

    @pytest.mark.parametrize("k", [1, 3])
    def test_small_mode_is_linearised_decay(self, k):
        eps = 1e-6
        r = MuskatSolver().rhs(cos_mode(eps, k))
        want = -k * cos_mode(eps, k).values
        assert np.max(np.abs(r.values - want)) < 1e-4 * eps * k


class TestStep:
    def test_imex_single_step(self):
        eps, dt = 1e-4, 1e-2
        s = MuskatSolver()
        new = s.step(s.initial_state(cos_mode(eps)), dt)
        assert amplitude(new.f) / eps == pytest.approx(math.exp(-dt), abs=1e-4)
        assert new.t == dt

    def test_rk4_single_step(self):
        eps, dt = 1e-4, 1e-2
        s = MuskatSolver(MuskatConfig(scheme="rk4"))
        new = s.step(s.initial_state(cos_mode(eps)), dt)
        assert amplitude(new.f) / eps == pytest.approx(math.exp(-dt), abs=1e-5)

    def test_imex_is_first_order(self):
        f0 = GRID.from_function(lambda x: 0.3 * np.cos(x) + 0.1 * np.sin(2 * x))
        errs = []
        for dt in (0.02, 0.01):
            s = MuskatSolver()
            st = s.initial_state(f0)
            full = s.step(st, dt)
            half = s.step(s.step(st, dt / 2), dt / 2)
            errs.append(np.max(np.abs(full.f.values - half.f.values)))
        assert errs[0] / errs[1] == pytest.approx(4.0, rel=0.1)

    def test_huge_rk4_step_violates_max_principle(self):
        s = MuskatSolver(MuskatConfig(scheme="rk4"))
        with pytest.raises(StabilityViolation):
            s.step(s.initial_state(cos_mode(0.1, 5)), 3.0)

    def test_step_keeps_mean_exactly(self):
        f0 = GRID.from_function(lambda x: 0.2 + 0.3 * np.cos(x))
        s = MuskatSolver()
        st = s.initial_state(f0)
        for _ in range(5):
            st = s.step(st, 0.01)
        assert abs(mean(st.f) - 0.2) < 1e-14

    def test_rejects_nonpositive_dt(self):
        s = MuskatSolver()
        with pytest.raises(ValueError):
            s.step(s.initial_state(cos_mode(0.1)), 0.0)

    def test_cfl_limit(self):
        s = MuskatSolver(MuskatConfig(dt_max=1.0, cfl=0.5))
        st = s.initial_state(cos_mode(1.0))
        lip = st.lipschitz
        assert s.dt_for(st) == pytest.approx(0.5 / (16 * lip))
        assert s.dt_for(s.initial_state(GRID.field(np.zeros(32)))) == 1.0

    def test_bad_scheme(self):
        with pytest.raises(ValueError):
            MuskatConfig(scheme="euler")


class TestDecayRecord:
    def test_columns(self):
        rec = DecayRecord((0.25, 0.5))
        assert rec.columns == ["t", "l2", "hhalf", "linf", "lipschitz", "c_alpha_0.25", "c_alpha_0.5", "dtf_hneghalf"]

    def test_times_must_increase(self):
        s = MuskatSolver()
        st = s.initial_state(cos_mode(0.1))
        rec = DecayRecord((0.5,))
        rec.append(st, s.rhs(st.f))
        with pytest.raises(ValueError):
            rec.append(st, s.rhs(st.f))

    def test_csv_round_trip(self):
        t = np.linspace(0, 1, 11)
        rec = synthetic_record(t, np.exp(-t) / 3)
        lines = rec.to_csv().splitlines()
        assert lines[0] == ",".join(rec.columns)
        assert float(lines[4].split(",")[1]) == np.exp(-t[3]) / 3


class TestFit:
    def test_exact_exponential(self):
        t = np.linspace(0, 5, 101)
        fit = fit_decay(synthetic_record(t, 2 * np.exp(-2 * t)), "l2")
        assert fit.rate == pytest.approx(2.0, rel=1e-12)
        assert fit.r2 == pytest.approx(1.0, abs=1e-12)
        assert fit.samples == 101

    def test_window(self):
        t = np.linspace(0, 5, 101)
        y = np.where(t < 2, np.exp(-5 * t), np.exp(-10) * np.exp(-(t - 2)))
        assert fit_decay(synthetic_record(t, y), "l2", (2.0, 5.0)).rate == pytest.approx(1.0, rel=1e-10)

    def test_too_few_samples(self):
        t = np.linspace(0, 1, 5)
        with pytest.raises(ValueError):
            fit_decay(synthetic_record(t, np.exp(-t)), "l2")

    def test_nonpositive(self):
        t = np.linspace(0, 1, 20)
        with pytest.raises(NonPositiveValues):
            fit_decay(synthetic_record(t, np.exp(-t) - 0.5), "l2")


class TestIntegrability:
    def test_empty_record(self):
        out = integrability_check(DecayRecord((0.5,)))
        assert all(v == 0.0 for v in out.values())

    def test_zero_data(self):
        run = simulate(GRID.field(np.zeros(32)), 1.0)
        out = integrability_check(run.record)
        assert all(v == 0.0 for v in out.values())

    def test_linear_regime_integrals(self):
        # f = eps e^{-t} cos x gives |f|^2_{H^{1/2}} = pi eps^2 e^{-2t}, |f_t|^2_{H^{-1/2}} = pi eps^2 e^{-2t} / sqrt 2
        eps, T = 1e-3, 3.0
        run = simulate(cos_mode(eps), T, MuskatConfig(dt_max=1e-3, sample_dt=0.025))
        out = integrability_check(run.record)
        base = math.pi * eps**2 / 2 * (1 - math.exp(-2 * T))
        assert out["hhalf2"] == pytest.approx(base, rel=2e-3)
        assert out["dtf2"] == pytest.approx(base / math.sqrt(2), rel=2e-3)
        assert out["tail_hhalf2"] == pytest.approx(math.exp(-T) * (1 - math.exp(-T)) / (1 - math.exp(-2 * T)), rel=1e-2)


class TestSimulate:
    def test_zero_horizon(self):
        run = simulate(cos_mode(0.1), 0.0)
        assert len(run.record) == 0 and run.steps == 0
        assert run.record.to_csv() == ",".join(run.record.columns) + "\n"
        assert run.final.f is not None

    def test_negative_horizon(self):
        with pytest.raises(ValueError):
            simulate(cos_mode(0.1), -1.0)

    def test_linear_rate(self):
        run = simulate(cos_mode(1e-3), 2.0, MuskatConfig(dt_max=1e-3))
        fit = fit_decay(run.record, "l2")
        assert fit.rate == pytest.approx(1.0, abs=1e-3)
        assert fit.r2 > 1 - 1e-10

    def test_sample_times(self):
        run = simulate(cos_mode(0.1), 0.5, MuskatConfig(sample_dt=0.1))
        assert np.allclose(run.record.t, np.arange(6) * 0.1, atol=1e-14, rtol=0)
        assert run.final.t == 0.5

    def test_nonlinear_run(self):
        grid = PeriodicGrid(64)
        f0 = grid.from_function(lambda x: 0.1 * np.cos(x) + 0.05 * np.sin(2 * x))
        run = simulate(f0, 10.0, snapshot_every=50)
        for key in ("l2", "hhalf", "c_alpha_0.5"):
            fit = fit_decay(run.record, key)
            assert fit.r2 >= 0.999 and fit.rate > 0
        assert run.flags["mean_error"] < 1e-9
        assert run.flags["max_sup_increase"] <= 1e-6 * sup_norm(f0)
        assert run.flags["slope_max_principle"] == "pass"
        linf = run.record.column("linf")
        assert np.all(np.diff(linf) <= 1e-12)
        assert [t for t, _ in run.snapshots] == pytest.approx([0.0, 2.45, 4.95, 7.45, 9.95])

    def test_nonzero_mean_is_conserved(self):
        f0 = GRID.from_function(lambda x: 0.15 + 0.2 * np.cos(x))
        run = simulate(f0, 1.0)
        assert run.flags["mean_error"] < 1e-9
        assert run.flags["max_mean_drift"] < 1e-9
        assert np.allclose(run.record.column("hhalf")[-1] / run.record.column("hhalf")[0], math.exp(-1), rtol=0.05)

    def test_depth_doubles_for_finite_amplitude(self):
        f0 = GRID.from_function(lambda x: 0.3 * np.cos(x) + 0.1 * np.cos(3 * x))
        run = simulate(f0, 0.05)
        assert run.flags["depth"] >= 16.0
        assert run.flags["depth_checks"][-1]["change"] < 1e-8

    def test_deterministic(self):
        f0 = GRID.from_function(lambda x: 0.2 * np.sin(x))
        a = simulate(f0, 0.3)
        b = simulate(f0, 0.3)
        assert a.record.to_csv() == b.record.to_csv()
