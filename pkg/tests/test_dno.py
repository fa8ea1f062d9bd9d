import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import flat_halfspace, flat_strip, halfspace_with_top, random_data, random_geometry
from dnlab.dno import DnOperator, boundedness_report, flat_symbol
from dnlab.errors import ConstantInput
from dnlab.spectral import PeriodicGrid, SpectralField, apply_multiplier, inner, mean


class TestFlatSymbol:
    def test_half_space(self):
        assert flat_symbol(np.inf)(np.array(3.0)) == 3.0

    def test_unit_strip(self):
        assert flat_symbol(1.0)(np.array(1.0)) == pytest.approx(0.7615941559557649, rel=1e-15)

    def test_deepening_increases_to_one(self):
        vals = [flat_symbol(a)(np.array(1.0)) for a in (0.5, 1, 2, 4, 8, 16)]
        assert np.all(np.diff(vals) > 0)
        assert vals[-1] == pytest.approx(1.0, abs=1e-13)

    def test_rejects_nonpositive_depth(self):
        with pytest.raises(ValueError):
            flat_symbol(0.0)


class TestApply:
    def test_flat_unit_strip(self):
        grid = PeriodicGrid(16)
        g = grid.from_function(np.cos)
        out = DnOperator(flat_strip(grid, 1.0)).apply(g)
        assert np.allclose(out.values, np.tanh(1.0) * g.values, rtol=0, atol=3e-5)

    def test_flat_half_space_mode_two(self):
        grid = PeriodicGrid(16)
        g = grid.from_function(lambda x: np.cos(2 * x))
        out = DnOperator(flat_halfspace(grid)).apply(g)
        assert np.allclose(out.values, 2 * g.values, rtol=0, atol=1e-4)

    @pytest.mark.parametrize("depth", [1.0, 2.0, np.inf])
    def test_flat_matches_multiplier(self, depth):
        grid = PeriodicGrid(64)
        geom = flat_halfspace(grid) if np.isinf(depth) else flat_strip(grid, depth)
        g = random_data(grid, 3)
        out = DnOperator(geom).apply(g)
        want = apply_multiplier(g, flat_symbol(depth))
        err = np.max(np.abs(out.values - want.values)) / np.max(np.abs(want.values))
        assert err < 1e-4

    def test_flat_matches_multiplier_at_fine_vertical_resolution(self):
        grid = PeriodicGrid(32)
        g = grid.from_function(lambda x: np.cos(x) + 0.5 * np.sin(3 * x))
        out = DnOperator(flat_strip(grid, 1.0), nz=2048).apply(g)
        want = apply_multiplier(g, flat_symbol(1.0))
        assert np.max(np.abs(out.values - want.values)) < 1e-6

    def test_second_order_self_convergence(self):
        g_of = lambda grid: grid.from_function(np.cos)  # noqa: E731

        def value(n, nz):
            grid = PeriodicGrid(n)
            op = DnOperator(halfspace_with_top(grid, 0.2 * np.cos(grid.x)), nz=nz)
            g = g_of(grid)
            return inner(op.apply(g), g)

        ref = value(128, 1024)
        e1, e2 = abs(value(32, 64) - ref), abs(value(64, 128) - ref)
        assert np.log2(e1 / e2) >= 1.9

    @given(st.integers(0, 1000), st.floats(-3, 3), st.floats(-3, 3))
    def test_linear(self, seed, alpha, beta):
        grid = PeriodicGrid(32)
        op = DnOperator(random_geometry(grid, seed, "strip" if seed % 2 else "halfspace"), nz=32)
        g1, g2 = random_data(grid, seed), random_data(grid, seed + 7)
        lhs = op.apply(g1 * alpha + g2 * beta)
        rhs = op.apply(g1) * alpha + op.apply(g2) * beta
        scale = abs(alpha) * np.linalg.norm(g1.values) + abs(beta) * np.linalg.norm(g2.values)
        assert np.linalg.norm(lhs.values - rhs.values) <= 1e-9 * max(scale, 1e-300)

    @pytest.mark.parametrize("seed", range(6))
    def test_zero_mean_output(self, grid64, seed):
        op = DnOperator(random_geometry(grid64, seed, "strip" if seed % 2 else "halfspace"))
        assert abs(mean(op.apply(random_data(grid64, seed)))) < 1e-10

    def test_repeatable(self, grid64):
        op = DnOperator(random_geometry(grid64, 1, "strip"))
        g = random_data(grid64, 0)
        assert np.array_equal(op.apply(g).values, op(g).values)

    def test_rejects_foreign_grid(self, grid64):
        op = DnOperator(flat_halfspace(grid64))
        with pytest.raises(ValueError):
            op.apply(PeriodicGrid(32).from_function(np.cos))


class TestPreconditionerRefresh:
    def test_small_moves_reuse_preconditioner(self, grid64):
        x = grid64.x
        op = DnOperator(halfspace_with_top(grid64, 0.3 * np.cos(x)))
        op.update_top(SpectralField(grid64, 0.31 * np.cos(x)))
        assert op.preconditioner_builds == 1
        op.update_top(SpectralField(grid64, 0.5 * np.cos(x)))
        assert op.preconditioner_builds == 2

    def test_result_does_not_depend_on_preconditioner(self, grid64):
        x = grid64.x
        top = SpectralField(grid64, 0.32 * np.cos(x))
        reused = DnOperator(halfspace_with_top(grid64, 0.3 * np.cos(x)))
        reused.update_top(top)
        fresh = DnOperator(halfspace_with_top(grid64, top.values))
        g = random_data(grid64, 2)
        a, b = reused.apply(g).values, fresh.apply(g).values
        assert np.max(np.abs(a - b)) < 1e-9 * np.max(np.abs(b))


class TestBoundedness:
    def test_flat_half_space_cos(self):
        grid = PeriodicGrid(16)
        ratio = boundedness_report(DnOperator(flat_halfspace(grid), nz=1024), grid.from_function(np.cos))
        assert ratio == pytest.approx(2**-0.25, rel=1e-6)

    def test_flat_half_space_ratio_at_most_one(self, grid64):
        op = DnOperator(flat_halfspace(grid64))
        for seed in range(5):
            assert boundedness_report(op, random_data(grid64, seed)) <= 1.0 + 1e-4

    def test_lipschitz_sweep_is_finite(self):
        grid = PeriodicGrid(32)
        ratios = []
        for seed in range(10):
            op = DnOperator(random_geometry(grid, seed, "halfspace"), nz=64)
            ratios += [boundedness_report(op, random_data(grid, 100 + seed + j)) for j in range(10)]
        assert np.all(np.isfinite(ratios)) and max(ratios) < 10

    def test_constant_input(self, grid64):
        with pytest.raises(ConstantInput):
            boundedness_report(DnOperator(flat_halfspace(grid64)), grid64.field(np.ones(64)))
        with pytest.raises(ZeroDivisionError):
            boundedness_report(DnOperator(flat_halfspace(grid64)), grid64.field(np.ones(64)))
