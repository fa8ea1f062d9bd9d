import numpy as np
import pytest
from hypothesis import settings

from dnlab.domain import BoundaryFn, HalfSpaceGeometry, StripGeometry, random_lipschitz
from dnlab.spectral import PeriodicGrid, SpectralField

settings.register_profile("dnlab", max_examples=25, deadline=None, derandomize=True)
settings.load_profile("dnlab")


@pytest.fixture
def grid64():
    return PeriodicGrid(64)


def flat_strip(grid, depth):
    zero = BoundaryFn.from_values(grid, np.zeros(grid.n))
    return StripGeometry(zero, BoundaryFn.from_values(grid, np.full(grid.n, -float(depth))))


def flat_halfspace(grid, depth=8.0):
    return HalfSpaceGeometry(BoundaryFn.from_values(grid, np.zeros(grid.n)), depth)


def strip_with_top(grid, top_values, depth=1.0):
    return StripGeometry(
        BoundaryFn.from_values(grid, top_values), BoundaryFn.from_values(grid, np.full(grid.n, -float(depth)))
    )


def halfspace_with_top(grid, top_values, depth=8.0):
    return HalfSpaceGeometry(BoundaryFn.from_values(grid, top_values), depth)


def random_geometry(grid, seed, kind):
    rng = np.random.default_rng(seed)
    top = random_lipschitz(grid, seed, slope=rng.uniform(0.1, 1.0)).values
    if kind == "strip":
        bottom = random_lipschitz(grid, seed + 1, slope=rng.uniform(0.0, 1.0)).values
        bottom = bottom + (np.min(top - bottom) - rng.uniform(0.5, 2.0))
        return StripGeometry(BoundaryFn.from_values(grid, top), BoundaryFn.from_values(grid, bottom))
    return halfspace_with_top(grid, top)


def random_data(grid, seed):
    rng = np.random.default_rng(seed)
    k = np.arange(1, 9)
    vals = sum(rng.standard_normal() * np.cos(kk * grid.x + rng.uniform(0, 6.3)) / kk for kk in k)
    return SpectralField(grid, vals + rng.standard_normal())
