import math

import numpy as np
import pytest

from gmwb.contract import MarketParams
from gmwb.paths import BLOCK, TimeGrid, derive_seed, generate, z_path


def test_grid_basics():
    g = TimeGrid(252, 10.0)
    assert g.num_steps == 2520
    assert g.times[-1] == 10.0
    assert g.index_of(2.5) == 630
    assert g.tail(2.5).num_steps == 1890
    with pytest.raises(ValueError):
        TimeGrid(12, 10.05)
    with pytest.raises(ValueError):
        g.index_of(1.0 / 500)


def test_normals_reproducible_and_prefix_consistent():
    g = TimeGrid(12, 2.0)
    a = generate(MarketParams(0.05, 0.2), 0.0, g, 10_000, 42).normals()
    b = generate(MarketParams(0.05, 0.2), 0.0, g, 10_000, 42).normals()
    assert np.array_equal(a, b)
    # a smaller run is a prefix of the larger one, across block boundaries
    c = generate(MarketParams(0.05, 0.2), 0.0, g, BLOCK + 7, 42).normals()
    assert np.array_equal(c, a[: BLOCK + 7])
    # a slice matches the full draw
    assert np.array_equal(generate(MarketParams(0.05, 0.2), 0.0, g, 10_000, 42).normals(4000, 4200), a[4000:4200])


def test_seeds_give_independent_draws():
    g = TimeGrid(12, 1.0)
    a = generate(MarketParams(0.05, 0.2), 0.0, g, 2000, 1).normals()
    b = generate(MarketParams(0.05, 0.2), 0.0, g, 2000, 2).normals()
    assert abs(np.corrcoef(a.ravel(), b.ravel())[0, 1]) < 0.02
    assert derive_seed(1, 0) != derive_seed(1, 1) != derive_seed(2, 0)


def test_normals_moments():
    xi = generate(MarketParams(0.05, 0.2), 0.0, TimeGrid(52, 1.0), 20_000, 5).normals()
    assert abs(xi.mean()) < 4 / math.sqrt(xi.size)
    assert xi.std() == pytest.approx(1.0, abs=0.005)


def test_antithetic_pairs():
    xi = generate(MarketParams(0.05, 0.2), 0.0, TimeGrid(12, 1.0), 100, 9, antithetic=True).normals()
    assert np.array_equal(xi[1::2], -xi[0::2])
    with pytest.raises(ValueError):
        generate(MarketParams(0.05, 0.2), 0.0, TimeGrid(12, 1.0), 101, 9, antithetic=True)


def test_growth_factor_is_risk_neutral():
    # E[R] = exp((r - alpha) dt) per step
    g = TimeGrid(4, 1.0)
    ps = generate(MarketParams(0.05, 0.3), 0.02, g, 200_000, 3)
    growth = ps.growth_factors()
    expect = math.exp((0.05 - 0.02) * g.dt)
    se = growth.std() / math.sqrt(growth.size)
    assert abs(growth.mean() - expect) < 4 * se


def test_deterministic_market_is_exact():
    g = TimeGrid(12, 10.0)
    z = z_path(generate(MarketParams(0.05, 0.0), 0.01, g, 3, 0), 2)
    assert np.allclose(z, np.exp(0.04 * g.times), rtol=1e-12)


def test_map_chunks_thread_invariant():
    g = TimeGrid(12, 2.0)
    ps = generate(MarketParams(0.05, 0.2), 0.0, g, 3 * BLOCK + 11, 8)
    one = ps.map_chunks(lambda a, c, xi: xi.sum(axis=1), threads=1)
    four = ps.map_chunks(lambda a, c, xi: xi.sum(axis=1), threads=4)
    assert np.array_equal(np.concatenate(one), np.concatenate(four))


def test_export_round_trip(tmp_path):
    g = TimeGrid(12, 1.0)
    ps = generate(MarketParams(0.05, 0.2), 0.0, g, 50, 4)
    out = tmp_path / "paths.bin"
    ps.export(out)
    raw = np.fromfile(out, dtype="<f8").reshape(50, 12)
    assert np.array_equal(raw, ps.growth_factors())
