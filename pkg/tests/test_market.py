import math

import numpy as np
import pytest

from pathreserve.market import (DiscountCurve, MarketModel, RunningAverageDrift, RunningAverageVolatility,
                                ScenarioBatch, SimulationError, SingularityError, discount_ratio,
                                market_price_of_risk, moment_diagnostic, resimulate_from, simulate,
                                simulate_brownian)
from pathreserve.paths import PathDomainError, StoppedPath, TimeGrid


def test_discount_curve_piecewise():
    c = DiscountCurve([0.0, 1.0], [0.02, 0.04])
    assert c.discount(2.0) == pytest.approx(math.exp(-0.06))
    assert c.rate(1.0) == 0.04
    assert discount_ratio(c, 0.5, 2.0) == pytest.approx(math.exp(-(0.01 + 0.04)))
    with pytest.raises(PathDomainError):
        discount_ratio(c, 2.0, 1.0)


def test_frozen_discount_value():
    assert DiscountCurve.constant(0.03).discount(2.0) == pytest.approx(0.9417645335842487, rel=1e-15)


def test_discounted_asset_is_q_martingale(bs):
    grid = TimeGrid.uniform(1.0, 128)
    batch = simulate(bs, grid, 20000, "Q", seed=11, antithetic=True)
    x = batch.terminal * math.exp(-0.03)
    pairs = 0.5 * (x[0::2] + x[1::2])
    assert abs(pairs.mean() - 1.0) < 4 * pairs.std(ddof=1) / math.sqrt(pairs.size)


def test_continuations_agree_with_stub(bs):
    grid = TimeGrid.uniform(1.0, 32)
    xi = StoppedPath.constant(grid, 1.2, 0.5)
    batch = resimulate_from(bs, xi, 10, seed=1)
    np.testing.assert_array_equal(batch.values[:, : xi.stop_index + 1], np.broadcast_to(xi.values, (10, xi.stop_index + 1)))


def test_simulation_is_independent_of_batch_size(bs):
    grid = TimeGrid.uniform(1.0, 16)
    a = simulate(bs, grid, 3000, seed=5)
    b = simulate(bs, grid, 1200, seed=5)
    np.testing.assert_array_equal(a.values[:1200], b.values)


def test_scenario_cache_round_trip(bs, tmp_path):
    grid = TimeGrid.uniform(1.0, 16)
    batch = simulate(bs, grid, 7, seed=2)
    batch.save(tmp_path / "s.bin")
    back = ScenarioBatch.load(tmp_path / "s.bin")
    np.testing.assert_array_equal(back.values, batch.values)
    assert back.grid == grid and back.measure == batch.measure


def test_zero_volatility_is_deterministic():
    grid = TimeGrid.uniform(1.0, 50)
    m = MarketModel.black_scholes(0.03, 0.0, 1.0, 0.03)
    batch = simulate(m, grid, 4, "P", seed=3)
    np.testing.assert_allclose(batch.terminal, math.exp(0.03), rtol=1e-14)


def test_path_dependent_coefficients_simulate(grid):
    m = MarketModel(RunningAverageDrift(0.5), RunningAverageVolatility(0.2, 0.1), 1.0, DiscountCurve.constant(0.02))
    batch = simulate(m, grid, 500, "P", seed=4)
    assert np.all(np.isfinite(batch.values)) and np.all(batch.values > 0)
    rep = moment_diagnostic(batch, m.initial_path(grid))
    assert rep.monotone and not rep.super_exponential and np.isfinite(rep.c_hat)


def test_market_price_of_risk(bs, grid):
    sp = StoppedPath.constant(grid, 1.0, 0.5)
    assert market_price_of_risk(bs, sp) == pytest.approx((0.05 - 0.03) / 0.2)
    with pytest.raises(SingularityError):
        market_price_of_risk(MarketModel.black_scholes(0.05, 0.0), sp)


def test_explosion_is_reported(grid):
    m = MarketModel.black_scholes(1e6, 0.2, 1.0)
    with pytest.raises(SimulationError) as err:
        simulate(m, grid, 4, "P")
    assert err.value.node is not None


def test_brownian_increments_have_unit_rate():
    g = TimeGrid.uniform(1.0, 64)
    b = simulate_brownian(g, 4000, seed=9)
    assert np.var(b.values[:, -1]) == pytest.approx(1.0, rel=0.1)
