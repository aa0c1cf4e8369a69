import math

import numpy as np
import pytest
from scipy.stats import norm

from pathreserve.asian import AsianOracleParams, asian_U
from pathreserve.paths import StoppedPath, TimeGrid
from pathreserve.payoffs import (Constant, Endpoint, Guaranteed, NoClosedForm, OnDates, RunningAverage,
                                 RunningMax, Scaled, Sum, Table, Zero, build_payoff, is_zero)

from conftest import lognormal_path

GRID = TimeGrid.uniform(1.0, 128)


def test_running_evaluation_matches_truncation():
    sp = lognormal_path(GRID, 0)
    batch = sp.as_batch()
    for p in (Endpoint(2.0), RunningAverage(), RunningMax(), Guaranteed(1.0), Table([0, 1], [1, 3])):
        run = p.running(batch, 10)
        direct = np.array([p(sp.stop_at(GRID.nodes[j])) for j in range(10, 129)])
        np.testing.assert_allclose(run[0], direct, rtol=1e-13)


def test_registry_round_trip():
    for p in (Zero(), Constant(2.0), Endpoint(0.5), RunningAverage(), RunningMax(), Guaranteed(1.0, 2.0),
              Table([0, 1], [0, 1]), OnDates(Endpoint(), [1.0]), Scaled(Constant(1.0), -3.0),
              Sum([Constant(1.0), Endpoint()])):
        again = build_payoff(p.to_dict())
        assert again.to_dict() == p.to_dict()


def test_unknown_payoff():
    with pytest.raises(KeyError):
        build_payoff({"name": "digital"})


def test_zero_detection():
    assert is_zero(Zero()) and is_zero(Sum([Zero()])) and not is_zero(Constant(0.5))


def test_running_average_closed_form_is_the_oracle(bs):
    sp = lognormal_path(GRID, 1, t=0.5)
    u = RunningAverage(2.0).analytic_U(sp, 1.0, bs)
    assert u[0] == pytest.approx(2 * asian_U(AsianOracleParams(0.03, 1.0), sp), rel=1e-14)


def test_guaranteed_closed_form_is_black_scholes(bs):
    sp = StoppedPath.constant(GRID, 1.1, 0.25)
    k, tau, r, sig, x = 1.0, 0.75, 0.03, 0.2, 1.1
    d1 = (math.log(x / k) + (r + 0.5 * sig**2) * tau) / (sig * math.sqrt(tau))
    put = k * math.exp(-r * tau) * norm.cdf(-(d1 - sig * math.sqrt(tau))) - x * norm.cdf(-d1)
    u, d, g, g2 = Guaranteed(k).analytic_U(sp, 1.0, bs)
    assert u == pytest.approx(x + put, rel=1e-12)
    # the closed form satisfies the pricing equation D + r x grad + sig^2 x^2 grad2 / 2 = r U
    assert d + r * x * g + 0.5 * sig**2 * x**2 * g2 == pytest.approx(r * u, rel=1e-10)


def test_running_max_has_no_closed_form(bs):
    with pytest.raises(NoClosedForm):
        RunningMax().analytic_U(StoppedPath.constant(GRID, 1.0, 0.5), 1.0, bs)


def test_on_dates_masks_other_times(bs):
    p = OnDates(Constant(5.0), [1.0])
    assert p(StoppedPath.constant(GRID, 1.0, 0.5)) == 0.0
    assert p(StoppedPath.constant(GRID, 1.0, 1.0)) == 5.0
    assert p.analytic_U(StoppedPath.constant(GRID, 1.0, 0.5), 1.0, bs)[0] == pytest.approx(5 * math.exp(-0.015))


def test_deterministic_flags():
    assert Constant(1).deterministic and Table([0, 1], [1, 1]).deterministic
    assert Scaled(Constant(1), 2).deterministic and not Sum([Constant(1), Endpoint()]).deterministic
