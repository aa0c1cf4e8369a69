import pytest

from pathreserve.asian import AsianOracle, AsianOracleParams, asian_derivatives
from pathreserve.calculus import (DerivativeEstimate, derivative_triple, horizontal_derivative, ito_residual,
                                  pde_residual, second_vertical_derivative, vertical_derivative)
from pathreserve.market import simulate_brownian
from pathreserve.paths import CallableFunctional, PathDomainError, StoppedPath, TimeGrid

from conftest import lognormal_path

GRID = TimeGrid.uniform(1.0, 512)
square = CallableFunctional(lambda sp: sp.terminal ** 2, "square")
integral = CallableFunctional(lambda sp: sp.path_integral(), "integral")


def test_vertical_derivatives_of_square():
    sp = StoppedPath.constant(GRID, 1.5, 0.5)
    assert vertical_derivative(square, sp).value == pytest.approx(3.0, abs=1e-8)
    assert second_vertical_derivative(square, sp).value == pytest.approx(2.0, abs=1e-5)


def test_integral_has_horizontal_derivative_equal_to_endpoint():
    sp = lognormal_path(GRID, 4, t=0.5)
    assert horizontal_derivative(integral, sp).value == pytest.approx(sp.terminal, rel=1e-12)
    # the bump is a jump at t and does not enter the integral
    assert vertical_derivative(integral, sp).value == pytest.approx(0.0, abs=1e-9)


def test_horizontal_needs_room():
    with pytest.raises(PathDomainError):
        horizontal_derivative(square, StoppedPath.constant(GRID, 1.0, 1.0))


def test_numeric_matches_asian_derivatives():
    p = AsianOracleParams(0.03, 1.0)
    F = AsianOracle(p)
    sp = lognormal_path(GRID, 2, t=0.5)
    d, g, g2 = derivative_triple(F, sp, analytic=False)
    ad, ag, ag2 = asian_derivatives(p, sp)
    assert abs(d - ad) < 5e-3 and abs(g - ag) < 1e-3 and abs(g2 - ag2) < 1e-3
    assert derivative_triple(F, sp) == (ad, ag, ag2)


def test_pde_residual_of_asian_oracle(bs):
    p = AsianOracleParams(0.03, 1.0)
    sp = lognormal_path(GRID, 5, t=0.375)
    b = CallableFunctional(lambda s: 0.03 * s.terminal)
    sig = CallableFunctional(lambda s: 0.2 * s.terminal)
    assert abs(pde_residual(AsianOracle(p), sp, b, sig, 0.03)) < 1e-14


def test_identity_functional_telescopes():
    paths = simulate_brownian(GRID, 3, seed=1)
    ident = CallableFunctional(lambda sp: sp.terminal)
    ident.analytic_derivatives = True
    ident.derivatives = lambda sp: (0.0, 1.0, 0.0)
    for k in range(3):
        assert ito_residual(ident, paths.path(k), analytic=True) < 1e-12


def test_square_residual_with_realised_variation_is_round_off():
    paths = simulate_brownian(TimeGrid.uniform(1.0, 128), 2, seed=3)
    assert ito_residual(square, paths.path(0)) < 1e-6


def test_estimate_requires_positive_bump():
    with pytest.raises(ValueError):
        DerivativeEstimate(1.0, 0.0, "central")
