
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathreserve.paths import (CallableFunctional, OffGridWarning, PathDomainError, StoppedPath, TimeGrid,
                               d_infinity)


def test_uniform_grid_inserts_contract_dates():
    g = TimeGrid.uniform(1.0, 4, extra=[0.3])
    assert g.find(0.3) is not None
    assert g.n_steps == 5
    assert g.horizon == 1.0


def test_grid_rejects_bad_nodes():
    with pytest.raises(ValueError):
        TimeGrid([0.0, 0.5, 0.5, 1.0])
    with pytest.raises(ValueError):
        TimeGrid([0.1, 1.0])


def test_off_grid_time_snaps_down_with_warning(grid):
    with pytest.warns(OffGridWarning):
        k = grid.index_of(0.51)
    assert grid.nodes[k] <= 0.51 < grid.nodes[k + 1]


def test_ramp_integral_and_quadratic_variation():
    g = TimeGrid.uniform(1.0, 512)
    ramp = StoppedPath.from_function(g, lambda u: u)
    assert ramp.path_integral() == pytest.approx(0.5, abs=1e-12)
    assert ramp.quadratic_variation() * 512 == pytest.approx(1.0, rel=1e-12)


def test_stopped_path_is_flat_after_stop(ramp):
    sp = ramp.stop_at(0.5)
    assert sp.value_at(0.9) == sp.terminal == 1.5
    with pytest.raises(PathDomainError):
        sp.stop_at(0.7)


def test_vertical_bump_moves_only_the_endpoint(ramp):
    sp = ramp.stop_at(0.5)
    bumped = sp.vertical_bump(0.1)
    assert bumped.terminal == pytest.approx(1.6)
    np.testing.assert_array_equal(bumped.values[:-1], sp.values[:-1])
    # the bump is a jump at t: the integral up to t is unchanged
    assert bumped.path_integral() == pytest.approx(sp.path_integral(), abs=1e-15)
    assert bumped.left_limits()[-1] == sp.terminal


def test_horizontal_extension_keeps_value(ramp):
    sp = ramp.stop_at(0.5)
    ext = sp.horizontal_extend(0.25)
    assert ext.t == pytest.approx(0.75)
    assert np.all(ext.values[sp.stop_index:] == sp.terminal)


def test_d_infinity_examples(grid):
    a = StoppedPath.constant(grid, 1.0, 0.5)
    b = StoppedPath.constant(grid, 1.5, 0.5)
    assert d_infinity(a, b) == pytest.approx(0.5)
    assert d_infinity(a, a) == 0.0
    c = StoppedPath.constant(grid, 1.0, 0.25)
    assert d_infinity(a, c) == pytest.approx(0.25)


def test_d_infinity_rejects_different_horizons(grid):
    other = TimeGrid.uniform(2.0, 8)
    with pytest.raises(PathDomainError):
        d_infinity(StoppedPath.constant(grid, 1.0), StoppedPath.constant(other, 1.0))


def test_csv_and_binary_round_trip(ramp):
    sp = ramp.stop_at(0.5).vertical_bump(0.2)
    assert StoppedPath.from_bytes(sp.to_bytes(), sp.grid) == sp
    plain = ramp.stop_at(0.25)
    assert StoppedPath.from_csv(plain.to_csv(), plain.grid) == plain


def test_functional_only_sees_history(ramp):
    F = CallableFunctional(lambda sp: sp.running_max())
    assert F(ramp.stop_at(0.5)) == pytest.approx(1.5)


def test_non_finite_values_rejected(grid):
    with pytest.raises(ValueError):
        StoppedPath(grid, 1, [1.0, np.nan])


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=17, max_size=17), st.lists(st.floats(-10, 10), min_size=17, max_size=17),
       st.lists(st.floats(-10, 10), min_size=17, max_size=17), st.integers(0, 16), st.integers(0, 16), st.integers(0, 16))
def test_d_infinity_is_a_metric(xs, ys, zs, i, j, k):
    g = TimeGrid.uniform(1.0, 16)
    a, b, c = (StoppedPath(g, m, v[: m + 1]) for v, m in ((xs, i), (ys, j), (zs, k)))
    assert d_infinity(a, b) == pytest.approx(d_infinity(b, a))
    assert d_infinity(a, c) <= d_infinity(a, b) + d_infinity(b, c) + 1e-9
    assert d_infinity(a, a) == 0.0


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.1, 10), min_size=9, max_size=9), st.floats(-1, 1))
def test_bump_then_opposite_bump_restores_value(xs, h):
    g = TimeGrid.uniform(1.0, 8)
    sp = StoppedPath(g, 8, xs)
    back = sp.vertical_bump(h).vertical_bump(-h)
    assert back.terminal == pytest.approx(sp.terminal, abs=1e-12)
    assert back.path_integral() == pytest.approx(sp.path_integral(), abs=1e-12)
