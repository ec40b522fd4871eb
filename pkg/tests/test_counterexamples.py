import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from weakbmo.counterexamples import (
    HaarSeriesSpec,
    adversarial_ratio_search,
    dyadic_dip_gauge,
    grid_oscillations,
    haar_series_audit,
    haar_series_build,
    haar_series_leaves,
    interval_weights,
    random_step_family,
    section6_gauge,
    verify_sqrt10M,
    write_growth_csv,
)
from weakbmo.dyadic import DyadicSimpleFunction, haar
from weakbmo.errors import NotEnoughLowPointsError, PreconditionError
from weakbmo.functionals import bmo_grid, k_h_dyadic, k_h_grid
from weakbmo.gauges import gauge_log

H6 = section6_gauge()
DIPS = dyadic_dip_gauge()


# gauges ----------------------------------------------------------------------------


def test_section6_values():
    assert H6(0.0) == 0.0
    assert H6(1.0) == 1.0
    assert H6(1.5) == 2.25
    for j in (2, 3, 10, 1000):
        assert H6(float(j)) == 0.0
        assert H6(j - 0.25) == pytest.approx((j - 0.25) ** 2)
        assert H6(j + 0.25) == pytest.approx((j + 0.25) ** 2)
        assert H6(j + 0.125) == pytest.approx(0.5 * (j + 0.25) ** 2)
    # agreement with t^2 away from the dips
    x = np.array([0.3, 1.74, 2.3, 2.7, 7.5])
    assert np.allclose(H6(x), x * x)


def test_section6_continuous():
    eps = 1e-9
    for j in range(2, 20):
        for edge in (j - 0.25, j, j + 0.25):
            assert abs(H6(edge - eps) - H6(edge + eps)) < 1e-6 * j * j


def test_dyadic_dips_zero_at_powers_of_two():
    for k in range(-3, 30):
        assert DIPS(2.0**k) == 0.0
    assert DIPS(0.0) == 0.0
    assert DIPS(3.0) > 0
    x = 2.0 ** np.linspace(0, 10, 10_001)
    assert np.all(DIPS(x) <= x * x + 1e-9)


# grid machinery -------------------------------------------------------------------


def test_interval_weights_shape_and_order():
    W, lengths, bounds = interval_weights(2, 3)
    assert W.shape == (36, 4)
    assert lengths[0] == 1.0 and tuple(bounds[0]) == (0.0, 1.0)
    assert np.all(np.diff(lengths) <= 0)
    assert np.allclose(W.sum(axis=1), lengths)


@given(st.lists(st.floats(-8, 8, allow_nan=False), min_size=8, max_size=8), st.integers(3, 5))
@settings(max_examples=30)
def test_grid_oscillations_cross_check(vals, g):
    phi = DyadicSimpleFunction(1, 3, vals)
    var, k_loc, _ = grid_oscillations(phi.leaves, H6, g)
    assert math.sqrt(var.max()) == pytest.approx(bmo_grid(phi, g, refine=False).value, rel=1e-9, abs=1e-9)
    assert k_loc.max() == pytest.approx(k_h_grid(phi, H6, g).value, rel=1e-9, abs=1e-9)


# the sqrt(10 M) bound ----------------------------------------------------------------


def test_sqrt10M_constant():
    r = verify_sqrt10M(DyadicSimpleFunction.constant(3.0, depth=2), 1.0)
    assert r.norm == 0.0 and r.k_grid == 0.0
    assert r.margin == pytest.approx(math.sqrt(10))


def test_sqrt10M_half_haar():
    phi = 0.5 * haar(1, depth=3)
    r = verify_sqrt10M(phi, 1.0)
    assert r.k_grid <= 0.25 + 1e-15
    assert r.norm == pytest.approx(0.5)
    assert r.margin > 0
    assert r.in_A == 0.0  # |psi| <= 1 stays off the dips
    assert all(m >= -1e-12 for m in r.margins.values())


def test_sqrt10M_with_dips_engaged():
    # values +-2 sit on the dip at 2: K_h = 0 on the whole interval, small elsewhere
    phi = DyadicSimpleFunction(1, 2, [-2.0, -2.0, 2.0, 2.0])
    _, k_loc, _ = grid_oscillations(phi.leaves, H6, 4)
    assert H6(2.0) == 0.0
    r = verify_sqrt10M(phi, float(k_loc.max()) * 1.01, g=4)
    assert r.in_A > 0
    assert r.norm <= math.sqrt(10 * 1.2)
    assert all(m >= -1e-12 for m in r.margins.values())


def test_sqrt10M_preconditions():
    with pytest.raises(PreconditionError):
        verify_sqrt10M(DyadicSimpleFunction(1, 1, [-1.0, 1.0]), 0.5)
    with pytest.raises(PreconditionError):
        verify_sqrt10M(DyadicSimpleFunction(2, 1, [0.0, 0.0, 0.0, 0.0]), 1.0)
    with pytest.raises(PreconditionError):
        verify_sqrt10M(DyadicSimpleFunction.constant(0.0, depth=3), 1.0, g=2)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=40)
def test_sqrt10M_random_family(seed):
    rng = np.random.default_rng(seed)
    depth = int(rng.integers(2, 5))
    phi = DyadicSimpleFunction(1, depth, random_step_family(rng, depth))
    var, k_loc, _ = grid_oscillations(phi.leaves, H6, depth + 2)
    M = float(k_loc.max()) * 1.01 + 1e-9
    r = verify_sqrt10M(phi, M)
    assert r.margin >= -1e-9
    assert r.outside_margin >= -1e-9


def test_random_step_family_needs_depth():
    with pytest.raises(PreconditionError):
        random_step_family(np.random.default_rng(0), 1)


def test_adversarial_search_small():
    res = adversarial_ratio_search(600, seed=3, depths=(2, 3))
    assert res.steps == 600
    assert set(res.ratios) == {2, 3}
    assert 0 < res.best_ratio <= 10
    assert res.best_leaves.size == 1 << res.depth


# lacunary Haar series ----------------------------------------------------------------


def test_haar_series_leaves_examples():
    v = haar_series_leaves([1.0], [1], 2)
    assert v.tolist() == [0.0, 0.0, -1.0, 1.0]
    v = haar_series_leaves([2.0, 4.0], [2, 4], 5)
    assert v.mean() == 0.0
    assert np.mean(v * v) == pytest.approx(2.0)
    with pytest.raises(PreconditionError):
        haar_series_leaves([1.0], [3], 3)


def test_haar_build_dyadic_dips():
    spec, phi = haar_series_build(DIPS, 1.0, 4, 1e6)
    assert spec.thresholds == (2.0, 4.0, 8.0, 16.0)
    assert spec.orders == (2, 4, 6, 8)
    assert phi.depth == 9
    audit = haar_series_audit(spec, phi, DIPS)
    assert audit.value_set_ok and audit.mean_zero_ok
    assert audit.k_d == 0.0 and audit.k_margin == 1.0
    assert [r.variance for r in audit.rows] == [1.0, 2.0, 3.0, 4.0]
    assert all(r.l1 <= r.l1_bound for r in audit.rows)
    assert k_h_dyadic(phi, DIPS).value == 0.0


def test_haar_build_section6():
    spec, phi = haar_series_build(H6, 0.5, 3, 1e6)
    # first points in [2^k, 2^(k+1)) where h < 1/2 are the integers 2^k
    assert spec.thresholds == (2.0, 4.0, 8.0)
    audit = haar_series_audit(spec, phi, H6)
    assert audit.k_d <= audit.bound


def test_haar_build_not_enough_points():
    with pytest.raises(NotEnoughLowPointsError):
        haar_series_build(gauge_log(), 1.0, 3, 100.0)


def test_growth_csv(tmp_path):
    spec = HaarSeriesSpec((2.0, 4.0), (2, 4), 1.0)
    phi = DyadicSimpleFunction(1, 5, haar_series_leaves(spec.thresholds, spec.orders, 5))
    audit = haar_series_audit(spec, phi, DIPS)
    path = tmp_path / "growth.csv"
    write_growth_csv(audit.rows, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "terms,variance,k_d,l1,l1_bound"
    assert lines[2].startswith("2,2.0,0.0,")
