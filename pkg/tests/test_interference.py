import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from mtcsched.core import db_to_linear
from mtcsched.interference import (
    CHUNK,
    UnderlayScenario,
    admissible_groups,
    budget_intra_power,
    interference_threshold,
    intra_power_from_radius,
    max_group_count,
    mean_inverse_distance_moment,
    radius_count_frontier,
    rayleigh_outage,
    simulate_outage,
)

BASE = UnderlayScenario()


def quad_moment(inner, outer, delta):
    val, _ = integrate.quad(lambda d: d ** -delta * 2 * d / outer ** 2, inner, outer, epsabs=0, epsrel=1e-13,
                            limit=200)
    return val


# -- threshold -------------------------------------------------------------------

def test_threshold_direct_evaluation():
    c = BASE.pathloss_const
    expected = 1.0 * c / (db_to_linear(2.0) * 250.0 ** 3.76) - db_to_linear(-121.0)
    assert interference_threshold(BASE) == pytest.approx(expected, rel=1e-14)
    assert interference_threshold(BASE) > 0


def test_threshold_tends_to_minus_noise():
    s = replace(BASE, sinr_threshold=1e30)
    assert interference_threshold(s) == pytest.approx(-BASE.noise, rel=1e-12)
    assert max_group_count(s) == 0


@settings(max_examples=50, deadline=None)
@given(p=st.floats(1e-3, 1e3), d=st.floats(60.0, 440.0))
def test_threshold_linear_in_primary_power(p, d):
    s = replace(BASE, pu_power=p, pu_distance=d)
    step = p * s.pathloss_const / (s.sinr_threshold * d ** s.exponent)
    assert interference_threshold(replace(s, pu_power=2 * p)) - interference_threshold(s) == pytest.approx(
        step, rel=1e-9)


# -- moment ----------------------------------------------------------------------

@pytest.mark.parametrize("delta", [2.0, 2.5, 3.0, 3.76, 4.0])
def test_moment_matches_quadrature(delta):
    got = mean_inverse_distance_moment(50.0, 450.0, delta)
    assert got == pytest.approx(quad_moment(50.0, 450.0, delta), rel=1e-10)


def test_moment_log_branch_anchor():
    outer = math.e * 50.0
    assert mean_inverse_distance_moment(50.0, outer, 2.0) == pytest.approx(2 / outer ** 2, rel=1e-15)


def test_moment_continuous_across_two():
    at = mean_inverse_distance_moment(50.0, 450.0, 2.0)
    for delta in (2.0 - 1e-6, 2.0 + 1e-6):
        assert mean_inverse_distance_moment(50.0, 450.0, delta) == pytest.approx(at, rel=1e-5)


@settings(max_examples=80, deadline=None)
@given(inner=st.floats(1.0, 100.0), ratio=st.floats(1.1, 50.0), delta=st.floats(1.5, 5.0))
def test_moment_quadrature_property(inner, ratio, delta):
    outer = inner * ratio
    assert mean_inverse_distance_moment(inner, outer, delta) == pytest.approx(quad_moment(inner, outer, delta),
                                                                              rel=1e-9)


def test_moment_rejects_bad_ring():
    with pytest.raises(ValueError):
        mean_inverse_distance_moment(450.0, 50.0, 3.0)


def test_moment_density_normalization():
    # the moment integrates against 2d/d_x^2, which omits the inner hole
    rng = np.random.default_rng(0)
    d = np.sqrt(rng.uniform(50.0 ** 2, 450.0 ** 2, 400_000))
    ring_mean = np.mean(d ** -3.76)
    moment = mean_inverse_distance_moment(50.0, 450.0, 3.76)
    assert ring_mean == pytest.approx(moment * 450.0 ** 2 / (450.0 ** 2 - 50.0 ** 2), rel=0.02)


# -- admission ---------------------------------------------------------------------

def test_count_is_zero_at_boundary():
    moment = mean_inverse_distance_moment(50.0, 450.0, BASE.exponent)
    i_th = interference_threshold(BASE)
    power = i_th / (BASE.pathloss_const * moment) * (1 + 1e-9)
    assert max_group_count(replace(BASE, intra_power=power)) == 0
    assert max_group_count(replace(BASE, intra_power=power / (1 + 2e-9))) == 1


def test_halving_power_doubles_pre_floor_budget():
    moment = mean_inverse_distance_moment(50.0, 450.0, BASE.exponent)
    i_th = interference_threshold(BASE)
    pre = lambda p: i_th / (BASE.pathloss_const * p * moment)  # noqa: E731
    assert pre(0.5e-3) == pytest.approx(2 * pre(1e-3), rel=1e-15)
    assert max_group_count(replace(BASE, intra_power=0.5e-6)) >= 2 * max_group_count(replace(BASE, intra_power=1e-6))


def test_table_geometry_counts():
    assert max_group_count(replace(BASE, pu_distance=150.0)) == 60
    assert max_group_count(BASE) == 8


@settings(max_examples=60, deadline=None)
@given(p=st.floats(1e-9, 1e-3), g=st.floats(-3.0, 10.0), d=st.floats(60.0, 440.0), scale=st.floats(1.0, 3.0))
def test_count_non_increasing_in_power_threshold_and_distance(p, g, d, scale):
    s = replace(BASE, intra_power=p, sinr_threshold=db_to_linear(g), pu_distance=d)
    m = max_group_count(s)
    assert max_group_count(replace(s, intra_power=p * scale)) <= m
    assert max_group_count(replace(s, sinr_threshold=s.sinr_threshold * scale)) <= m
    assert max_group_count(replace(s, pu_distance=min(d * scale, 449.0))) <= m


def test_count_requires_power():
    with pytest.raises(ValueError):
        max_group_count(replace(BASE, intra_power=0.0))


# -- radius/count frontier -------------------------------------------------------

def test_doubling_radius_quarters_groups_with_square_law():
    s = replace(BASE, intra_exponent=2.0)
    assert admissible_groups(s, 60.0) * 4 == pytest.approx(admissible_groups(s, 30.0), rel=1e-15)


def test_frontier_unbounded_as_radius_vanishes():
    assert admissible_groups(BASE, 1e-6) > 1e12


@pytest.mark.parametrize("d", [150.0, 250.0])
def test_frontier_agrees_with_group_count(d):
    s = replace(BASE, pu_distance=d)
    moment = mean_inverse_distance_moment(s.inner, s.outer, s.exponent)
    pre = interference_threshold(s) / (s.pathloss_const * intra_power_from_radius(s) * moment)
    assert admissible_groups(s, s.group_radius) == pytest.approx(pre, rel=1e-12)
    assert math.floor(admissible_groups(s, s.group_radius)) == max_group_count(s)


def test_frontier_needs_exponent_above_two():
    with pytest.raises(ValueError):
        radius_count_frontier(replace(BASE, exponent=2.0))


def test_budget_power_spends_the_threshold():
    m = mean_inverse_distance_moment(50.0, 450.0, BASE.exponent)
    p = budget_intra_power(BASE, 5)
    assert 5 * p * BASE.pathloss_const * m == pytest.approx(interference_threshold(BASE), rel=1e-14)
    assert budget_intra_power(BASE, 0) == 0.0


# -- Monte Carlo outage ------------------------------------------------------------

@pytest.mark.parametrize("d", [150.0, 250.0])
def test_interference_free_outage_matches_closed_form(d):
    s = replace(BASE, pu_distance=d)
    est = simulate_outage(s, 100_000, seed=3, groups=0)
    assert abs(est.outage - rayleigh_outage(s)) <= 3 * est.stderr
    assert est.mean_interference == 0.0


def test_disjoint_seeds_agree_within_three_standard_errors():
    s = replace(BASE, pu_distance=250.0)
    a = simulate_outage(s, 50_000, seed=11, groups=4)
    b = simulate_outage(s, 50_000, seed=12, groups=4)
    assert abs(a.outage - b.outage) <= 3 * math.hypot(a.stderr, b.stderr)


def test_outage_grows_with_group_count():
    s = replace(BASE, pu_distance=150.0)
    p = intra_power_from_radius(s)
    est = [simulate_outage(s, 100_000, seed=5, groups=m, intra_power=p).outage for m in range(0, 13, 3)]
    assert all(a <= b for a, b in zip(est, est[1:]))
    assert est[-1] > est[0]


@pytest.mark.parametrize("d", [150.0, 250.0])
def test_mean_interference_within_budget_at_max_count(d):
    s = replace(BASE, pu_distance=d)
    m = max_group_count(s)
    est = simulate_outage(s, 100_000, seed=9, groups=m, intra_power=intra_power_from_radius(s))
    assert est.mean_interference <= interference_threshold(s) * 1.01


def test_outage_is_reproducible_and_chunked():
    s = replace(BASE, pu_distance=150.0)
    a = simulate_outage(s, CHUNK + 17, seed=1, groups=3)
    b = simulate_outage(s, CHUNK + 17, seed=1, groups=3)
    assert a == b
    # the first chunk is shared with a shorter run
    head = simulate_outage(s, CHUNK, seed=1, groups=3)
    assert a.outage * a.trials >= head.outage * head.trials


def test_outage_rejects_zero_trials():
    with pytest.raises(ValueError):
        simulate_outage(BASE, 0, seed=1)


@pytest.mark.parametrize("field", ["pu_distance", "pu_power", "noise", "exponent", "group_radius"])
def test_scenario_validation(field):
    with pytest.raises(ValueError, match=field.split("_")[0]):
        replace(BASE, **{field: -1.0})
