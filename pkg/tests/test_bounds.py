from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rdstab.bounds import (
    CapabilityError, GapVector, GridTooLargeError, bound_report, expected_incoming_work, known_bound,
    lambda_lb, lambda_lb_d2, lambda_m_search, monotone_fi_check, overlap_prob, overlap_probs, server_work,
)
from rdstab.distributions import ServiceSpec, min_moment_profile

import oracles

TWO_POINT = ServiceSpec.two_point(10, 100, 0.9)
G = [Fraction(19), Fraction(109, 10)]


def test_overlap_examples():
    assert overlap_probs(3, 2) == [0, Fraction(2, 3), Fraction(1, 3)]
    assert overlap_prob(5, 2, 2) == Fraction(1, 10)
    assert overlap_probs(10, 2) == [Fraction(28, 45), Fraction(16, 45), Fraction(1, 45)]
    assert overlap_probs(4, 4) == [0, 0, 0, 0, 1]


@given(st.integers(1, 9), st.data())
def test_overlap_matches_enumeration(K, data):
    d = data.draw(st.integers(1, K))
    ps = overlap_probs(K, d)
    assert sum(ps) == 1
    assert ps == [oracles.overlap_prob(K, d, m) for m in range(d + 1)]


def test_overlap_range_errors():
    with pytest.raises(ValueError):
        overlap_prob(3, 4, 1)
    with pytest.raises(ValueError):
        overlap_prob(3, 2, 3)


def test_lambda_lb_frozen_values():
    # frozen from oracles.lambda_lb
    assert lambda_lb(3, 2, G) == Fraction(15, 136)
    assert lambda_lb(10, 2, G) == Fraction(250, 743)
    assert float(lambda_lb(10, 2, min_moment_profile(TWO_POINT, 2))) == pytest.approx(0.3364737550471063, rel=1e-12)
    assert float(lambda_lb(10, 10, min_moment_profile(TWO_POINT, 10))) == pytest.approx(0.09999999991, rel=1e-12)


def test_lambda_lb_special_cases():
    assert lambda_lb(10, 1, [19.0]) == pytest.approx(10 / 19)
    assert lambda_lb(4, 4, [8.0, 6.0, 5.0, 2.5]) == pytest.approx(1 / 2.5)


def test_lambda_lb_bad_profile():
    with pytest.raises(ValueError):
        lambda_lb(3, 2, [5.0])
    with pytest.raises(ValueError):
        lambda_lb(3, 2, [5.0, 6.0])


def test_lambda_lb_d2():
    assert lambda_lb_d2(5, 4.0, 1.0) > 1.0
    assert lambda_lb_d2(3, 4.0, 1.0) < 1.0
    assert lambda_lb_d2(2, 7.0, 2.0) == pytest.approx(0.5)


def test_known_bound():
    assert known_bound(10.9) == pytest.approx(0.0917431192660550)
    assert known_bound(1.0) == 1.0
    with pytest.raises(ValueError):
        known_bound(0.0)


def test_gap_vector():
    gv = GapVector.from_free([3, 1], d=2)
    assert gv.delta == (3, 1, 0)
    assert gv.positions().tolist() == [0, 3, 4, 4]
    assert gv.cumulative(0, 2) == 4
    assert GapVector.from_state([2, 5, 5], 2).delta == (3, 0)
    with pytest.raises(ValueError):
        GapVector((1, 2), 2)


def test_expected_work_zero_gaps():
    v, se = expected_incoming_work(GapVector.zeros(10, 2), TWO_POINT, 10, 2)
    assert v == pytest.approx(21.8) and se == 0


def test_expected_work_saturated_frozen():
    # oracles.expected_incoming_work([0, 100, 100], ...) == 299/15
    v, _ = expected_incoming_work(GapVector((100, 0), 2), TWO_POINT, 3, 2)
    assert v == pytest.approx(299 / 15, rel=1e-12)
    assert v == pytest.approx(2 / 3 * 19 + 2 / 3 * 10.9, rel=1e-12)
    big, _ = expected_incoming_work(GapVector((5000, 0), 2), TWO_POINT, 3, 2)
    assert big == pytest.approx(v, rel=1e-12)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(0, 12), min_size=1, max_size=3), st.integers(1, 3))
def test_expected_work_matches_oracle(gaps, d):
    K = len(gaps) + 1
    d = min(d, K)
    gaps = gaps[:K - d] + [0] * (d - 1)
    values, probs = [2, 7], [Fraction(3, 5), Fraction(2, 5)]
    spec = ServiceSpec.iid([(2, 0.6), (7, 0.4)])
    gv = GapVector(tuple(gaps), d)
    want = oracles.expected_incoming_work(gv.positions().tolist(), values, probs, d)
    got, _ = expected_incoming_work(gv, spec, K, d)
    assert got == pytest.approx(float(want), rel=1e-12)
    assert got >= min_moment_profile(spec, d)[-1] - 1e-12


def test_expected_work_mc_close_to_exact():
    gv = GapVector((30, 0), 2)
    exact, _ = expected_incoming_work(gv, TWO_POINT, 3, 2)
    mc, se = expected_incoming_work(gv, TWO_POINT, 3, 2, method="mc", samples=50_000, seed=5)
    assert abs(mc - exact) < 4 * se


def test_profile_has_no_exact_expectation():
    spec = ServiceSpec.moment_profile([3.0, 2.0, 1.5])
    with pytest.raises(CapabilityError):
        expected_incoming_work(GapVector.zeros(3, 2), spec, 3, 2)
    with pytest.raises(CapabilityError):
        lambda_m_search(spec, 3, 2)


def test_lambda_m_frozen_values():
    # frozen from oracles.lambda_m
    assert lambda_m_search(TWO_POINT, 3, 2).value == pytest.approx(15 / 109, rel=1e-12)
    small = ServiceSpec.iid([(1, 0.5), (3, 0.5)])
    assert lambda_m_search(small, 4, 2).value == pytest.approx(4 / 3, rel=1e-12)
    ident = ServiceSpec.identical([(1, 0.5), (3, 0.5)])
    assert lambda_m_search(ident, 4, 2).value == pytest.approx(1.0, rel=1e-12)
    other = ServiceSpec.iid([(2, 0.75), (5, 0.25)])
    assert lambda_m_search(other, 4, 3).value == pytest.approx(256 / 393, rel=1e-12)


def test_lambda_m_special_cases():
    assert lambda_m_search(TWO_POINT, 2, 2).value == pytest.approx(1 / 10.9, rel=1e-12)
    assert lambda_m_search(TWO_POINT, 7, 1).value == pytest.approx(7 / 19, rel=1e-12)
    res = lambda_m_search(TWO_POINT, 3, 2)
    assert res.cells == 101
    assert float(lambda_lb(3, 2, G)) <= res.value <= 3 / (2 * 10.9) + 1e-12


def test_lambda_m_grid_refusal():
    with pytest.raises(GridTooLargeError) as exc:
        lambda_m_search(TWO_POINT, 8, 2, grid_cell_cap=1000)
    assert exc.value.cells == 101**6


def test_lambda_m_mc_brackets_exact():
    spec = ServiceSpec.iid([(1, 0.5), (3, 0.5)])
    res = lambda_m_search(spec, 4, 2, method="mc", mc_samples=20_000, seed=2)
    assert abs(res.value - 4 / 3) < 5 * res.stderr + 0.02


def test_monotone_f():
    f, _ = server_work(GapVector.zeros(4, 2), TWO_POINT, 4, 2)
    assert np.allclose(f, f[0])
    f, _ = server_work(GapVector((5, 0), 2), TWO_POINT, 3, 2)
    assert f[0] >= f[1] and f[1] == pytest.approx(f[2])
    assert monotone_fi_check(GapVector((5, 0), 2), TWO_POINT, 3, 2)
    assert monotone_fi_check([0, 7, 40, 40], TWO_POINT, 4, 2, method="mc", samples=20_000, seed=1)
    with pytest.raises(ValueError):
        monotone_fi_check([5, 1, 1], TWO_POINT, 3, 2)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.integers(0, 120), min_size=2, max_size=4), st.integers(1, 3))
def test_monotone_f_exact_property(gaps, d):
    K = len(gaps) + 1
    d = min(d, K)
    gv = GapVector(tuple(gaps[:K - d]) + (0,) * (d - 1), d)
    assert monotone_fi_check(gv, TWO_POINT, K, d)


def test_bound_report():
    rep = bound_report(TWO_POINT, 3, 2, with_lambda_m=True)
    assert rep.p_m == [0, Fraction(2, 3), Fraction(1, 3)]
    assert rep.lambda_lb == pytest.approx(0.1102941176470588)
    assert rep.known_bound == pytest.approx(1 / 10.9)
    assert rep.best_bound == rep.lambda_lb
    assert rep.time_scaling
    d = rep.to_dict()
    assert d["p_m_exact"] == ["0", "2/3", "1/3"]
    assert d["lambda_m"]["value"] == pytest.approx(15 / 109)


def test_bound_report_d1():
    rep = bound_report(TWO_POINT, 10, 1)
    assert rep.lambda_lb == pytest.approx(10 / 19)
    assert rep.known_bound == pytest.approx(1 / 19)
