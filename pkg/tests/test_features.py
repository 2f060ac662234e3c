from __future__ import annotations

import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from crowdstar.features import (
    HOUR,
    IndexConfig,
    MetricCounters,
    SmoothingParams,
    activity,
    interest,
    minmax,
    qualification,
    qualification_raw,
    responsiveness,
    smoothing_params,
)

CFG = IndexConfig()


def test_qualification_raw():
    assert qualification_raw(MetricCounters(ca=2, a=4, op=3, p=5)) == pytest.approx(1.1, abs=1e-12)
    assert qualification_raw(MetricCounters()) == 0
    assert qualification_raw(MetricCounters(ca=1, a=1, op=1, p=1)) == 2


def test_qualification_smoothed():
    s = SmoothingParams(mu_ca=0.5, mu_op=0.5, n=10)
    got = qualification(MetricCounters(ca=2, a=4, op=3, p=5), s)
    assert got == pytest.approx(float(oracles.qualification(2, 4, 3, 5, 0.5, 0.5, 10)), abs=1e-12)
    assert got == pytest.approx(0.41190, abs=1e-5)
    assert qualification(MetricCounters(), s) == pytest.approx(0.1, abs=1e-12)


def test_smoothing_disabled_is_raw():
    m = MetricCounters(ca=2, a=4, op=3, p=5)
    assert qualification(m, SmoothingParams()) == qualification_raw(m)


def test_interest():
    assert interest(MetricCounters(p=20, p_all=20), SmoothingParams()) == 1
    assert interest(MetricCounters(p=5, p_all=50), SmoothingParams(mu_int=0.2, n=10)) == pytest.approx(5.2 / 60, abs=1e-12)
    assert interest(MetricCounters(p=1, p_all=1), SmoothingParams(mu_int=0.2, n=50)) == pytest.approx(1.2 / 51, abs=1e-12)


def test_responsiveness():
    m = MetricCounters(aq=1, pq=2, cp=4, p=8, rt_sum=4.0, rt_n=2)
    s = SmoothingParams(mu_aq=0.5, mu_cp=0.5, n=5)
    expected = oracles.responsiveness(1, 2, 4, 8, Fraction(1, 2), Fraction(1, 2), 5, rt_mean_hours=2)
    assert responsiveness(m, s, CFG) == pytest.approx(float(expected), abs=1e-12)
    assert responsiveness(m, s, CFG) == pytest.approx(1.06044, abs=1e-5)
    assert responsiveness(MetricCounters(), s, CFG) == pytest.approx(0.2, abs=1e-12)


def test_latency_floor():
    m = MetricCounters(rt_sum=0.01, rt_n=1)
    assert responsiveness(m, SmoothingParams(), CFG) == pytest.approx(10.0)


def test_activity():
    now = 1_000_000.0
    m = MetricCounters(lq=now - 3 * HOUR, la=now - 5 * HOUR)
    assert activity(m, now, CFG) == pytest.approx(3.0)
    assert activity(MetricCounters(), now, CFG) == CFG.a2_cap_seconds / HOUR
    assert activity(MetricCounters(la=now), now, CFG) == 0


@pytest.mark.parametrize(
    "values,expected", [([0, 0.5, 1], [0, 0.5, 1]), ([2, 2, 2], [0.5, 0.5, 0.5]), ([1, 3], [0, 1]), ([], [])]
)
def test_minmax(values, expected):
    assert minmax(values) == expected


def test_smoothing_means_skip_empty_denominators():
    s = smoothing_params([MetricCounters(ca=1, a=2, p=4, op=2, p_all=8), MetricCounters()])
    assert s.n == 2
    assert (s.mu_ca, s.mu_op, s.mu_int) == (0.5, 0.5, 0.5)
    assert s.mu_aq == 0


counts = st.integers(0, 50)


# strict decrease in a denominator needs a positive numerator, hence mu > 0
@given(counts, counts, counts, counts, st.floats(0.01, 1), st.integers(1, 100))
def test_smoothed_monotone_in_numerators(ca, a, op, p, mu, n):
    a, p = max(a, ca + 1), max(p, op + 1)
    s = SmoothingParams(mu_ca=mu, mu_op=mu, mu_int=mu, n=n)
    base = qualification(MetricCounters(ca=ca, a=a, op=op, p=p), s)
    assert qualification(MetricCounters(ca=ca + 1, a=a, op=op, p=p), s) > base
    assert qualification(MetricCounters(ca=ca, a=a, op=op + 1, p=p), s) > base
    assert qualification(MetricCounters(ca=ca, a=a + 1, op=op, p=p), s) < base
    assert qualification(MetricCounters(ca=ca, a=a, op=op, p=p + 1), s) < base
    k2 = interest(MetricCounters(p=p, p_all=p + a), s)
    assert interest(MetricCounters(p=p + 1, p_all=p + a), s) > k2
    assert interest(MetricCounters(p=p, p_all=p + a + 1), s) < k2


@given(st.floats(0, 0.999), st.floats(0, 0.999), st.integers(1, 1000))
def test_single_post_user_is_suppressed(mu_ca, mu_op, n):
    m = MetricCounters(ca=1, a=1, op=1, p=1)
    assert qualification(m, SmoothingParams(mu_ca=mu_ca, mu_op=mu_op, n=n)) < qualification_raw(m)


@given(st.lists(st.floats(-1e6, 1e6), min_size=1, max_size=30))
def test_minmax_preserves_order(values):
    scaled = minmax(values)
    assert all(0 <= v <= 1 for v in scaled)
    for x, xs in zip(values, scaled):
        for y, ys in zip(values, scaled):
            if x <= y:
                assert xs <= ys


@given(
    st.builds(
        MetricCounters,
        a=counts, ca=counts, p=counts, p_all=counts, op=counts, cp=counts, pq=counts, aq=counts,
        rt_sum=st.floats(0, 1000), rt_n=st.integers(0, 10),
    ),
    st.floats(0, 1),
    st.integers(0, 100),
)
def test_raw_features_non_negative(m, mu, n):
    s = SmoothingParams(mu, mu, mu, mu, mu, n)
    for v in (qualification(m, s), interest(m, s), responsiveness(m, s, CFG)):
        assert v >= 0 and math.isfinite(v)
