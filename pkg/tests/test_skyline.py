from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_layers
from crowdstar.skyline import (
    AXES_2D,
    NO_PRUNING,
    CandidatePoint,
    PruneThresholds,
    candidate_count_trace,
    dominates,
    low_value_prune,
    skyline_levels,
    skyline_stream,
)


def pts(coords):
    return [CandidatePoint(f"u{i:04d}", tuple(float(c) for c in xy)) for i, xy in enumerate(coords)]


def level_sets(result):
    return [{int(p.user[1:]) for p in level} for level in result.levels]


@pytest.mark.parametrize(
    "a,b,expected", [((0.8, 0.6), (0.5, 0.5), True), ((0.8, 0.4), (0.5, 0.5), False), ((0.5, 0.5), (0.5, 0.5), False)]
)
def test_dominates(a, b, expected):
    assert dominates(CandidatePoint("a", a), CandidatePoint("b", b)) is expected


def test_prune_is_strict_below():
    thresholds = PruneThresholds(minimums=(0.05, 0.05))
    kept, pruned = low_value_prune(pts([(0.02, 0.9), (0.05, 0.05)]), thresholds)
    assert [p.coords for p in pruned] == [(0.02, 0.9)]
    assert [p.coords for p in kept] == [(0.05, 0.05)]
    kept, pruned = low_value_prune(pts([(0.0, 0.0)]), PruneThresholds(minimums=(0.0, 0.0)))
    assert not pruned


def test_small_layers():
    result = skyline_levels(pts([(1, 3), (2, 2), (3, 1), (1, 1)]), 3, NO_PRUNING, AXES_2D)
    assert level_sets(result) == [{0, 1, 2}, {3}]


def test_single_and_identical_points():
    assert level_sets(skyline_levels(pts([(0.3, 0.3)]), 3, NO_PRUNING)) == [{0}]
    assert level_sets(skyline_levels(pts([(0.3, 0.3)] * 4), 3, NO_PRUNING)) == [{0, 1, 2, 3}]


def test_trace_edge_cases():
    assert candidate_count_trace([]) == [0]
    assert candidate_count_trace(pts([(0.5, 0.5)])) == [1, 0]


def test_trace_strictly_decreasing_in_2d():
    rng = np.random.default_rng(3)
    trace = candidate_count_trace(pts(rng.random((100, 2))))
    assert trace[-1] == 0
    assert all(a > b for a, b in zip(trace, trace[1:]))


def test_stream_emits_by_distance_within_level():
    rng = np.random.default_rng(5)
    points = pts(rng.random((300, 3)))
    out = list(skyline_stream(points, 2))
    assert [lvl for _, lvl in out] == sorted(lvl for _, lvl in out)
    first = [p for p, lvl in out if lvl == 1]
    dist = [np.linalg.norm(1 - np.array(p.coords)) for p in first]
    assert dist == sorted(dist)


def test_pruned_users_never_in_levels():
    rng = np.random.default_rng(9)
    result = skyline_levels(pts(rng.random((200, 4))), 3)
    assert result.pruned
    assert not result.pruned & set(result.users())


def test_duplicate_users_rejected():
    with pytest.raises(ValueError):
        skyline_levels([CandidatePoint("a", (0.1, 0.2)), CandidatePoint("a", (0.3, 0.4))], 1, NO_PRUNING)


coords = st.integers(2, 4).flatmap(
    lambda d: st.lists(st.tuples(*[st.integers(0, 6)] * d), min_size=1, max_size=60)
)


@settings(max_examples=150, deadline=None)
@given(coords)
def test_matches_brute_force_with_ties(c):
    result = skyline_levels(pts(c), 3, NO_PRUNING)
    assert level_sets(result) == brute_layers(c, 3)


@settings(max_examples=60, deadline=None)
@given(coords, st.integers(1, 2))
def test_layer_property(c, k):
    full = level_sets(skyline_levels(pts(c), k + 1, NO_PRUNING))
    removed = set().union(*full[:k]) if full else set()
    rest = [(i, xy) for i, xy in enumerate(c) if i not in removed]
    again = skyline_levels([CandidatePoint(f"u{i:04d}", tuple(map(float, xy))) for i, xy in rest], 1, NO_PRUNING)
    expected = full[k] if len(full) > k else set()
    assert (level_sets(again)[0] if again.levels else set()) == expected


@settings(max_examples=60, deadline=None)
@given(coords)
def test_monotone_transform_keeps_levels(c):
    warped = [tuple(np.exp(v) * 3 + 1 for v in xy) for xy in c]
    assert level_sets(skyline_levels(pts(c), 3, NO_PRUNING)) == level_sets(skyline_levels(pts(warped), 3, NO_PRUNING))


@settings(max_examples=60, deadline=None)
@given(coords)
def test_trace_never_increases(c):
    trace = candidate_count_trace(pts(c))
    assert trace[-1] == 0
    assert all(a >= b for a, b in zip(trace, trace[1:]))
