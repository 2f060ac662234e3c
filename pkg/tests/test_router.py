from __future__ import annotations

import json
import random
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

import oracles
from crowdstar.events import PLAIN_TEMPLATE, UserId, quora_like_policy, twitter_like_policy
from crowdstar.features import DAY, HOUR, FeatureVector
from crowdstar.index import FeatureIndex, TopicSnapshot
from crowdstar.ingest import ingest
from crowdstar.router import (
    AskTooLongError,
    NoViableCrowdError,
    QuestionTask,
    RouterConfig,
    StaleSnapshotError,
    compose_ask,
    issue_plan,
    middle_out,
    order_candidates,
    random_plan,
    route,
    snapshots_for,
    split_budget,
    split_mode,
)
from crowdstar.skyline import NO_PRUNING, CandidatePoint, SkylineLevels

POLICIES = {"q": quora_like_policy("q"), "t": twitter_like_policy("t")}
NOW = 2_000_000_000.0


@pytest.mark.parametrize(
    "scores,budget,expected,mode",
    [
        ({"a": 0.8, "b": 0.7}, 10, {"a": 5, "b": 5}, "equal_split"),
        ({"a": 0.9, "b": 0.3}, 10, {"a": 8, "b": 2}, "proportional"),
        ({"a": 0.5, "b": 0.5}, 8, {"a": 4, "b": 4}, "equal_split"),
        ({"a": 0.5, "b": 0.5}, 3, {"a": 2, "b": 1}, "equal_split"),
        ({"a": 0.8, "b": 0.6}, 7, {"a": 4, "b": 3}, "proportional"),
    ],
)
def test_split(scores, budget, expected, mode):
    assert split_mode(scores) == mode
    assert split_budget(scores, budget) == expected


def test_split_needs_a_viable_crowd():
    with pytest.raises(NoViableCrowdError):
        split_budget({"a": 0.0, "b": 0.0}, 4)


scores = st.dictionaries(st.sampled_from("abcde"), st.integers(1, 100).map(lambda k: k / 100), min_size=1)


@given(scores, st.integers(1, 30), st.integers(1, 50))
def test_split_conserves_budget_and_scales(s, budget, factor):
    alloc = split_budget(s, budget)
    assert sum(alloc.values()) == budget
    scaled = {c: v * factor for c, v in s.items()}
    assert split_mode(scaled) == split_mode(s)
    assert split_budget(scaled, budget) == alloc


@given(scores, st.integers(1, 30))
def test_proportional_split_matches_reference(s, budget):
    if split_mode(s) != "proportional":
        return
    exact = {c: Fraction(round(v * 100), 100) for c, v in s.items()}
    assert split_budget(s, budget) == oracles.largest_remainder(exact, budget)


def test_middle_out():
    assert middle_out(5) == [2, 1, 3, 0, 4]
    assert middle_out(1) == [0]
    assert middle_out(0) == []


def lv(*levels):
    return SkylineLevels(
        levels=[[CandidatePoint(u, (0.0, 0.0, a, 0.0)) for u, a in level] for level in levels]
    )


def test_order_candidates_middle_out_on_availability():
    levels = lv([("u5", 0.5), ("u1", 0.1), ("u3", 0.3), ("u2", 0.2), ("u4", 0.4)])
    assert order_candidates(levels, 5) == ["u3", "u2", "u4", "u1", "u5"]
    assert order_candidates(levels, 1) == ["u3"]


def test_order_candidates_continues_into_next_level():
    levels = lv([("a", 0.1)], [("b", 0.1), ("c", 0.2), ("d", 0.3)])
    assert order_candidates(levels, 3) == ["a", "c", "b"]


def test_gate_skips_recent():
    levels = lv([("a", 0.1), ("b", 0.2), ("c", 0.3)])
    feats = {"a": FeatureVector(a2=100), "b": FeatureVector(a2=1), "c": FeatureVector(a2=24)}
    assert order_candidates(levels, 3, feats, 24) == ["a", "c"]


def test_compose_greet():
    task = QuestionTask("q", "Do you think motorbiking is popular among women in USA?", "motorbiking", 1)
    msg = compose_ask(task, UserId("t", "user"), POLICIES["t"])
    assert msg == "Hi @user! Do you think motorbiking is popular among women in USA? #ask #motorbiking"


def test_compose_plain():
    task = QuestionTask("q", "How popular is motorbiking among women in USA?", "motorbiking", 1)
    assert compose_ask(task, UserId("q", "user"), POLICIES["q"]) == task.text


def test_compose_too_long():
    task = QuestionTask("q", "x" * 200, "hiking", 1)
    with pytest.raises(AskTooLongError) as err:
        compose_ask(task, UserId("t", "user"), POLICIES["t"])
    assert err.value.overflow == len("Hi @user! " + "x" * 200 + " #ask #hiking") - 140


def snapshot(crowd, users, knowledge_at=NOW):
    feats = {}
    for h, (k1, k2, a1, a2, raw_a2) in users.items():
        feats[h] = FeatureVector(a2=raw_a2, k1n=k1, k2n=k2, a1n=a1, a2n=a2)
    return TopicSnapshot(crowd, "hiking", NOW, feats, knowledge_at=knowledge_at)


def two_crowds():
    q = {f"q{i}": (i / 10, 1 - i / 10, 0.5, 0.5, 100.0) for i in range(1, 8)}
    t = {f"t{i}": (i / 10, 1 - i / 10, 0.45, 0.5, 100.0) for i in range(1, 8)}
    return {"q": snapshot("q", q), "t": snapshot("t", t)}


def test_route_two_close_crowds():
    task = QuestionTask("Q", "Best trail?", "hiking", 4)
    plan = route(task, two_crowds(), POLICIES, RouterConfig(thresholds=NO_PRUNING), NOW)
    assert plan.mode == "equal_split"
    assert plan.allocations == {"q": 2, "t": 2}
    assert [a.user.handle for a in plan.asks] == ["q4", "q3", "t4", "t3"]
    assert plan.shortfall == {"q": 0, "t": 0}


def test_route_is_deterministic_and_read_only():
    snaps = two_crowds()
    before = json.dumps({c: s.to_dict() for c, s in snaps.items()}, sort_keys=True)
    task = QuestionTask("Q", "Best trail?", "hiking", 4)
    a = route(task, snaps, POLICIES, RouterConfig(), NOW)
    b = route(task, snaps, POLICIES, RouterConfig(), NOW)
    assert a.to_dict() == b.to_dict()
    assert json.dumps({c: s.to_dict() for c, s in snaps.items()}, sort_keys=True) == before


def test_route_rejects_stale_snapshot():
    snaps = {"q": snapshot("q", {"a": (1, 1, 1, 1, 100.0)}, knowledge_at=NOW - 3 * DAY)}
    with pytest.raises(StaleSnapshotError):
        route(QuestionTask("Q", "x?", "hiking", 1), snaps, POLICIES, RouterConfig(), NOW)


def test_route_without_candidates():
    with pytest.raises(NoViableCrowdError):
        route(QuestionTask("Q", "x?", "hiking", 1), {"q": snapshot("q", {})}, POLICIES, RouterConfig(), NOW)


def test_random_plan_draws_from_topic_population():
    task = QuestionTask("Q", "x?", "hiking", 4)
    plan = random_plan(task, two_crowds(), POLICIES, random.Random(1), NOW)
    assert len(plan.asks) == 4 and sum(plan.allocations.values()) == 4


def sim_index():
    lines = []
    for i in range(12):
        for topic in ("hiking", "travel"):
            for k in range(i + 1):
                lines.append(
                    json.dumps(
                        {
                            "event_id": f"{topic}-{i}-{k}",
                            "crowd": "t",
                            "author": f"u{i}",
                            "timestamp": NOW - (k + 1) * HOUR * 30 - i * 100,
                            "kind": "post",
                            "text": f"{topic} notes {k}",
                        }
                    )
                )
    events, _ = ingest([lines], POLICIES, ["hiking", "travel"])
    return FeatureIndex(events).build(NOW)


def test_asked_user_is_gated_on_that_topic_only():
    idx = sim_index()
    cfg = RouterConfig(thresholds=NO_PRUNING)
    task = QuestionTask("Q1", "hiking?", "hiking", 1)
    first = route(task, snapshots_for(idx, "hiking", NOW, ["t"]), POLICIES, cfg, NOW)
    user = first.asks[0].user
    issue_plan(first, idx)
    later = NOW + HOUR
    again = route(QuestionTask("Q2", "hiking?", "hiking", 12), snapshots_for(idx, "hiking", later, ["t"]), POLICIES, cfg, later)
    assert user not in {a.user for a in again.asks}
    other = route(QuestionTask("Q3", "travel?", "travel", 12), snapshots_for(idx, "travel", later, ["t"]), POLICIES, cfg, later)
    assert user in {a.user for a in other.asks}
    after_gate = NOW + 25 * HOUR
    back = route(QuestionTask("Q4", "hiking?", "hiking", 12), snapshots_for(idx, "hiking", after_gate, ["t"]), POLICIES, cfg, after_gate)
    assert user in {a.user for a in back.asks}
