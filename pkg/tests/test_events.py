from __future__ import annotations

import pytest
from hypothesis import given
from hypothesis import strategies as st

from crowdstar.events import (
    ActivityEvent,
    EventValidationError,
    PolicyMismatchError,
    UserId,
    classify_event,
    event_weight,
    normalize_topic,
    quora_like_policy,
    twitter_like_policy,
)

Q = quora_like_policy("q")
T = twitter_like_policy("t")


def ev(crowd="q", kind="post", **kw):
    kw.setdefault("timestamp", 100.0)
    if kind == "answer":
        kw.setdefault("in_reply_to", "x")
    return ActivityEvent("e1", crowd, UserId(crowd, "u"), kind=kind, **kw)


def test_upvoted_answer_is_correct_under_threshold():
    assert classify_event(ev(kind="answer", upvotes=3), Q).is_correct_answer


def test_single_upvote_is_not_enough():
    assert not classify_event(ev(kind="answer", upvotes=1), Q).is_correct_answer


def test_repost_is_a_post_but_not_original():
    f = classify_event(ev("t", repost=True), T)
    assert f.is_post and not f.is_original_post


def test_question_is_not_original_on_quora_like():
    f = classify_event(ev(kind="question"), Q)
    assert not f.is_original_post


def test_explicit_label_passes_through():
    f = classify_event(ev("t", kind="answer", correct_label=True), T)
    assert f.is_correct_answer


def test_wrong_policy_is_rejected():
    with pytest.raises(PolicyMismatchError):
        classify_event(ev("q"), T)


@pytest.mark.parametrize("upvotes,policy,expected", [(4, Q, 5), (4, T, 1), (0, Q, 1)])
def test_event_weight(upvotes, policy, expected):
    crowd = policy.crowd
    assert event_weight(ev(crowd, upvotes=upvotes), policy) == expected


def test_topic_normalization():
    assert normalize_topic("  Rock   Climbing ") == "rock climbing"
    with pytest.raises(EventValidationError):
        normalize_topic("   ")


@pytest.mark.parametrize(
    "kw",
    [
        {"timestamp": 0},
        {"kind": "tweet"},
        {"upvotes": -1},
        {"repost": True, "conversational": True},
    ],
)
def test_invalid_events(kw):
    with pytest.raises(EventValidationError):
        ev(**kw)


def test_answer_needs_parent():
    with pytest.raises(EventValidationError):
        ActivityEvent("e", "q", UserId("q", "u"), 1.0, "answer")


events = st.builds(
    lambda crowd, kind, conv, repost, up, label: ev(
        crowd, kind, conversational=conv and not repost, repost=repost, upvotes=up, correct_label=label
    ),
    st.sampled_from(["q", "t"]),
    st.sampled_from(["post", "answer", "question", "blog"]),
    st.booleans(),
    st.booleans(),
    st.integers(0, 20),
    st.sampled_from([None, True, False]),
)


@given(events)
def test_flags_are_consistent(e):
    p = Q if e.crowd == "q" else T
    f = classify_event(e, p)
    assert not (f.is_original_post and f.is_conversational_post)
    if f.is_original_post or f.is_conversational_post:
        assert f.is_post
    assert classify_event(e, p) == f
    assert event_weight(e, p) >= 1
