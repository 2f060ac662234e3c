from __future__ import annotations

import json

import pytest

from crowdstar.events import quora_like_policy, twitter_like_policy
from crowdstar.features import DAY
from crowdstar.index import FeatureIndex
from crowdstar.ingest import ingest, window_filter

POLICIES = {"q": quora_like_policy("q"), "t": twitter_like_policy("t")}


def rec(eid, ts, crowd="t", author="u", kind="post", **kw):
    return json.dumps({"event_id": eid, "crowd": crowd, "author": author, "timestamp": ts, "kind": kind, **kw})


def test_counts_accepted_and_rejected():
    lines = [rec("a", 1), rec("b", 2), "{not json", rec("c", 3)]
    events, report = ingest([lines], POLICIES)
    assert (report.accepted, report.rejected) == (3, 1)
    assert report.reject_reasons["malformed"] == 1
    assert len(events) == 3


def test_text_tagging_for_text_crowds():
    events, _ = ingest([[rec("a", 1, text="Great hiking trail today")]], POLICIES, ["hiking", "travel"])
    assert events[0].topics == ("hiking",)


def test_tags_win_for_tag_crowds():
    line = rec("a", 1, crowd="q", kind="blog", topics=["Travel"], text="hiking everywhere")
    events, _ = ingest([[line]], POLICIES, ["hiking", "travel"])
    assert events[0].topics == ("travel",)


@pytest.mark.parametrize(
    "line,reason",
    [
        (rec("a", 1, crowd="nope"), "unknown_crowd"),
        (json.dumps({"event_id": "a", "crowd": "t", "timestamp": 1, "kind": "post"}), "missing_field"),
        (rec("a", "yesterday"), "invalid_field"),
        (rec("a", 1, kind="answer"), "invariant_violation"),
        ("", "blank"),
        ("[1, 2]", "malformed"),
    ],
)
def test_reject_reasons(line, reason):
    _, report = ingest([[line]], POLICIES)
    assert report.reject_reasons == {reason: 1}


def test_duplicates_keep_first_and_do_not_change_counters():
    lines = [rec("a", 5, text="hiking"), rec("b", 3, text="hiking")]
    once, _ = ingest([lines], POLICIES, ["hiking"])
    twice, report = ingest([lines, lines], POLICIES, ["hiking"])
    assert report.reject_reasons["duplicate"] == 2
    assert once == twice
    a, b = FeatureIndex(once).build(10), FeatureIndex(twice).build(10)
    assert a.counters("t", "u", "hiking") == b.counters("t", "u", "hiking")


def test_output_is_sorted_by_time_then_id():
    lines = [rec("b", 2), rec("a", 2), rec("c", 1)]
    events, _ = ingest([lines], POLICIES)
    assert [e.event.event_id for e in events] == ["c", "a", "b"]


def test_answers_inherit_question_topics():
    lines = [
        rec("q1", 1, kind="question", text="any hiking tips?"),
        rec("a1", 2, author="v", kind="answer", in_reply_to="q1", text="go early"),
    ]
    events, _ = ingest([lines], POLICIES, ["hiking"])
    assert events[1].topics == ("hiking",)


def test_reads_files(tmp_path):
    p = tmp_path / "log.jsonl"
    p.write_text(rec("a", 1) + "\n")
    events, report = ingest(p, POLICIES)
    assert report.accepted == 1


def test_unreadable_file_is_fatal(tmp_path):
    with pytest.raises(OSError):
        ingest(tmp_path / "missing.jsonl", POLICIES)


def test_window_is_half_open():
    events, _ = ingest([[rec("a", 100 * DAY - 10 * DAY), rec("b", 100 * DAY - 40 * DAY), rec("c", 100 * DAY - 30 * DAY)]], POLICIES)
    kept = [ce.event.event_id for ce in window_filter(events, 30 * DAY, 100 * DAY)]
    assert kept == ["a"]
