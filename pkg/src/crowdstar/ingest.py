"""Line-delimited event log loading.

Each line is one JSON object. ``author`` and ``addressed_to`` are user
handles inside the event's crowd. Unknown fields are ignored, except
``text`` which is used to tag events of crowds whose policy reads topics
from text.
"""

from __future__ import annotations

import json
import math
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Iterator, Mapping, Optional, Sequence, Union

from .events import (
    ActivityEvent,
    ClassifiedEvent,
    CrowdPolicy,
    EventValidationError,
    UserId,
    classify_event,
    event_weight,
    normalize_topic,
)

RECORD_FIELDS = (
    "event_id",
    "crowd",
    "author",
    "topics",
    "timestamp",
    "kind",
    "conversational",
    "repost",
    "addressed_to",
    "in_reply_to",
    "upvotes",
    "correct_label",
)

LogSource = Union[str, Path, Iterable[str]]


@dataclass
class IngestReport:
    accepted: int = 0
    rejected: int = 0
    reject_reasons: Counter = field(default_factory=Counter)
    time_range: Optional[tuple[float, float]] = None

    @property
    def total(self) -> int:
        return self.accepted + self.rejected

    def reject(self, reason: str) -> None:
        self.rejected += 1
        self.reject_reasons[reason] += 1

    def to_dict(self) -> dict:
        return {
            "accepted": self.accepted,
            "rejected": self.rejected,
            "reject_reasons": dict(sorted(self.reject_reasons.items())),
            "time_range": list(self.time_range) if self.time_range else None,
        }


class RecordError(ValueError):
    def __init__(self, reason: str, detail: str = ""):
        super().__init__(f"{reason}: {detail}" if detail else reason)
        self.reason = reason


def _as_bool(value, name: str) -> bool:
    if value is None:
        return False
    if isinstance(value, bool):
        return value
    raise RecordError("invalid_field", name)


def tag_text(text: str, topic_universe: Sequence[str]) -> tuple[str, ...]:
    lowered = text.lower()
    return tuple(t for t in topic_universe if t in lowered)


def parse_record(
    record: Mapping, policies: Mapping[str, CrowdPolicy], topic_universe: Sequence[str] = ()
) -> ActivityEvent:
    if not isinstance(record, Mapping):
        raise RecordError("malformed", "record is not an object")
    for name in ("event_id", "crowd", "author", "timestamp", "kind"):
        if record.get(name) in (None, ""):
            raise RecordError("missing_field", name)

    crowd = str(record["crowd"])
    policy = policies.get(crowd)
    if policy is None:
        raise RecordError("unknown_crowd", crowd)

    ts = record["timestamp"]
    if isinstance(ts, bool) or not isinstance(ts, (int, float)) or not math.isfinite(ts):
        raise RecordError("invalid_field", "timestamp")
    upvotes = record.get("upvotes", 0)
    if upvotes is None:
        upvotes = 0
    if isinstance(upvotes, bool) or not isinstance(upvotes, int):
        raise RecordError("invalid_field", "upvotes")
    correct = record.get("correct_label")
    if correct is not None and not isinstance(correct, bool):
        raise RecordError("invalid_field", "correct_label")

    raw_topics = record.get("topics") or []
    if isinstance(raw_topics, str) or not isinstance(raw_topics, list):
        raise RecordError("invalid_field", "topics")
    text = record.get("text")
    if text is not None and not isinstance(text, str):
        raise RecordError("invalid_field", "text")

    try:
        if policy.topic_source == "text" and text is not None:
            topics = tag_text(text, topic_universe)
        else:
            topics = tuple(dict.fromkeys(normalize_topic(t) for t in raw_topics))
        addressed = record.get("addressed_to")
        in_reply_to = record.get("in_reply_to")
        return ActivityEvent(
            event_id=str(record["event_id"]),
            crowd=crowd,
            author=UserId(crowd, str(record["author"])),
            timestamp=ts,
            kind=str(record["kind"]),
            topics=topics,
            conversational=_as_bool(record.get("conversational"), "conversational"),
            repost=_as_bool(record.get("repost"), "repost"),
            addressed_to=UserId(crowd, str(addressed)) if addressed else None,
            in_reply_to=str(in_reply_to) if in_reply_to else None,
            upvotes=upvotes,
            correct_label=correct,
            text=text,
        )
    except EventValidationError as exc:
        raise RecordError("invariant_violation", str(exc)) from exc


def event_to_record(e: ActivityEvent) -> dict:
    rec = {
        "event_id": e.event_id,
        "crowd": e.crowd,
        "author": e.author.handle,
        "topics": list(e.topics),
        "timestamp": e.timestamp,
        "kind": e.kind,
        "conversational": e.conversational,
        "repost": e.repost,
        "addressed_to": e.addressed_to.handle if e.addressed_to else None,
        "in_reply_to": e.in_reply_to,
        "upvotes": e.upvotes,
        "correct_label": e.correct_label,
    }
    if e.text is not None:
        rec["text"] = e.text
    return rec


def _lines(source: LogSource) -> Iterator[str]:
    if isinstance(source, (str, Path)):
        # OSError propagates: an unreadable source is fatal
        with open(source, encoding="utf-8") as fh:
            yield from fh
    else:
        yield from source


def ingest(
    logs: Union[LogSource, Sequence[LogSource]],
    policies: Mapping[str, CrowdPolicy],
    topic_universe: Sequence[str] = (),
) -> tuple[list[ClassifiedEvent], IngestReport]:
    """Parse, validate, tag and classify one or more event logs.

    ``logs`` is a path, or a sequence of sources where each source is a
    path or an iterable of lines.

    Bad lines are counted in the report and skipped. Duplicate event ids
    keep the first occurrence. The result is sorted by (timestamp, event_id).
    """
    if isinstance(logs, (str, Path)):
        logs = [logs]
    universe = [normalize_topic(t) for t in topic_universe]

    report = IngestReport()
    seen: set[str] = set()
    parsed: list[ActivityEvent] = []
    for source in logs:
        for line in _lines(source):
            line = line.strip()
            if not line:
                report.reject("blank")
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError:
                report.reject("malformed")
                continue
            try:
                event = parse_record(record, policies, universe)
            except RecordError as exc:
                report.reject(exc.reason)
                continue
            if event.event_id in seen:
                report.reject("duplicate")
                continue
            seen.add(event.event_id)
            parsed.append(event)
            report.accepted += 1

    parsed.sort(key=lambda e: (e.timestamp, e.event_id))
    parsed = _inherit_answer_topics(parsed)
    if parsed:
        report.time_range = (parsed[0].timestamp, parsed[-1].timestamp)

    classified = [
        ClassifiedEvent(e, classify_event(e, policies[e.crowd]), event_weight(e, policies[e.crowd]))
        for e in parsed
    ]
    return classified, report


def _inherit_answer_topics(events: list[ActivityEvent]) -> list[ActivityEvent]:
    # untagged replies take the topics of the question they answer
    topics_of: dict[str, tuple[str, ...]] = {}
    out = []
    for e in events:
        if e.kind == "answer" and not e.topics and e.in_reply_to in topics_of:
            e = ActivityEvent(**{**e.__dict__, "topics": topics_of[e.in_reply_to]})
        if e.kind == "question":
            topics_of[e.event_id] = e.topics
        out.append(e)
    return out


def window_filter(events: Iterable[ClassifiedEvent], window: float, now: float) -> Iterator[ClassifiedEvent]:
    """Keep events with timestamp in the half-open interval (now - window, now]."""
    if not window > 0:
        raise ValueError("window must be positive")
    lo = now - window
    for ce in events:
        if lo < ce.ts <= now:
            yield ce
