"""Per (crowd, user, topic) counters and the refreshable feature index."""

from __future__ import annotations

import json
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .events import ClassifiedEvent, UserId
from .features import (
    FEATURES,
    HOUR,
    FeatureVector,
    IndexConfig,
    MetricCounters,
    SmoothingParams,
    activity,
    interest,
    normalize,
    qualification,
    responsiveness,
    smoothing_params,
)

Key = tuple[str, str, str]  # (crowd, handle, topic)


class UnknownQuestionError(KeyError):
    pass


@dataclass(frozen=True)
class AskRecord:
    question_id: str
    user: UserId
    topic: str
    issued_at: float
    message: str = ""

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "crowd": self.user.crowd,
            "user": self.user.handle,
            "topic": self.topic,
            "issued_at": self.issued_at,
            "message": self.message,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "AskRecord":
        return cls(d["question_id"], UserId(d["crowd"], d["user"]), d["topic"], d["issued_at"], d.get("message", ""))


@dataclass(frozen=True)
class FeedbackEvent:
    question_id: str
    responder: UserId
    answered_at: float
    correct: Optional[bool] = None

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "crowd": self.responder.crowd,
            "responder": self.responder.handle,
            "answered_at": self.answered_at,
            "correct": self.correct,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "FeedbackEvent":
        return cls(d["question_id"], UserId(d["crowd"], d["responder"]), d["answered_at"], d.get("correct"))


@dataclass(frozen=True)
class _Answered:
    # feedback resolved against the ask registry
    question_id: str
    responder: UserId
    topic: str
    answered_at: float
    issued_at: Optional[float]  # None for unsolicited answers


def _bump(value: Optional[float], ts: float) -> float:
    return ts if value is None or ts > value else value


def tally(
    events: Iterable[ClassifiedEvent],
    window: float,
    now: float,
    asks: Iterable[AskRecord] = (),
    answers: Iterable[_Answered] = (),
    questions: Optional[Mapping] = None,
    only: Optional[UserId] = None,
) -> dict[Key, MetricCounters]:
    """Counters from everything with a timestamp in (now - window, now].

    ``events`` must be time-sorted. ``questions`` maps question event ids to
    events and is used for response latency; it may cover more history than
    the window. ``only`` restricts counting to one user.
    """
    lo = now - window
    events = list(events)
    if questions is None:
        questions = {ce.event.event_id: ce.event for ce in events if ce.flags.is_question}
    counters: dict[Key, MetricCounters] = defaultdict(MetricCounters)
    posts_all: Counter = Counter()
    answered: set = set()

    for ce in events:
        ts = ce.ts
        if ts > now:
            break
        if ts <= lo:
            continue
        e, f = ce.event, ce.flags
        if only is None or e.author == only:
            if f.is_post:
                posts_all[e.author] += 1
            for t in e.topics:
                m = counters[(e.crowd, e.author.handle, t)]
                if f.is_post:
                    m.p += 1
                    if f.is_original_post:
                        m.op += ce.weight
                    if f.is_conversational_post:
                        m.cp += 1
                if f.is_answer:
                    m.a += 1
                    if f.is_correct_answer:
                        m.ca += ce.weight
                    tag = (e.author, e.in_reply_to, t)
                    if tag not in answered:
                        answered.add(tag)
                        m.aq += 1
                        q = questions.get(e.in_reply_to)
                        if q is not None and q.addressed_to == e.author and q.timestamp <= ts:
                            m.rt_sum += (ts - q.timestamp) / HOUR
                            m.rt_n += 1
                    m.la = _bump(m.la, ts)
        if f.is_question and e.addressed_to is not None and (only is None or e.addressed_to == only):
            for t in e.topics:
                m = counters[(e.crowd, e.addressed_to.handle, t)]
                m.pq += 1
                m.lq = _bump(m.lq, ts)

    for ask in asks:
        if lo < ask.issued_at <= now and (only is None or ask.user == only):
            m = counters[(ask.user.crowd, ask.user.handle, ask.topic)]
            m.pq += 1
            m.lq = _bump(m.lq, ask.issued_at)

    for ans in answers:
        if lo < ans.answered_at <= now and (only is None or ans.responder == only):
            m = counters[(ans.responder.crowd, ans.responder.handle, ans.topic)]
            tag = (ans.responder, "ask:" + ans.question_id, ans.topic)
            if tag in answered:
                continue
            answered.add(tag)
            m.aq += 1
            m.la = _bump(m.la, ans.answered_at)
            if ans.issued_at is not None:
                m.rt_sum += max(ans.answered_at - ans.issued_at, 0.0) / HOUR
                m.rt_n += 1

    for (crowd, handle, _t), m in counters.items():
        m.p_all = posts_all[UserId(crowd, handle)]
    return dict(counters)


def accumulate(
    events: Sequence[ClassifiedEvent],
    cfg: IndexConfig,
    now: float,
    asks: Iterable[AskRecord] = (),
    answers: Iterable[_Answered] = (),
) -> dict[Key, dict[str, MetricCounters]]:
    """Counters per key and feature, each honoring that feature's window."""
    asks, answers = list(asks), list(answers)
    questions = {ce.event.event_id: ce.event for ce in events if ce.flags.is_question}
    by_window = {
        w: tally(events, w, now, asks, answers, questions) for w in sorted(set(cfg.windows.values()))
    }
    keys = sorted(set().union(*by_window.values())) if by_window else []
    return {
        k: {f: by_window[cfg.windows[f]].get(k) or MetricCounters() for f in FEATURES}
        for k in keys
    }


@dataclass(frozen=True)
class TopicSnapshot:
    """Immutable, normalized view of one (crowd, topic)."""

    crowd: str
    topic: str
    computed_at: float
    features: Mapping[str, FeatureVector]
    smoothing: Mapping[str, SmoothingParams] = field(default_factory=dict)
    counters: Mapping[str, Mapping[str, MetricCounters]] = field(default_factory=dict)
    knowledge_at: Optional[float] = None

    @property
    def users(self) -> list[str]:
        return sorted(self.features)

    def to_dict(self) -> dict:
        return {
            "crowd": self.crowd,
            "topic": self.topic,
            "computed_at": self.computed_at,
            "knowledge_at": self.knowledge_at,
            "smoothing": {f: s.to_dict() for f, s in sorted(self.smoothing.items())},
            "users": {
                h: {
                    "counters": {f: m.to_dict() for f, m in self.counters.get(h, {}).items()},
                    "features": self.features[h].to_dict(),
                }
                for h in sorted(self.features)
            },
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TopicSnapshot":
        users = d.get("users", {})
        return cls(
            crowd=d["crowd"],
            topic=d["topic"],
            computed_at=d["computed_at"],
            knowledge_at=d.get("knowledge_at"),
            smoothing={f: SmoothingParams(**s) for f, s in d.get("smoothing", {}).items()},
            features={h: FeatureVector(**u["features"]) for h, u in users.items()},
            counters={
                h: {f: MetricCounters.from_dict(m) for f, m in u.get("counters", {}).items()}
                for h, u in users.items()
            },
        )


def snapshot_filename(crowd: str, topic: str) -> str:
    slug = re.sub(r"[^a-z0-9]+", "-", topic.lower()).strip("-") or "topic"
    return f"{crowd}__{slug}.json"


def write_snapshot(snap: TopicSnapshot, directory: Path) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    path = directory / snapshot_filename(snap.crowd, snap.topic)
    path.write_text(json.dumps(snap.to_dict(), sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return path


def load_snapshots(directory: Path) -> list[TopicSnapshot]:
    return [
        TopicSnapshot.from_dict(json.loads(p.read_text(encoding="utf-8")))
        for p in sorted(Path(directory).glob("*.json"))
    ]


@dataclass
class _TopicState:
    counters: dict[str, dict[str, MetricCounters]]  # handle -> feature -> counters
    raw: dict[str, FeatureVector]
    smoothing: dict[str, SmoothingParams]
    computed_at: float


class FeatureIndex:
    """Feature index over classified events, routing asks and answer feedback.

    Knowledge features are recomputed by ``refresh("daily_tick", now)``;
    availability features of a single (crowd, user, topic) are recomputed as
    soon as an ask or an answer touches it.
    """

    def __init__(self, events: Iterable[ClassifiedEvent] = (), cfg: Optional[IndexConfig] = None):
        self.cfg = cfg or IndexConfig()
        self._events: list[ClassifiedEvent] = []
        self._seen_ids: set[str] = set()
        self._questions: dict = {}
        self._by_user: dict[UserId, list[ClassifiedEvent]] = defaultdict(list)
        self._asks: list[AskRecord] = []
        self._asks_by_user: dict[UserId, list[AskRecord]] = defaultdict(list)
        self._ask_registry: dict[str, dict] = {}
        self._answers: list[_Answered] = []
        self._answers_by_user: dict[UserId, list[_Answered]] = defaultdict(list)
        self._answered_keys: set[tuple[str, UserId]] = set()
        self.unsolicited: list[FeedbackEvent] = []
        self._state: dict[tuple[str, str], _TopicState] = {}
        self._cache: dict[tuple[str, str], tuple[float, TopicSnapshot]] = {}
        self.stale: set[tuple[str, str]] = set()
        self.knowledge_at: Optional[float] = None
        self.now: Optional[float] = None
        self.add_events(events)

    # -- inputs -------------------------------------------------------------

    def add_events(self, events: Iterable[ClassifiedEvent]) -> int:
        """Merge newly collected events; duplicates by event id are dropped."""
        added = []
        for ce in events:
            if ce.event.event_id in self._seen_ids:
                continue
            self._seen_ids.add(ce.event.event_id)
            added.append(ce)
        if not added:
            return 0
        in_order = not self._events or min(ce.ts for ce in added) >= self._events[-1].ts
        self._events.extend(added)
        if not in_order:
            self._events.sort(key=lambda ce: (ce.ts, ce.event.event_id))
        touched = set()
        for ce in added:
            e = ce.event
            if ce.flags.is_question:
                self._questions[e.event_id] = e
            self._by_user[e.author].append(ce)
            touched.add(e.author)
            if e.addressed_to is not None and e.addressed_to != e.author:
                self._by_user[e.addressed_to].append(ce)
                touched.add(e.addressed_to)
        if not in_order:
            for u in touched:
                self._by_user[u].sort(key=lambda ce: (ce.ts, ce.event.event_id))
        return len(added)

    @property
    def events(self) -> list[ClassifiedEvent]:
        return list(self._events)

    @property
    def asks(self) -> list[AskRecord]:
        return list(self._asks)

    def asks_for(self, question_id: str) -> dict[UserId, AskRecord]:
        entry = self._ask_registry.get(question_id)
        return dict(entry["asks"]) if entry else {}

    def register_question(self, question_id: str, topic: str) -> None:
        self._ask_registry.setdefault(question_id, {"topic": topic, "asks": {}})

    # -- computation --------------------------------------------------------

    def build(self, now: float) -> "FeatureIndex":
        """Recompute every feature of every (crowd, user, topic) at ``now``."""
        acc = accumulate(self._events, self.cfg, now, self._asks, self._answers)
        grouped: dict[tuple[str, str], dict[str, dict[str, MetricCounters]]] = defaultdict(dict)
        for (crowd, handle, topic), per_feature in acc.items():
            grouped[(crowd, topic)][handle] = per_feature

        state = {}
        for ct, users in grouped.items():
            smoothing = {}
            for f in FEATURES:
                # population: users with at least one event inside this feature's window
                smoothing[f] = smoothing_params(c[f] for c in users.values() if not c[f].is_empty())
            raw = {h: self._raw(c, smoothing, now) for h, c in users.items()}
            state[ct] = _TopicState(counters=users, raw=raw, smoothing=smoothing, computed_at=now)

        changed = {ct for ct in set(state) | set(self._state) if self._differs(ct, state)}
        self._state = state
        self.stale |= changed
        for ct in changed:
            self._cache.pop(ct, None)
        self.knowledge_at = now
        self.now = now
        return self

    def _differs(self, ct, new_state) -> bool:
        old, new = self._state.get(ct), new_state.get(ct)
        if old is None or new is None:
            return True
        return old.counters != new.counters or old.raw != new.raw

    def _raw(self, c: Mapping[str, MetricCounters], s: Mapping[str, SmoothingParams], now: float) -> FeatureVector:
        return FeatureVector(
            k1=qualification(c["K1"], s["K1"]),
            k2=interest(c["K2"], s["K2"]),
            a1=responsiveness(c["A1"], s["A1"], self.cfg),
            a2=activity(c["A2"], now, self.cfg),
            computed_at=now,
        )

    def _refresh_availability(self, user: UserId, topic: str, now: float) -> None:
        ct = (user.crowd, topic)
        state = self._state.get(ct)
        if state is None:
            state = _TopicState(counters={}, raw={}, smoothing={f: SmoothingParams() for f in FEATURES}, computed_at=now)
            self._state[ct] = state
        key = (user.crowd, user.handle, topic)
        events = self._by_user.get(user, [])
        current = state.counters.get(user.handle)
        per_feature = dict(current) if current else {f: MetricCounters() for f in FEATURES}
        windows = {self.cfg.windows[f] for f in ("A1", "A2")}
        if current is None:
            windows |= {self.cfg.windows[f] for f in ("K1", "K2")}
        fresh = {
            w: tally(
                events,
                w,
                now,
                self._asks_by_user.get(user, []),
                self._answers_by_user.get(user, []),
                self._questions,
                only=user,
            ).get(key, MetricCounters())
            for w in windows
        }
        for f in FEATURES:
            if self.cfg.windows[f] in fresh and (f in ("A1", "A2") or current is None):
                per_feature[f] = fresh[self.cfg.windows[f]]
        state.counters[user.handle] = per_feature
        old = state.raw.get(user.handle)
        new_raw = self._raw(per_feature, state.smoothing, now)
        if old is not None:
            new_raw = replace(old, a1=new_raw.a1, a2=new_raw.a2, computed_at=now)
        state.raw[user.handle] = new_raw
        self.stale.add(ct)
        self._cache.pop(ct, None)
        self.now = now if self.now is None else max(self.now, now)

    def refresh(
        self,
        trigger: str,
        now: float,
        user: Optional[UserId] = None,
        topic: Optional[str] = None,
    ) -> "FeatureIndex":
        if trigger == "daily_tick":
            return self.build(now)
        if trigger in ("routing_event", "answer_event"):
            if user is None or topic is None:
                raise ValueError(f"{trigger} needs a user and a topic")
            self._refresh_availability(user, topic, now)
            return self
        raise ValueError(f"unknown refresh trigger {trigger!r}")

    def record_ask(self, ask: AskRecord) -> None:
        """A question was routed to ``ask.user``: PQ grows and LQ moves to the ask time."""
        entry = self._ask_registry.setdefault(ask.question_id, {"topic": ask.topic, "asks": {}})
        if ask.user in entry["asks"]:
            return
        entry["asks"][ask.user] = ask
        self._asks.append(ask)
        self._asks_by_user[ask.user].append(ask)
        self.refresh("routing_event", ask.issued_at, ask.user, ask.topic)

    def apply_feedback(self, fb: FeedbackEvent) -> str:
        """Record an answer. Returns "solicited", "unsolicited" or "duplicate"."""
        entry = self._ask_registry.get(fb.question_id)
        if entry is None:
            raise UnknownQuestionError(fb.question_id)
        if (fb.question_id, fb.responder) in self._answered_keys:
            return "duplicate"
        self._answered_keys.add((fb.question_id, fb.responder))
        ask = entry["asks"].get(fb.responder)
        answered = _Answered(
            fb.question_id, fb.responder, entry["topic"], fb.answered_at, ask.issued_at if ask else None
        )
        self._answers.append(answered)
        self._answers_by_user[fb.responder].append(answered)
        if ask is None:
            self.unsolicited.append(fb)
        self.refresh("answer_event", fb.answered_at, fb.responder, entry["topic"])
        return "solicited" if ask is not None else "unsolicited"

    # -- reads --------------------------------------------------------------

    def keys(self) -> list[tuple[str, str]]:
        return sorted(self._state)

    def topics(self) -> list[str]:
        return sorted({t for _c, t in self._state})

    def crowds(self) -> list[str]:
        return sorted({c for c, _t in self._state})

    def counters(self, crowd: str, handle: str, topic: str) -> dict[str, MetricCounters]:
        state = self._state.get((crowd, topic))
        if state is None or handle not in state.counters:
            return {f: MetricCounters() for f in FEATURES}
        return dict(state.counters[handle])

    def raw_features(self, crowd: str, topic: str) -> dict[str, FeatureVector]:
        state = self._state.get((crowd, topic))
        return dict(state.raw) if state else {}

    def snapshot(self, crowd: str, topic: str, now: Optional[float] = None) -> TopicSnapshot:
        """Normalized snapshot; activity is evaluated at ``now`` when given."""
        ct = (crowd, topic)
        state = self._state.get(ct)
        if state is None:
            return TopicSnapshot(crowd, topic, now or 0.0, {}, knowledge_at=self.knowledge_at)
        at = now if now is not None else max(fv.computed_at for fv in state.raw.values())
        cached = self._cache.get(ct)
        if cached is not None and cached[0] == at:
            return cached[1]
        raw = state.raw
        if now is not None:
            raw = {
                h: replace(fv, a2=activity(state.counters[h]["A2"], now, self.cfg)) for h, fv in raw.items()
            }
        snap = TopicSnapshot(
            crowd=crowd,
            topic=topic,
            computed_at=at,
            features=normalize(raw),
            smoothing=dict(state.smoothing),
            counters={h: dict(c) for h, c in state.counters.items()},
            knowledge_at=self.knowledge_at,
        )
        self._cache[ct] = (at, snap)
        return snap

    def mark_fresh(self, crowd: str, topic: str) -> None:
        self.stale.discard((crowd, topic))
