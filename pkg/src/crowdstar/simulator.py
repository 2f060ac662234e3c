"""Seeded synthetic crowds for exercising the router without live networks.

Every random draw comes from a ``random.Random`` seeded with a string built
from the run seed and the identity of the thing being drawn (user,
question, crowd). Runs are therefore replayable, and two runs over the
same seed see the same answer behavior from the same user on the same
question, which keeps routing-vs-baseline comparisons paired.
"""

from __future__ import annotations

import heapq
import json
import math
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Mapping, Optional, Sequence

from .events import CrowdPolicy, UserId, quora_like_policy, twitter_like_policy
from .features import DAY, HOUR, IndexConfig
from .index import AskRecord, FeatureIndex, FeedbackEvent
from .ingest import ingest
from .router import QuestionTask, RouterConfig, RoutingPlan, issue_plan, random_plan, route, snapshots_for

ARCHETYPES = ("focused_expert", "broad_expert", "spammer", "low_frequency", "broadcast_account", "casual")

CHATTER = ("coffee", "weather today", "monday again", "lunch break", "long commute", "weekend plans", "new phone")


@dataclass(frozen=True)
class ArchetypeSpec:
    name: str
    post_rate: float  # posts per day
    on_topic_fraction: float
    answer_prob: float
    answer_correct_prob: float
    latency_mean_hours: float
    latency_spread: float  # sigma of the underlying normal
    conversational_fraction: float
    repost_fraction: float
    topics_per_user: int = 1
    questions_per_day: float = 0.1  # directed questions received from other users

    def __post_init__(self):
        if self.name not in ARCHETYPES:
            raise ValueError(f"unknown archetype {self.name!r}")
        for name in ("on_topic_fraction", "answer_prob", "answer_correct_prob", "conversational_fraction", "repost_fraction"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1]")
        if self.post_rate < 0 or self.questions_per_day < 0:
            raise ValueError("rates must be non-negative")
        if self.latency_mean_hours <= 0 or self.latency_spread < 0:
            raise ValueError("latency mean must be positive and spread non-negative")
        if self.topics_per_user < 1:
            raise ValueError("topics_per_user must be >= 1")


DEFAULT_ARCHETYPES: dict[str, ArchetypeSpec] = {
    "focused_expert": ArchetypeSpec("focused_expert", 2.0, 0.85, 0.6, 0.9, 6.0, 0.8, 0.35, 0.05, 1, 0.3),
    "broad_expert": ArchetypeSpec("broad_expert", 3.0, 0.8, 0.6, 0.85, 8.0, 0.8, 0.3, 0.05, 3, 0.3),
    "spammer": ArchetypeSpec("spammer", 12.0, 0.95, 0.0, 0.0, 24.0, 1.0, 0.0, 0.0, 1, 0.1),
    "low_frequency": ArchetypeSpec("low_frequency", 0.05, 1.0, 0.2, 0.5, 30.0, 1.0, 0.1, 0.0, 1, 0.02),
    "broadcast_account": ArchetypeSpec("broadcast_account", 5.0, 0.9, 0.05, 0.8, 48.0, 1.0, 0.02, 0.3, 1, 0.2),
    "casual": ArchetypeSpec("casual", 1.5, 0.15, 0.2, 0.5, 20.0, 1.0, 0.4, 0.2, 2, 0.05),
}

DEFAULT_MIX = {
    "focused_expert": 16,
    "broad_expert": 8,
    "spammer": 4,
    "low_frequency": 16,
    "broadcast_account": 6,
    "casual": 70,
}


@dataclass(frozen=True)
class CrowdSpec:
    crowd: str
    kind: str = "twitter-like"  # twitter-like | quora-like
    mix: Mapping[str, int] = field(default_factory=lambda: dict(DEFAULT_MIX))

    def __post_init__(self):
        if self.kind not in ("twitter-like", "quora-like"):
            raise ValueError(f"unknown crowd kind {self.kind!r}")
        for name, count in self.mix.items():
            if name not in ARCHETYPES:
                raise ValueError(f"unknown archetype {name!r}")
            if count < 0:
                raise ValueError("archetype counts must be non-negative")


def default_crowds() -> tuple[CrowdSpec, ...]:
    return (CrowdSpec("quora-like", "quora-like"), CrowdSpec("twitter-like", "twitter-like"))


@dataclass(frozen=True)
class SimConfig:
    seed: int = 1
    crowds: tuple[CrowdSpec, ...] = field(default_factory=default_crowds)
    topics: tuple[str, ...] = ("hiking", "travel", "music", "poker")
    horizon_days: float = 30.0
    clock_step_hours: float = 1.0
    start: float = 1_600_000_000.0
    archetypes: Mapping[str, ArchetypeSpec] = field(default_factory=lambda: dict(DEFAULT_ARCHETYPES))
    unsolicited_rate: float = 0.2
    off_topic_answer_factor: float = 0.5

    def __post_init__(self):
        if self.horizon_days <= 0 or self.clock_step_hours <= 0:
            raise ValueError("horizon and clock step must be positive")
        if not 0.0 <= self.unsolicited_rate <= 1.0 or not 0.0 <= self.off_topic_answer_factor <= 1.0:
            raise ValueError("probabilities must be in [0, 1]")
        if len({c.crowd for c in self.crowds}) != len(self.crowds):
            raise ValueError("duplicate crowd id")
        if not self.topics:
            raise ValueError("at least one topic is required")

    @property
    def end(self) -> float:
        return self.start + self.horizon_days * DAY

    def policies(self) -> dict[str, CrowdPolicy]:
        return {
            c.crowd: quora_like_policy(c.crowd) if c.kind == "quora-like" else twitter_like_policy(c.crowd)
            for c in self.crowds
        }


@dataclass(frozen=True)
class SimUser:
    user: UserId
    archetype: str
    topics: tuple[str, ...]
    kind: str


def _rng(*parts) -> random.Random:
    return random.Random(":".join(str(p) for p in parts))


def population(cfg: SimConfig) -> list[SimUser]:
    users = []
    for spec in cfg.crowds:
        for name in ARCHETYPES:
            arch = cfg.archetypes[name]
            for i in range(spec.mix.get(name, 0)):
                handle = f"{name}-{i:03d}"
                rng = _rng(cfg.seed, spec.crowd, handle, "topics")
                k = min(arch.topics_per_user, len(cfg.topics))
                topics = tuple(sorted(rng.sample(list(cfg.topics), k)))
                users.append(SimUser(UserId(spec.crowd, handle), name, topics, spec.kind))
    return users


def _latency_hours(rng: random.Random, arch: ArchetypeSpec) -> float:
    sigma = arch.latency_spread
    mu = math.log(arch.latency_mean_hours) - sigma * sigma / 2
    return rng.lognormvariate(mu, sigma)


def _poisson_times(rng: random.Random, rate_per_day: float, start: float, end: float) -> list[float]:
    times = []
    if rate_per_day <= 0:
        return times
    t = start
    while True:
        t += rng.expovariate(rate_per_day / DAY)
        if t > end:
            return times
        times.append(t)


def generate(cfg: SimConfig) -> list[dict]:
    """Synthetic event log records, sorted by (timestamp, event_id)."""
    users = population(cfg)
    by_crowd: dict[str, list[SimUser]] = {}
    for u in users:
        by_crowd.setdefault(u.user.crowd, []).append(u)

    records: list[dict] = []
    for u in users:
        arch = cfg.archetypes[u.archetype]
        crowd_users = by_crowd[u.user.crowd]
        others = [o for o in crowd_users if o.user != u.user]
        quora = u.kind == "quora-like"
        rng = _rng(cfg.seed, u.user.crowd, u.user.handle, "posts")
        for n, ts in enumerate(_poisson_times(rng, arch.post_rate, cfg.start, cfg.end)):
            on_topic = rng.random() < arch.on_topic_fraction
            topic = rng.choice(u.topics) if on_topic else None
            conversational = bool(others) and rng.random() < arch.conversational_fraction
            repost = not conversational and rng.random() < arch.repost_fraction
            text = f"thoughts on {topic} #{n}" if topic else f"{rng.choice(CHATTER)} #{n}"
            rec = {
                "event_id": f"{u.user.crowd}/{u.user.handle}/p{n}",
                "crowd": u.user.crowd,
                "author": u.user.handle,
                "topics": [topic] if topic else [],
                "timestamp": round(ts, 3),
                "kind": "blog" if quora else "post",
                "conversational": conversational,
                "repost": repost,
                "addressed_to": rng.choice(others).user.handle if conversational else None,
                "in_reply_to": None,
                "upvotes": rng.randint(0, 3) if quora else 0,
                "correct_label": None,
                "text": text,
            }
            records.append(rec)

        qrng = _rng(cfg.seed, u.user.crowd, u.user.handle, "questions")
        # spammers never start a conversation with anyone
        askers = [o for o in others if o.archetype != "spammer"]
        if not askers:
            continue
        for n, ts in enumerate(_poisson_times(qrng, arch.questions_per_day, cfg.start, cfg.end)):
            asker = qrng.choice(askers)
            topic = qrng.choice(u.topics)
            qid = f"{u.user.crowd}/{u.user.handle}/q{n}"
            records.append(
                {
                    "event_id": qid,
                    "crowd": u.user.crowd,
                    "author": asker.user.handle,
                    "topics": [topic],
                    "timestamp": round(ts, 3),
                    "kind": "question",
                    "conversational": not quora,
                    "repost": False,
                    "addressed_to": u.user.handle,
                    "in_reply_to": None,
                    "upvotes": 0,
                    "correct_label": None,
                    "text": f"@{u.user.handle} any advice about {topic}?",
                }
            )
            if qrng.random() >= arch.answer_prob:
                continue
            answered_at = ts + _latency_hours(qrng, arch) * HOUR
            if answered_at > cfg.end:
                continue
            correct = qrng.random() < arch.answer_correct_prob
            upvotes = (2 + qrng.randint(0, 4)) if correct else qrng.randint(0, 1)
            records.append(
                {
                    "event_id": f"{qid}/a",
                    "crowd": u.user.crowd,
                    "author": u.user.handle,
                    "topics": [topic],
                    "timestamp": round(answered_at, 3),
                    "kind": "answer",
                    "conversational": not quora,
                    "repost": False,
                    "addressed_to": None if quora else asker.user.handle,
                    "in_reply_to": qid,
                    "upvotes": upvotes if quora else 0,
                    "correct_label": None if quora else correct,
                    "text": f"about {topic}: here is what I know",
                }
            )

    records.sort(key=lambda r: (r["timestamp"], r["event_id"]))
    return records


def log_lines(records: Iterable[dict]) -> list[str]:
    return [json.dumps(r, sort_keys=True) for r in records]


def write_log(records: Iterable[dict], path: Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("".join(line + "\n" for line in log_lines(records)), encoding="utf-8")
    return path


def respond(
    plan: RoutingPlan,
    cfg: SimConfig,
    users: Optional[Mapping[UserId, SimUser]] = None,
) -> list[FeedbackEvent]:
    """Simulated answers to an issued plan, sorted by answer time."""
    if users is None:
        users = {u.user: u for u in population(cfg)}
    out = []
    asked = set()
    for ask in plan.asks:
        asked.add(ask.user)
        su = users.get(ask.user)
        if su is None:
            continue
        arch = cfg.archetypes[su.archetype]
        rng = _rng(cfg.seed, plan.question_id, ask.user.crowd, ask.user.handle)
        p = arch.answer_prob
        if plan.topic not in su.topics:
            p *= cfg.off_topic_answer_factor
        if rng.random() >= p:
            continue
        latency = _latency_hours(rng, arch)
        correct = rng.random() < arch.answer_correct_prob
        out.append(FeedbackEvent(plan.question_id, ask.user, round(ask.issued_at + latency * HOUR, 3), correct))

    issued = {a.user.crowd: a.issued_at for a in plan.asks}
    kinds = {c.crowd: c.kind for c in cfg.crowds}
    for crowd in sorted(issued):
        if kinds.get(crowd) != "quora-like":
            continue
        rng = _rng(cfg.seed, plan.question_id, crowd, "unsolicited")
        if rng.random() >= cfg.unsolicited_rate:
            continue
        pool = sorted(
            (
                u
                for u in users.values()
                if u.user.crowd == crowd
                and plan.topic in u.topics
                and u.user not in asked
                and cfg.archetypes[u.archetype].answer_prob > 0
            ),
            key=lambda u: u.user,
        )
        if not pool:
            continue
        su = rng.choice(pool)
        arch = cfg.archetypes[su.archetype]
        latency = _latency_hours(rng, arch)
        correct = rng.random() < arch.answer_correct_prob
        out.append(FeedbackEvent(plan.question_id, su.user, round(issued[crowd] + latency * HOUR, 3), correct))
    out.sort(key=lambda fb: (fb.answered_at, fb.responder))
    return out


@dataclass
class RunLog:
    strategy: str
    asks: list[AskRecord] = field(default_factory=list)
    feedback: list[FeedbackEvent] = field(default_factory=list)
    plans: list[RoutingPlan] = field(default_factory=list)
    index: Optional[FeatureIndex] = None  # state after the last answer arrived


def question_text(topic: str, n: int) -> str:
    return f"What is your best tip about {topic}? (q{n})"


def run_experiment(
    cfg: SimConfig,
    n_questions: int,
    budget: int = 4,
    strategy: str = "crowdstar",
    router_cfg: Optional[RouterConfig] = None,
    index_cfg: Optional[IndexConfig] = None,
    warmup_days: Optional[float] = None,
    question_interval_hours: Optional[float] = None,
) -> RunLog:
    """Closed loop: background activity, daily ticks, routed questions and their answers.

    Questions start after ``warmup_days`` and arrive every
    ``question_interval_hours`` (default: the config's clock step). The
    index only ever sees events, asks and answers that happened by the
    current simulated time.
    """
    if strategy not in ("crowdstar", "random"):
        raise ValueError(f"unknown strategy {strategy!r}")
    router_cfg = router_cfg or RouterConfig()
    interval = (question_interval_hours or cfg.clock_step_hours) * HOUR
    warmup = (warmup_days if warmup_days is not None else min(30.0, cfg.horizon_days / 2)) * DAY
    policies = cfg.policies()
    users = {u.user: u for u in population(cfg)}

    events, report = ingest([log_lines(generate(cfg))], policies, cfg.topics)
    if report.rejected:
        raise AssertionError(f"simulator produced invalid events: {report.to_dict()}")

    t0 = cfg.start + warmup
    index = FeatureIndex(cfg=index_cfg)
    cursor = 0

    def collect(until: float) -> None:
        nonlocal cursor
        start = cursor
        while cursor < len(events) and events[cursor].ts <= until:
            cursor += 1
        index.add_events(events[start:cursor])

    collect(t0)
    index.build(t0)
    next_tick = t0 + DAY
    pending: list = []
    seq = 0
    qrng = _rng(cfg.seed, "question-stream")
    brng = _rng(cfg.seed, "baseline")
    run = RunLog(strategy)

    def advance(until: float) -> None:
        nonlocal next_tick
        while True:
            due_fb = pending[0][0] if pending else math.inf
            if min(due_fb, next_tick) > until:
                return
            if due_fb <= next_tick:
                _, _, fb = heapq.heappop(pending)
                index.apply_feedback(fb)
                run.feedback.append(fb)
            else:
                collect(next_tick)
                index.refresh("daily_tick", next_tick)
                next_tick += DAY

    for q in range(n_questions):
        now = t0 + q * interval
        advance(now)
        topic = qrng.choice(list(cfg.topics))
        task = QuestionTask(f"q{q:05d}", question_text(topic, q), topic, budget)
        snaps = snapshots_for(index, topic, now, sorted(policies))
        if strategy == "crowdstar":
            plan = route(task, snaps, policies, router_cfg, now)
        else:
            plan = random_plan(task, snaps, policies, brng, now)
        run.asks.extend(issue_plan(plan, index))
        run.plans.append(plan)
        for fb in respond(plan, cfg, users):
            heapq.heappush(pending, (fb.answered_at, seq, fb))
            seq += 1
    advance(math.inf if not pending else max(p[0] for p in pending))
    run.index = index
    return run


def _arm_rows(run: RunLog, kinds: Mapping[str, str]) -> list[dict]:
    asked = {(a.question_id, a.user): a for a in run.asks}
    crowds = sorted({a.user.crowd for a in run.asks})
    rows = []
    for crowd in crowds + (["all"] if len(crowds) > 1 else []):
        in_crowd = (lambda c: True) if crowd == "all" else (lambda c, crowd=crowd: c == crowd)
        asks = [a for a in run.asks if in_crowd(a.user.crowd)]
        fbs = [fb for fb in run.feedback if in_crowd(fb.responder.crowd)]
        solicited = [fb for fb in fbs if (fb.question_id, fb.responder) in asked]
        answered_keys = {(fb.question_id, fb.responder) for fb in solicited}
        latencies = [
            (fb.answered_at - asked[(fb.question_id, fb.responder)].issued_at) / HOUR for fb in solicited
        ]
        judged = [fb for fb in fbs if fb.correct is not None]
        questions = {a.question_id for a in asks}
        answered_q = {fb.question_id for fb in fbs} & questions
        rows.append(
            {
                "arm": run.strategy,
                "crowd": crowd,
                "kind": kinds.get(crowd, "mixed"),
                "asks": len(asks),
                "answered_asks": len(answered_keys),
                "answer_rate": len(answered_keys) / len(asks) if asks else 0.0,
                "questions": len(questions),
                "questions_answered_rate": len(answered_q) / len(questions) if questions else 0.0,
                "mean_latency_hours": sum(latencies) / len(latencies) if latencies else None,
                "correct_rate": sum(1 for fb in judged if fb.correct) / len(judged) if judged else None,
                "unsolicited_answers": len(fbs) - len(solicited),
            }
        )
    return rows


METRICS = ("answer_rate", "mean_latency_hours", "correct_rate")


def evaluate(routing: RunLog, baseline: RunLog, kinds: Optional[Mapping[str, str]] = None) -> dict:
    """Routing vs baseline comparison, one row per (arm, crowd)."""
    kinds = kinds or {}
    rows = _arm_rows(routing, kinds) + _arm_rows(baseline, kinds)
    lift = {}
    totals = {r["arm"]: r for r in rows if r["crowd"] == "all"}
    if not totals:
        totals = {r["arm"]: r for r in rows}
    ra, ba = totals.get(routing.strategy), totals.get(baseline.strategy)
    if ra and ba:
        for m in METRICS:
            if ra[m] is not None and ba[m]:
                lift[m] = ra[m] / ba[m]
    return {"rows": rows, "lift": lift}


def format_report(report: dict) -> str:
    cols = ("arm", "crowd", "asks", "answer_rate", "questions_answered_rate", "mean_latency_hours", "correct_rate", "unsolicited_answers")
    lines = ["  ".join(f"{c:>14}" for c in cols)]
    for r in report["rows"]:
        cells = []
        for c in cols:
            v = r.get(c)
            cells.append(f"{v:>14.3f}" if isinstance(v, float) else f"{str(v if v is not None else '-'):>14}")
        lines.append("  ".join(cells))
    for m, v in sorted(report.get("lift", {}).items()):
        lines.append(f"lift {m}: {v:.3f}")
    return "\n".join(lines)


def with_uniform_answer_prob(cfg: SimConfig, p: float) -> SimConfig:
    """Null-effect variant: every archetype answers with probability ``p`` on any topic."""
    archetypes = {n: replace(a, answer_prob=p) for n, a in cfg.archetypes.items()}
    return replace(cfg, archetypes=archetypes, off_topic_answer_factor=1.0)
