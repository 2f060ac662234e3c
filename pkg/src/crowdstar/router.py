"""Two-stage question routing: across crowds by score, within a crowd along the skyline."""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field
from fractions import Fraction
from numbers import Rational
from typing import Mapping, Optional, Sequence

from .events import CrowdPolicy, UserId
from .features import DAY, FeatureVector
from .index import AskRecord, FeatureIndex, TopicSnapshot
from .skyline import AXES_2D, AXES_4D, PruneThresholds, SkylineLevels, points_from_features, skyline_levels
from .summary import CrowdSummary, ScoreWeights, score, summarize

EQUAL_SPLIT_THRESHOLD = Fraction(1, 4)
SCORE_RESOLUTION = 10**9


class NoViableCrowdError(ValueError):
    pass


class StaleSnapshotError(RuntimeError):
    pass


class AskTooLongError(ValueError):
    def __init__(self, overflow: int, max_length: int):
        super().__init__(f"ask message exceeds {max_length} characters by {overflow}")
        self.overflow = overflow
        self.max_length = max_length


@dataclass(frozen=True)
class QuestionTask:
    question_id: str
    text: str
    topic: str
    budget: int

    def __post_init__(self):
        if self.budget < 1:
            raise ValueError("budget must be >= 1")
        if not self.text.strip():
            raise ValueError("question text is empty")


@dataclass(frozen=True)
class PlannedAsk:
    user: UserId
    message: str
    issued_at: float


@dataclass
class RoutingPlan:
    question_id: str
    topic: str
    allocations: dict[str, int]
    asks: list[PlannedAsk] = field(default_factory=list)
    mode: str = "equal_split"
    scores: dict[str, float] = field(default_factory=dict)
    summaries: dict[str, CrowdSummary] = field(default_factory=dict)
    skyline_sizes: dict[str, list[int]] = field(default_factory=dict)

    @property
    def shortfall(self) -> dict[str, int]:
        asked: dict[str, int] = {}
        for a in self.asks:
            asked[a.user.crowd] = asked.get(a.user.crowd, 0) + 1
        return {c: n - asked.get(c, 0) for c, n in self.allocations.items()}

    def ask_records(self) -> list[AskRecord]:
        return [AskRecord(self.question_id, a.user, self.topic, a.issued_at, a.message) for a in self.asks]

    def to_dict(self) -> dict:
        return {
            "question_id": self.question_id,
            "topic": self.topic,
            "mode": self.mode,
            "allocations": dict(sorted(self.allocations.items())),
            "scores": dict(sorted(self.scores.items())),
            "shortfall": dict(sorted(self.shortfall.items())),
            "skyline_sizes": dict(sorted(self.skyline_sizes.items())),
            "asks": [
                {"crowd": a.user.crowd, "user": a.user.handle, "message": a.message, "issued_at": a.issued_at}
                for a in self.asks
            ],
        }


@dataclass(frozen=True)
class RouterConfig:
    weights: ScoreWeights = field(default_factory=ScoreWeights)
    representatives: int = 50
    gate_hours: float = 24.0
    dims: int = 4
    max_levels: int = 3
    thresholds: PruneThresholds = field(default_factory=PruneThresholds)
    staleness_bound: float = 2 * DAY


def _exact(x) -> Fraction:
    if isinstance(x, bool):
        raise TypeError("score must be a number")
    if isinstance(x, Rational):
        return Fraction(x)
    x = float(x)
    if not math.isfinite(x):
        raise ValueError("score must be finite")
    # snap to the nearest simple fraction so 7 * 0.05 and 0.35 compare equal
    return Fraction(x).limit_denominator(SCORE_RESOLUTION)


def split_mode(scores: Mapping[str, float]) -> str:
    exact = {c: _exact(s) for c, s in scores.items()}
    if not exact:
        raise NoViableCrowdError("no viable crowd")
    if any(s < 0 for s in exact.values()):
        raise ValueError("scores must be non-negative")
    hi, lo = max(exact.values()), min(exact.values())
    if hi == 0:
        raise NoViableCrowdError("no viable crowd")
    return "equal_split" if (hi - lo) / hi < EQUAL_SPLIT_THRESHOLD else "proportional"


def split_budget(scores: Mapping[str, float], budget: int) -> dict[str, int]:
    """Allocate ``budget`` asks across crowds.

    Scores within 25% of each other (relative to the largest) share the
    budget equally; otherwise it is shared in proportion to the scores.
    Leftover units go to the higher score, then the smaller crowd id.
    """
    if budget < 0:
        raise ValueError("budget must be non-negative")
    mode = split_mode(scores)
    exact = {c: _exact(s) for c, s in scores.items()}
    preference = sorted(exact, key=lambda c: (-exact[c], c))
    if mode == "equal_split":
        base, extra = divmod(budget, len(exact))
        return {c: base + (1 if i < extra else 0) for i, c in enumerate(preference)}

    total = sum(exact.values())
    quotas = {c: budget * s / total for c, s in exact.items()}
    alloc = {c: math.floor(q) for c, q in quotas.items()}
    left = budget - sum(alloc.values())
    by_remainder = sorted(exact, key=lambda c: (-(quotas[c] - alloc[c]), -exact[c], c))
    for c in by_remainder[:left]:
        alloc[c] += 1
    return alloc


def middle_out(n: int) -> list[int]:
    """Index order starting at n // 2 and alternating outwards, lower side first."""
    if n <= 0:
        return []
    mid = n // 2
    order = [mid]
    for step in range(1, n):
        for i in (mid - step, mid + step):
            if 0 <= i < n:
                order.append(i)
    return order


def order_candidates(
    levels: SkylineLevels,
    allocation: int,
    features: Optional[Mapping[str, FeatureVector]] = None,
    gate_hours: Optional[float] = None,
) -> list[str]:
    """Pick up to ``allocation`` users middle-out along the availability axis, level by level.

    Users whose raw activity (hours since last Q&A on the topic) is below
    ``gate_hours`` are skipped.
    """
    if allocation < 0:
        raise ValueError("allocation must be non-negative")
    dims = tuple(levels.dims)
    axis = dims.index("A1n") if "A1n" in dims else dims.index("A")
    chosen: list[str] = []
    for level in levels.levels:
        if len(chosen) >= allocation:
            break
        ordered = sorted(level, key=lambda p: (p.coords[axis], p.user))
        for i in middle_out(len(ordered)):
            user = ordered[i].user
            if gate_hours is not None and features is not None and features[user].a2 < gate_hours:
                continue
            chosen.append(user)
            if len(chosen) >= allocation:
                break
    return chosen


def hashtag(topic: str) -> str:
    return "".join(topic.split())


def compose_ask(task: QuestionTask, user: UserId, policy: CrowdPolicy) -> str:
    tpl = policy.message_template
    fields = {"handle": user.handle, "topic": task.topic, "tag": hashtag(task.topic)}
    parts = [tpl.prefix.format(**fields), task.text.strip(), tpl.suffix.format(**fields)]
    message = " ".join(p for p in parts if p)
    if tpl.max_length is not None and len(message) > tpl.max_length:
        raise AskTooLongError(len(message) - tpl.max_length, tpl.max_length)
    return message


def crowd_levels(snap: TopicSnapshot, cfg: RouterConfig) -> SkylineLevels:
    points = points_from_features(snap.features, cfg.dims)
    return skyline_levels(
        points, cfg.max_levels, cfg.thresholds, AXES_4D if cfg.dims == 4 else AXES_2D
    )


def route(
    task: QuestionTask,
    snapshots: Mapping[str, TopicSnapshot],
    policies: Mapping[str, CrowdPolicy],
    cfg: RouterConfig,
    now: float,
) -> RoutingPlan:
    """Plan who gets asked. Read-only: nothing is recorded until ``issue_plan``."""
    for crowd, snap in snapshots.items():
        if snap.knowledge_at is not None and now - snap.knowledge_at > cfg.staleness_bound:
            raise StaleSnapshotError(f"snapshot for {crowd}/{task.topic} is older than the staleness bound")

    levels = {c: crowd_levels(s, cfg) for c, s in sorted(snapshots.items())}
    sizes = {c: len(lv) for c, lv in levels.items()}
    viable = [c for c, n in sizes.items() if n > 0]
    if not viable:
        raise NoViableCrowdError(f"no candidates for topic {task.topic!r}")
    r = min(cfg.representatives, min(sizes[c] for c in viable))

    summaries, scores = {}, {}
    for c, lv in levels.items():
        if sizes[c]:
            summaries[c] = summarize(lv, snapshots[c].features, r, crowd=c, topic=task.topic)
            scores[c] = score(summaries[c], cfg.weights)
        else:
            scores[c] = 0.0

    mode = split_mode(scores)
    allocations = split_budget(scores, task.budget)
    plan = RoutingPlan(
        question_id=task.question_id,
        topic=task.topic,
        allocations=allocations,
        mode=mode,
        scores=scores,
        summaries=summaries,
        skyline_sizes={c: [len(level) for level in lv.levels] for c, lv in levels.items()},
    )
    for c in sorted(allocations):
        if not allocations[c]:
            continue
        for handle in order_candidates(levels[c], allocations[c], snapshots[c].features, cfg.gate_hours):
            user = UserId(c, handle)
            plan.asks.append(PlannedAsk(user, compose_ask(task, user, policies[c]), now))
    return plan


def random_plan(
    task: QuestionTask,
    snapshots: Mapping[str, TopicSnapshot],
    policies: Mapping[str, CrowdPolicy],
    rng: random.Random,
    now: float,
) -> RoutingPlan:
    """Baseline: ``budget`` users drawn uniformly from everyone active on the topic."""
    pool = [UserId(c, h) for c, snap in sorted(snapshots.items()) for h in sorted(snap.features)]
    picked = rng.sample(pool, min(task.budget, len(pool)))
    allocations = {c: 0 for c in snapshots}
    for u in picked:
        allocations[u.crowd] += 1
    plan = RoutingPlan(task.question_id, task.topic, allocations, mode="random")
    for u in sorted(picked):
        plan.asks.append(PlannedAsk(u, compose_ask(task, u, policies[u.crowd]), now))
    return plan


def issue_plan(plan: RoutingPlan, index: FeatureIndex) -> list[AskRecord]:
    """Record one routing event per ask; the asked users' availability is refreshed at once."""
    index.register_question(plan.question_id, plan.topic)
    records = plan.ask_records()
    for ask in records:
        index.record_ask(ask)
    return records


def snapshots_for(index: FeatureIndex, topic: str, now: float, crowds: Optional[Sequence[str]] = None) -> dict[str, TopicSnapshot]:
    crowds = crowds if crowds is not None else index.crowds()
    return {c: index.snapshot(c, topic, now) for c in crowds}
