"""Utility features: qualification, interest, responsiveness, activity.

Counter names follow the usual metric abbreviations, lower-cased:
``a`` answers, ``ca`` correct answers (weighted), ``p`` on-topic posts,
``p_all`` posts on any topic, ``op`` original posts (weighted),
``cp`` conversational posts, ``pq`` questions presented, ``aq`` questions
answered, ``rt_sum``/``rt_n`` response latency in hours, ``lq``/``la``
timestamps of the last question presented and last answer given.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Iterable, Mapping, Optional

DAY = 86400.0
HOUR = 3600.0
FOREVER = math.inf

FEATURES = ("K1", "K2", "A1", "A2")


@dataclass
class MetricCounters:
    a: int = 0
    ca: float = 0
    p: int = 0
    p_all: int = 0
    op: float = 0
    cp: int = 0
    pq: int = 0
    aq: int = 0
    rt_sum: float = 0.0
    rt_n: int = 0
    lq: Optional[float] = None
    la: Optional[float] = None

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: Mapping) -> "MetricCounters":
        return cls(**d)

    def is_empty(self) -> bool:
        return self == MetricCounters()


@dataclass(frozen=True)
class SmoothingParams:
    mu_ca: float = 0.0
    mu_op: float = 0.0
    mu_int: float = 0.0
    mu_aq: float = 0.0
    mu_cp: float = 0.0
    n: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


NO_SMOOTHING = SmoothingParams()


@dataclass(frozen=True)
class FeatureVector:
    k1: float = 0.0
    k2: float = 0.0
    a1: float = 0.0
    a2: float = 0.0
    k1n: float = 0.0
    k2n: float = 0.0
    a1n: float = 0.0
    a2n: float = 0.0
    computed_at: float = 0.0

    def raw(self) -> tuple[float, float, float, float]:
        return (self.k1, self.k2, self.a1, self.a2)

    def normalized(self) -> tuple[float, float, float, float]:
        return (self.k1n, self.k2n, self.a1n, self.a2n)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class IndexConfig:
    windows: Mapping[str, float] = field(
        default_factory=lambda: {"K1": FOREVER, "K2": 30 * DAY, "A1": 30 * DAY, "A2": 7 * DAY}
    )
    refresh: Mapping[str, str] = field(
        default_factory=lambda: {"K1": "daily", "K2": "daily", "A1": "on_event", "A2": "on_event"}
    )
    rt_floor_hours: float = 0.1
    a2_cap: Optional[float] = None  # seconds; None means the A2 window

    def __post_init__(self):
        missing = set(FEATURES) - set(self.windows)
        if missing:
            raise ValueError(f"missing windows for {sorted(missing)}")
        if any(not w > 0 for w in self.windows.values()):
            raise ValueError("windows must be positive")
        if not self.rt_floor_hours > 0:
            raise ValueError("rt_floor_hours must be positive")

    @property
    def a2_cap_seconds(self) -> float:
        cap = self.a2_cap if self.a2_cap is not None else self.windows["A2"]
        if math.isinf(cap):
            raise ValueError("activity cap must be finite")
        return cap


def _ratio(num: float, den: float) -> float:
    return num / den if den else 0.0


def qualification_raw(m: MetricCounters) -> float:
    return _ratio(m.ca, m.a) + _ratio(m.op, m.p)


def qualification(m: MetricCounters, s: SmoothingParams) -> float:
    return _ratio(m.ca + s.mu_ca, m.a + s.n) + _ratio(m.op + s.mu_op, m.p + s.n)


def interest(m: MetricCounters, s: SmoothingParams) -> float:
    return _ratio(m.p + s.mu_int, m.p_all + s.n)


def responsiveness(m: MetricCounters, s: SmoothingParams, cfg: IndexConfig) -> float:
    rt_term = 0.0
    if m.rt_n >= 1:
        rt_mean = m.rt_sum / m.rt_n
        rt_term = 1.0 / max(rt_mean, cfg.rt_floor_hours)
    return _ratio(m.aq + s.mu_aq, m.pq + s.n) + _ratio(m.cp + s.mu_cp, m.p + s.n) + rt_term


def activity(m: MetricCounters, now: float, cfg: IndexConfig) -> float:
    """Hours since the last question presented or answer given, capped."""
    cap = cfg.a2_cap_seconds
    stamps = [t for t in (m.lq, m.la) if t is not None]
    if not stamps:
        return cap / HOUR
    elapsed = min(max(now - max(stamps), 0.0), cap)
    return elapsed / HOUR


def smoothing_params(population: Iterable[MetricCounters]) -> SmoothingParams:
    """Per-ratio population means; zero-denominator ratios are left out of each mean."""
    sums = {"ca": [0.0, 0], "op": [0.0, 0], "int": [0.0, 0], "aq": [0.0, 0], "cp": [0.0, 0]}

    def add(key, num, den):
        if den:
            sums[key][0] += num / den
            sums[key][1] += 1

    n = 0
    for m in population:
        n += 1
        add("ca", m.ca, m.a)
        add("op", m.op, m.p)
        add("int", m.p, m.p_all)
        add("aq", m.aq, m.pq)
        add("cp", m.cp, m.p)

    def mean(key):
        total, count = sums[key]
        return total / count if count else 0.0

    return SmoothingParams(
        mu_ca=mean("ca"), mu_op=mean("op"), mu_int=mean("int"), mu_aq=mean("aq"), mu_cp=mean("cp"), n=n
    )


def minmax(values: list[float]) -> list[float]:
    if not values:
        return []
    lo, hi = min(values), max(values)
    if hi == lo:
        return [0.5] * len(values)
    span = hi - lo
    return [min(max((v - lo) / span, 0.0), 1.0) for v in values]


def normalize(features: Mapping[str, FeatureVector], axes: Iterable[str] = FEATURES) -> dict[str, FeatureVector]:
    """Min-max scale each axis over the population; a flat axis maps to 0.5."""
    if not features:
        return {}
    keys = list(features)
    scaled = {
        axis.lower() + "n": minmax([getattr(features[k], axis.lower()) for k in keys]) for axis in axes
    }
    out = {}
    for i, k in enumerate(keys):
        out[k] = replace(features[k], **{name: vals[i] for name, vals in scaled.items()})
    return out
