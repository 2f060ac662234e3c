"""Crowd summaries over skyline representatives and the weighted crowd score."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

from .features import FeatureVector
from .skyline import SkylineLevels

SUMMARY_FEATURES = ("K1", "K2", "A1")


@dataclass(frozen=True)
class ScoreWeights:
    w_k1: float = 1 / 3
    w_k2: float = 1 / 3
    w_a1: float = 1 / 3

    def __post_init__(self):
        total = self.w_k1 + self.w_k2 + self.w_a1
        if min(self.w_k1, self.w_k2, self.w_a1) < 0 or total <= 0:
            raise ValueError("weights must be non-negative with a positive sum")
        # normalized on construction so every score uses weights summing to one
        object.__setattr__(self, "w_k1", self.w_k1 / total)
        object.__setattr__(self, "w_k2", self.w_k2 / total)
        object.__setattr__(self, "w_a1", self.w_a1 / total)


PRESETS = {
    "equal": ScoreWeights(1, 1, 1),
    "survey": ScoreWeights(0.1, 0.45, 0.45),
}


def weights_preset(name: str) -> ScoreWeights:
    try:
        return PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown weight preset {name!r}; known: {sorted(PRESETS)}") from None


@dataclass
class CrowdSummary:
    crowd: str
    topic: str
    summary: dict[str, float] = field(default_factory=dict)
    representatives: list[str] = field(default_factory=list)
    representative_count: int = 0
    under_filled: bool = False

    def to_dict(self) -> dict:
        return {
            "crowd": self.crowd,
            "topic": self.topic,
            "summary": dict(self.summary),
            "representatives": list(self.representatives),
            "representative_count": self.representative_count,
            "under_filled": self.under_filled,
        }


def summarize(
    levels: SkylineLevels,
    features: Mapping[str, FeatureVector],
    r: int,
    crowd: str = "",
    topic: str = "",
) -> CrowdSummary:
    """Mean normalized K1, K2, A1 over the first ``r`` skyline users, level by level."""
    if r < 1:
        raise ValueError("representative count must be >= 1")
    reps = levels.users()[:r]
    out = CrowdSummary(crowd=crowd, topic=topic, representatives=reps, representative_count=r)
    out.under_filled = len(reps) < r
    if not reps:
        out.summary = {f: 0.0 for f in SUMMARY_FEATURES}
        return out
    out.summary = {
        "K1": sum(features[u].k1n for u in reps) / len(reps),
        "K2": sum(features[u].k2n for u in reps) / len(reps),
        "A1": sum(features[u].a1n for u in reps) / len(reps),
    }
    return out


def score(s: CrowdSummary, w: ScoreWeights) -> float:
    # activity is deliberately absent
    return w.w_k1 * s.summary["K1"] + w.w_k2 * s.summary["K2"] + w.w_a1 * s.summary["A1"]
