"""Multi-level skylines over normalized feature vectors (larger is better).

Skyline points are found by nearest-neighbor search towards the ideal
corner: the remaining point closest to the corner cannot be dominated, so
it is emitted and every point it dominates is discarded before the next
search. A level is therefore emitted in increasing distance to the corner
and a consumer can start using points before the level is complete.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Mapping, Optional, Sequence

import numpy as np

from .features import FeatureVector

AXES_4D = ("K1n", "K2n", "A1n", "A2n")
AXES_2D = ("K", "A")


@dataclass(frozen=True)
class CandidatePoint:
    user: str
    coords: tuple[float, ...]
    level: Optional[int] = None


@dataclass
class SkylineLevels:
    levels: list[list[CandidatePoint]] = field(default_factory=list)
    pruned: set[str] = field(default_factory=set)
    dims: tuple[str, ...] = AXES_4D

    def users(self) -> list[str]:
        return [p.user for level in self.levels for p in level]

    def __len__(self) -> int:
        return sum(len(level) for level in self.levels)


@dataclass(frozen=True)
class PruneThresholds:
    """Per-axis minimums, given directly or as a population percentile."""

    minimums: Optional[tuple[float, ...]] = None
    percentile: Optional[float] = 10.0

    def resolve(self, points: Sequence[CandidatePoint]) -> tuple[float, ...]:
        if not points:
            return ()
        d = len(points[0].coords)
        if self.minimums is not None:
            if len(self.minimums) != d:
                raise ValueError("threshold count does not match dimensionality")
            return tuple(float(m) for m in self.minimums)
        if self.percentile is None:
            return (0.0,) * d
        coords = np.array([p.coords for p in points], dtype=float)
        return tuple(float(v) for v in np.percentile(coords, self.percentile, axis=0))


NO_PRUNING = PruneThresholds(minimums=None, percentile=None)


def dominates(a: CandidatePoint, b: CandidatePoint) -> bool:
    if len(a.coords) != len(b.coords):
        raise ValueError("dimension mismatch")
    strict = False
    for x, y in zip(a.coords, b.coords):
        if x < y:
            return False
        if x > y:
            strict = True
    return strict


def low_value_prune(
    points: Sequence[CandidatePoint], thresholds: PruneThresholds
) -> tuple[list[CandidatePoint], list[CandidatePoint]]:
    """Drop points strictly below the minimum on any axis."""
    mins = thresholds.resolve(points)
    kept, pruned = [], []
    for p in points:
        (pruned if any(x < m for x, m in zip(p.coords, mins)) else kept).append(p)
    return kept, pruned


def points_from_features(features: Mapping[str, FeatureVector], dims: int = 4) -> list[CandidatePoint]:
    out = []
    for user in sorted(features):
        fv = features[user]
        if dims == 4:
            coords = fv.normalized()
        elif dims == 2:
            coords = ((fv.k1n + fv.k2n) / 2, (fv.a1n + fv.a2n) / 2)
        else:
            raise ValueError("dims must be 2 or 4")
        out.append(CandidatePoint(user, tuple(float(c) for c in coords)))
    return out


class _Prepared:
    def __init__(self, points: Sequence[CandidatePoint]):
        users = [p.user for p in points]
        if len(set(users)) != len(users):
            raise ValueError("points must be unique per user")
        self.points = list(points)
        n = len(points)
        if n:
            dims = {len(p.coords) for p in points}
            if len(dims) != 1:
                raise ValueError("dimension mismatch")
            self.coords = np.array([p.coords for p in points], dtype=float)
            if not np.all(np.isfinite(self.coords)):
                raise ValueError("coordinates must be finite")
            ideal = np.maximum(1.0, self.coords.max(axis=0))
            dist = np.sqrt(((ideal - self.coords) ** 2).sum(axis=1))
            by_name = np.argsort(np.array(users, dtype=object), kind="stable")
            name_rank = np.empty(n, dtype=np.int64)
            name_rank[by_name] = np.arange(n)
            order = np.lexsort((name_rank, dist))
        else:
            self.coords = np.zeros((0, 0))
            order = np.arange(0)
        self.by_rank = order
        self.rank = np.empty(n, dtype=np.int64)
        self.rank[order] = np.arange(n)


def _first_skyline(prep: _Prepared, idx: np.ndarray, trace: Optional[list[int]] = None) -> Iterator[int]:
    """Yield indices (into prep.points) of the skyline of ``idx``, nearest first."""
    coords = prep.coords
    # candidates kept in nearest-first order; the head is never dominated
    live = idx[np.argsort(prep.rank[idx], kind="stable")]
    if trace is not None:
        trace.append(int(live.size))
    while live.size:
        p = int(live[0])
        yield p
        rest = live[1:]
        sub = coords[rest]
        pc = coords[p]
        dominated = np.all(sub <= pc, axis=1) & np.any(sub < pc, axis=1)
        live = rest[~dominated]
        if trace is not None:
            trace.append(int(live.size))


def skyline_stream(points: Sequence[CandidatePoint], max_levels: int = 3) -> Iterator[tuple[CandidatePoint, int]]:
    """Emit (point, level) pairs, level by level, nearest-to-ideal first within a level."""
    if max_levels < 1:
        raise ValueError("max_levels must be positive")
    prep = _Prepared(points)
    remaining = np.arange(len(prep.points))
    for level in range(1, max_levels + 1):
        if not remaining.size:
            return
        layer = []
        for i in _first_skyline(prep, remaining):
            layer.append(i)
            yield replace(prep.points[i], level=level), level
        remaining = np.setdiff1d(remaining, np.array(layer, dtype=remaining.dtype))


def candidate_count_trace(points: Sequence[CandidatePoint]) -> list[int]:
    """Distinct candidates left in the search regions after each iteration."""
    prep = _Prepared(points)
    trace: list[int] = []
    for _ in _first_skyline(prep, np.arange(len(prep.points)), trace):
        pass
    return trace


def skyline_levels(
    points: Sequence[CandidatePoint],
    max_levels: int = 3,
    thresholds: Optional[PruneThresholds] = None,
    dims: Iterable[str] = AXES_4D,
) -> SkylineLevels:
    thresholds = thresholds if thresholds is not None else PruneThresholds()
    kept, pruned = low_value_prune(points, thresholds)
    levels: list[list[CandidatePoint]] = []
    for point, level in skyline_stream(kept, max_levels):
        if level > len(levels):
            levels.append([])
        levels[level - 1].append(point)
    return SkylineLevels(levels=levels, pruned={p.user for p in pruned}, dims=tuple(dims))
