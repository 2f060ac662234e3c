"""TOML configuration: crowds, topics, index, pruning, weights, routing, simulator, paths.

Every section and key is checked on load. Unknown keys and bad values
raise ``ConfigError`` before anything runs.
"""

from __future__ import annotations

import math
import os
import sys
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Mapping, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .events import (
    GREET_TEMPLATE,
    INTRODUCE_TEMPLATE,
    PLAIN_TEMPLATE,
    CrowdPolicy,
    normalize_topic,
    quora_like_policy,
    twitter_like_policy,
)
from .features import DAY, FEATURES, IndexConfig
from .router import RouterConfig
from .simulator import ARCHETYPES, DEFAULT_ARCHETYPES, DEFAULT_MIX, CrowdSpec, SimConfig
from .skyline import NO_PRUNING, PruneThresholds
from .summary import PRESETS, ScoreWeights

HOME_ENV = "CROWDSTAR_HOME"
DEFAULT_HOME = ".crowdstar"
DEFAULT_TOPICS = ("hiking", "travel", "music", "poker")
CROWD_KINDS = ("twitter-like", "quora-like")
TEMPLATES = {"greet": GREET_TEMPLATE, "introduce": INTRODUCE_TEMPLATE, "plain": PLAIN_TEMPLATE}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class Paths:
    home: Path = Path(DEFAULT_HOME)
    events: str = "events.jsonl"
    snapshots: str = "snapshots"
    plan_log: str = "plans.jsonl"
    feedback_log: str = "feedback.jsonl"

    def resolve(self, name: str) -> Path:
        p = Path(getattr(self, name))
        return p if p.is_absolute() else self.home / p


@dataclass(frozen=True)
class Config:
    policies: Mapping[str, CrowdPolicy]
    kinds: Mapping[str, str]
    topics: tuple[str, ...] = DEFAULT_TOPICS
    index: IndexConfig = field(default_factory=IndexConfig)
    router: RouterConfig = field(default_factory=RouterConfig)
    presets: Mapping[str, ScoreWeights] = field(default_factory=lambda: dict(PRESETS))
    budget: int = 4
    sim: SimConfig = field(default_factory=SimConfig)
    paths: Paths = field(default_factory=Paths)

    def weights(self, preset: Optional[str]) -> ScoreWeights:
        if preset is None:
            return self.router.weights
        if preset not in self.presets:
            raise ConfigError(f"unknown weight preset {preset!r}; known: {sorted(self.presets)}")
        return self.presets[preset]


def _check_keys(section: Mapping, allowed, where: str) -> None:
    if not isinstance(section, Mapping):
        raise ConfigError(f"[{where}] must be a table")
    unknown = sorted(set(section) - set(allowed))
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(unknown)}")


def _number(v: Any, where: str, positive: bool = False, allow_inf: bool = False) -> float:
    if allow_inf and isinstance(v, str) and v.lower() in ("inf", "infinity"):
        return math.inf
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        raise ConfigError(f"{where} must be a number")
    v = float(v)
    if math.isnan(v) or (math.isinf(v) and not allow_inf):
        raise ConfigError(f"{where} must be finite")
    if positive and not v > 0:
        raise ConfigError(f"{where} must be positive")
    return v


def _int(v: Any, where: str, minimum: int = 0) -> int:
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ConfigError(f"{where} must be an integer >= {minimum}")
    return v


def _crowds(raw: Mapping) -> tuple[dict[str, CrowdPolicy], dict[str, str]]:
    policies, kinds = {}, {}
    for crowd, sec in raw.items():
        _check_keys(sec, ("kind", "upvote_threshold", "template", "max_length"), f"crowds.{crowd}")
        kind = sec.get("kind", "twitter-like")
        if kind not in CROWD_KINDS:
            raise ConfigError(f"crowds.{crowd}.kind must be one of {CROWD_KINDS}")
        if kind == "quora-like":
            policy = quora_like_policy(crowd, _int(sec.get("upvote_threshold", 2), f"crowds.{crowd}.upvote_threshold", 1))
        else:
            if "upvote_threshold" in sec:
                raise ConfigError(f"crowds.{crowd}.upvote_threshold applies to quora-like crowds only")
            policy = twitter_like_policy(crowd)
        if "template" in sec:
            if sec["template"] not in TEMPLATES:
                raise ConfigError(f"crowds.{crowd}.template must be one of {sorted(TEMPLATES)}")
            policy = replace(policy, message_template=TEMPLATES[sec["template"]])
        if "max_length" in sec:
            try:
                tpl = replace(policy.message_template, max_length=_int(sec["max_length"], f"crowds.{crowd}.max_length", 1))
            except ValueError as e:
                raise ConfigError(f"crowds.{crowd}.max_length: {e}") from None
            policy = replace(policy, message_template=tpl)
        policies[crowd] = policy
        kinds[crowd] = kind
    if not policies:
        raise ConfigError("at least one crowd is required")
    return policies, kinds


def _index(sec: Mapping) -> IndexConfig:
    _check_keys(sec, ("windows_days", "rt_floor_hours", "activity_cap_days"), "index")
    windows = dict(IndexConfig().windows)
    wd = sec.get("windows_days", {})
    _check_keys(wd, FEATURES, "index.windows_days")
    for f, v in wd.items():
        windows[f] = _number(v, f"index.windows_days.{f}", positive=True, allow_inf=True) * DAY
    cap = sec.get("activity_cap_days")
    try:
        cfg = IndexConfig(
            windows=windows,
            rt_floor_hours=_number(sec.get("rt_floor_hours", 0.1), "index.rt_floor_hours", positive=True),
            a2_cap=None if cap is None else _number(cap, "index.activity_cap_days", positive=True) * DAY,
        )
        cfg.a2_cap_seconds
    except ValueError as e:
        raise ConfigError(f"[index]: {e}") from None
    return cfg


def _prune(sec: Mapping) -> PruneThresholds:
    _check_keys(sec, ("enabled", "percentile", "minimums"), "prune")
    if not sec.get("enabled", True):
        return NO_PRUNING
    if "minimums" in sec and "percentile" in sec:
        raise ConfigError("[prune] takes either minimums or percentile, not both")
    if "minimums" in sec:
        mins = sec["minimums"]
        if not isinstance(mins, list):
            raise ConfigError("prune.minimums must be a list")
        return PruneThresholds(minimums=tuple(_number(m, "prune.minimums") for m in mins), percentile=None)
    pct = _number(sec.get("percentile", 10.0), "prune.percentile")
    if not 0 <= pct <= 100:
        raise ConfigError("prune.percentile must be in [0, 100]")
    return PruneThresholds(percentile=pct)


def _weights(sec: Mapping) -> tuple[ScoreWeights, dict[str, ScoreWeights]]:
    _check_keys(sec, ("preset", "w_k1", "w_k2", "w_a1", "presets"), "weights")
    presets = dict(PRESETS)
    for name, p in sec.get("presets", {}).items():
        _check_keys(p, ("w_k1", "w_k2", "w_a1"), f"weights.presets.{name}")
        presets[name] = _make_weights(p, f"weights.presets.{name}")
    if "preset" in sec:
        if any(k in sec for k in ("w_k1", "w_k2", "w_a1")):
            raise ConfigError("[weights] takes either preset or explicit weights, not both")
        if sec["preset"] not in presets:
            raise ConfigError(f"unknown weight preset {sec['preset']!r}")
        return presets[sec["preset"]], presets
    return _make_weights(sec, "weights"), presets


def _make_weights(sec: Mapping, where: str) -> ScoreWeights:
    vals = {k: _number(sec.get(k, 1.0), f"{where}.{k}") for k in ("w_k1", "w_k2", "w_a1")}
    try:
        return ScoreWeights(**vals)
    except ValueError as e:
        raise ConfigError(f"[{where}]: {e}") from None


def _routing(sec: Mapping, weights: ScoreWeights, thresholds: PruneThresholds) -> tuple[RouterConfig, int]:
    _check_keys(sec, ("representatives", "gate_hours", "dims", "levels", "staleness_days", "budget"), "routing")
    dims = _int(sec.get("dims", 4), "routing.dims", 2)
    if dims not in (2, 4):
        raise ConfigError("routing.dims must be 2 or 4")
    cfg = RouterConfig(
        weights=weights,
        representatives=_int(sec.get("representatives", 50), "routing.representatives", 1),
        gate_hours=_number(sec.get("gate_hours", 24.0), "routing.gate_hours"),
        dims=dims,
        max_levels=_int(sec.get("levels", 3), "routing.levels", 1),
        thresholds=thresholds,
        staleness_bound=_number(sec.get("staleness_days", 2.0), "routing.staleness_days", positive=True, allow_inf=True) * DAY,
    )
    if cfg.gate_hours < 0:
        raise ConfigError("routing.gate_hours must be non-negative")
    return cfg, _int(sec.get("budget", 4), "routing.budget", 1)


ARCHETYPE_FIELDS = (
    "post_rate",
    "on_topic_fraction",
    "answer_prob",
    "answer_correct_prob",
    "latency_mean_hours",
    "latency_spread",
    "conversational_fraction",
    "repost_fraction",
    "topics_per_user",
    "questions_per_day",
)


def _simulator(sec: Mapping, kinds: Mapping[str, str], topics: tuple[str, ...]) -> SimConfig:
    _check_keys(
        sec,
        ("seed", "horizon_days", "clock_step_hours", "start", "unsolicited_rate", "off_topic_answer_factor", "mix", "archetypes"),
        "simulator",
    )
    archetypes = dict(DEFAULT_ARCHETYPES)
    for name, over in sec.get("archetypes", {}).items():
        if name not in ARCHETYPES:
            raise ConfigError(f"unknown archetype {name!r} in [simulator.archetypes]")
        _check_keys(over, ARCHETYPE_FIELDS, f"simulator.archetypes.{name}")
        try:
            archetypes[name] = replace(archetypes[name], **over)
        except (TypeError, ValueError) as e:
            raise ConfigError(f"simulator.archetypes.{name}: {e}") from None
    mixes = sec.get("mix", {})
    _check_keys(mixes, kinds, "simulator.mix")
    crowds = []
    for crowd, kind in kinds.items():
        mix = mixes.get(crowd, DEFAULT_MIX)
        _check_keys(mix, ARCHETYPES, f"simulator.mix.{crowd}")
        mix = {n: _int(c, f"simulator.mix.{crowd}.{n}") for n, c in mix.items()}
        crowds.append(CrowdSpec(crowd, kind, mix))
    try:
        return SimConfig(
            seed=_int(sec.get("seed", 1), "simulator.seed"),
            crowds=tuple(crowds),
            topics=topics,
            horizon_days=_number(sec.get("horizon_days", 30.0), "simulator.horizon_days", positive=True),
            clock_step_hours=_number(sec.get("clock_step_hours", 1.0), "simulator.clock_step_hours", positive=True),
            start=_number(sec.get("start", 1_600_000_000.0), "simulator.start"),
            archetypes=archetypes,
            unsolicited_rate=_number(sec.get("unsolicited_rate", 0.2), "simulator.unsolicited_rate"),
            off_topic_answer_factor=_number(sec.get("off_topic_answer_factor", 0.5), "simulator.off_topic_answer_factor"),
        )
    except ValueError as e:
        raise ConfigError(f"[simulator]: {e}") from None


def _paths(sec: Mapping, env: Mapping[str, str]) -> Paths:
    _check_keys(sec, ("home", "events", "snapshots", "plan_log", "feedback_log"), "paths")
    for k, v in sec.items():
        if not isinstance(v, str) or not v:
            raise ConfigError(f"paths.{k} must be a non-empty string")
    home = env.get(HOME_ENV) or sec.get("home", DEFAULT_HOME)
    rest = {k: v for k, v in sec.items() if k != "home"}
    return Paths(home=Path(home), **rest)


TOP_LEVEL = ("topics", "crowds", "index", "prune", "weights", "routing", "simulator", "paths")


def from_dict(raw: Mapping, env: Optional[Mapping[str, str]] = None) -> Config:
    env = os.environ if env is None else env
    _check_keys(raw, TOP_LEVEL, "top level")
    topics_raw = raw.get("topics", list(DEFAULT_TOPICS))
    if not isinstance(topics_raw, list) or not topics_raw:
        raise ConfigError("topics must be a non-empty list")
    try:
        topics = tuple(dict.fromkeys(normalize_topic(t) for t in topics_raw))
    except (TypeError, ValueError, AttributeError) as e:
        raise ConfigError(f"topics: {e}") from None
    crowds_raw = raw.get("crowds", {"quora-like": {"kind": "quora-like"}, "twitter-like": {"kind": "twitter-like"}})
    _check_keys(crowds_raw, crowds_raw, "crowds")
    policies, kinds = _crowds(crowds_raw)
    thresholds = _prune(raw.get("prune", {}))
    weights, presets = _weights(raw.get("weights", {}))
    router, budget = _routing(raw.get("routing", {}), weights, thresholds)
    return Config(
        policies=policies,
        kinds=kinds,
        topics=topics,
        index=_index(raw.get("index", {})),
        router=router,
        presets=presets,
        budget=budget,
        sim=_simulator(raw.get("simulator", {}), kinds, topics),
        paths=_paths(raw.get("paths", {}), env),
    )


def load(path: Optional[Path] = None, env: Optional[Mapping[str, str]] = None) -> Config:
    if path is None:
        return from_dict({}, env)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e.strerror}") from None
    except tomllib.TOMLDecodeError as e:
        raise ConfigError(f"invalid TOML in {path}: {e}") from None
    return from_dict(raw, env)

