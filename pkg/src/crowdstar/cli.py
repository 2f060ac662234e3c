"""``crowdstar`` command line.

State lives under one directory (``CROWDSTAR_HOME``, or ``[paths] home``
in the config, default ``.crowdstar``): the ingested event log, per
(crowd, topic) snapshots, the plan log and the feedback log. Output is one
JSON object per line unless ``--format table`` is given.
"""

from __future__ import annotations

import argparse
import json
import random
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

from . import config as config_mod
from .events import UserId, normalize_topic
from .index import (
    AskRecord,
    FeatureIndex,
    FeedbackEvent,
    TopicSnapshot,
    UnknownQuestionError,
    load_snapshots,
    write_snapshot,
)
from .ingest import RecordError, event_to_record, ingest
from .router import (
    AskTooLongError,
    NoViableCrowdError,
    QuestionTask,
    RoutingPlan,
    StaleSnapshotError,
    crowd_levels,
    random_plan,
    route,
)
from .simulator import RunLog, evaluate, format_report, generate, population, respond, write_log
from .summary import score, summarize

FIELD_COLUMNS = ("crowd", "responsiveness", "questions_answered", "mean_response_hours", "correct_answers")


class CliError(Exception):
    """Validation failure: reported on one line, exit status 1."""


# -- output -------------------------------------------------------------------


def _cell(v) -> str:
    if isinstance(v, float):
        return f"{v:.4f}"
    if isinstance(v, (list, tuple)):
        return ",".join(_cell(x) for x in v)
    return "-" if v is None else str(v)


def emit(records: Sequence[dict], fmt: str, out=None) -> None:
    out = out or sys.stdout
    if fmt == "lines":
        for r in records:
            out.write(json.dumps(r, sort_keys=True) + "\n")
        return
    if not records:
        return
    cols = []
    for r in records:
        for k in r:
            if k not in cols and not isinstance(r[k], dict):
                cols.append(k)
    rows = [[_cell(r.get(c)) for c in cols] for r in records]
    widths = [max(len(c), *(len(row[i]) for row in rows)) for i, c in enumerate(cols)]
    out.write("  ".join(c.ljust(w) for c, w in zip(cols, widths)).rstrip() + "\n")
    for row in rows:
        out.write("  ".join(v.ljust(w) for v, w in zip(row, widths)).rstrip() + "\n")


def _read_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        return []
    out = []
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if line.strip():
                try:
                    out.append(json.loads(line))
                except json.JSONDecodeError:
                    raise CliError(f"{path}:{n}: malformed record") from None
    return out


def _append_jsonl(path: Path, records: Iterable[dict]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "a", encoding="utf-8") as fh:
        for r in records:
            fh.write(json.dumps(r, sort_keys=True) + "\n")


# -- state helpers --------------------------------------------------------------


class State:
    def __init__(self, cfg: config_mod.Config, args: argparse.Namespace):
        self.cfg = cfg
        self.args = args
        self.paths = cfg.paths

    def path(self, name: str, override: Optional[str] = None) -> Path:
        return Path(override) if override else self.paths.resolve(name)

    def events(self):
        path = self.path("events")
        if not path.exists():
            return [], None
        events, report = ingest(path, self.cfg.policies, self.cfg.topics)
        if report.rejected:
            raise CliError(f"{path} holds {report.rejected} invalid record(s); re-run ingest")
        return events, report

    def plan_records(self, override: Optional[str] = None) -> list[dict]:
        return _read_jsonl(self.path("plan_log", override))

    def feedback_records(self, override: Optional[str] = None) -> list[dict]:
        return _read_jsonl(self.path("feedback_log", override))

    def snapshots(self, topic: Optional[str] = None, crowd: Optional[str] = None) -> list[TopicSnapshot]:
        directory = self.path("snapshots", getattr(self.args, "snapshot_dir", None))
        snaps = load_snapshots(directory) if directory.exists() else []
        return [s for s in snaps if (topic is None or s.topic == topic) and (crowd is None or s.crowd == crowd)]

    def topic_snapshots(self, topic: str) -> dict[str, TopicSnapshot]:
        snaps = {s.crowd: s for s in self.snapshots(topic)}
        if not snaps:
            raise CliError(f"no snapshots for topic {topic!r}; run `index` first")
        unknown = set(snaps) - set(self.cfg.policies)
        if unknown:
            raise CliError(f"snapshot crowd(s) without a policy: {sorted(unknown)}")
        return snaps

    def now(self, default: Optional[float]) -> Optional[float]:
        return self.args.now if self.args.now is not None else default

    def seed(self) -> int:
        return self.args.seed if self.args.seed is not None else self.cfg.sim.seed


def _topic(raw: str) -> str:
    try:
        return normalize_topic(raw)
    except ValueError as e:
        raise CliError(str(e)) from None


def _user(raw: str) -> UserId:
    crowd, sep, handle = raw.partition(":")
    if not sep or not crowd or not handle:
        raise CliError(f"user must be written crowd:handle, got {raw!r}")
    return UserId(crowd, handle)


# -- subcommands ----------------------------------------------------------------


def cmd_simulate(st: State) -> list[dict]:
    sim = replace(st.cfg.sim, seed=st.seed())
    records = generate(sim)
    out = Path(st.args.out) if st.args.out else st.path("events")
    write_log(records, out)
    return [{"out": str(out), "events": len(records), "seed": sim.seed, "users": len(population(sim))}]


def cmd_ingest(st: State) -> list[dict]:
    events, report = ingest(st.args.events, st.cfg.policies, st.cfg.topics)
    out = st.path("events")
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8") as fh:
        for ce in events:
            fh.write(json.dumps(event_to_record(ce.event), sort_keys=True) + "\n")
    row = report.to_dict()
    row["out"] = str(out)
    return [row]


def build_index(st: State) -> tuple[FeatureIndex, Optional[float]]:
    events, _ = st.events()
    index = FeatureIndex(events, cfg=st.cfg.index)
    asks = [AskRecord.from_dict(r) for r in st.plan_records()]
    feedback = [FeedbackEvent.from_dict(r) for r in st.feedback_records()]
    stamps = [ce.ts for ce in events] + [a.issued_at for a in asks] + [f.answered_at for f in feedback]
    now = st.now(max(stamps) if stamps else None)
    # replay in time order so answers always follow their asks
    timeline = sorted(
        [(a.issued_at, 0, i, a) for i, a in enumerate(asks)] + [(f.answered_at, 1, i, f) for i, f in enumerate(feedback)],
        key=lambda t: t[:3],
    )
    for _, kind, _, item in timeline:
        if kind == 0:
            index.register_question(item.question_id, item.topic)
            index.record_ask(item)
        else:
            try:
                index.apply_feedback(item)
            except UnknownQuestionError:
                raise CliError(f"feedback for unknown question {item.question_id!r}") from None
    if now is not None:
        index.build(now)
    return index, now


def cmd_index(st: State) -> list[dict]:
    index, now = build_index(st)
    directory = st.path("snapshots", st.args.snapshot_dir)
    directory.mkdir(parents=True, exist_ok=True)
    for old in directory.glob("*.json"):
        old.unlink()
    if now is None:
        return []
    keys = [(c, t) for c, t in index.keys() if t in st.cfg.topics]

    def work(key):
        snap = index.snapshot(key[0], key[1], now)
        path = write_snapshot(snap, directory)
        return {"crowd": key[0], "topic": key[1], "users": len(snap.features), "computed_at": now, "path": str(path)}

    # snapshot() fills a per-topic cache, so each key is touched by one worker only
    with ThreadPoolExecutor(max_workers=max(1, st.args.jobs)) as pool:
        return list(pool.map(work, keys))


def cmd_skyline(st: State) -> list[dict]:
    topic = _topic(st.args.topic)
    snaps = st.snapshots(topic, st.args.crowd)
    if not snaps:
        raise CliError(f"no snapshots for topic {topic!r}; run `index` first")
    rcfg = replace(st.cfg.router, dims=st.args.dims, max_levels=st.args.levels)
    rows = []
    for snap in sorted(snaps, key=lambda s: s.crowd):
        levels = crowd_levels(snap, rcfg)
        for n, level in enumerate(levels.levels, 1):
            for p in level:
                rows.append({"crowd": snap.crowd, "user": p.user, "level": n, "coords": list(p.coords)})
    rows.sort(key=lambda r: r["level"])
    return rows


def cmd_summarize(st: State) -> list[dict]:
    return summarize_topic(st, _topic(st.args.topic))


def summarize_topic(st: State, topic: str) -> list[dict]:
    snaps = st.topic_snapshots(topic)
    weights = _weights(st)
    levels = {c: crowd_levels(s, st.cfg.router) for c, s in sorted(snaps.items())}
    viable = [len(lv) for lv in levels.values() if len(lv)]
    rows = []
    if not viable:
        return rows
    r = min(st.cfg.router.representatives, min(viable))
    for c, lv in levels.items():
        if not len(lv):
            rows.append({"crowd": c, "topic": topic, "score": 0.0, "skyline_sizes": [], "representatives": 0})
            continue
        s = summarize(lv, snaps[c].features, r, crowd=c, topic=topic)
        rows.append(
            {
                "crowd": c,
                "topic": topic,
                "K1": s.summary["K1"],
                "K2": s.summary["K2"],
                "A1": s.summary["A1"],
                "score": score(s, weights),
                "representatives": r,
                "skyline_sizes": [len(level) for level in lv.levels],
            }
        )
    return rows


def _weights(st: State):
    try:
        return st.cfg.weights(getattr(st.args, "weights", None))
    except config_mod.ConfigError as e:
        raise CliError(str(e)) from None


def cmd_route(st: State) -> list[dict]:
    topic = _topic(st.args.topic)
    snaps = st.topic_snapshots(topic)
    now = st.now(max(s.computed_at for s in snaps.values()))
    budget = st.args.budget if st.args.budget is not None else st.cfg.budget
    prior = st.plan_records()
    qid = st.args.question_id or f"{st.args.strategy}-q{len({r['question_id'] for r in prior}):05d}"
    if any(r["question_id"] == qid for r in prior):
        raise CliError(f"question id {qid!r} is already in the plan log")
    try:
        task = QuestionTask(qid, st.args.question, topic, budget)
        if st.args.strategy == "random":
            rng = random.Random(f"{st.seed()}:{qid}:baseline")
            plan = random_plan(task, snaps, st.cfg.policies, rng, now)
        else:
            rcfg = replace(st.cfg.router, weights=_weights(st))
            plan = route(task, snaps, st.cfg.policies, rcfg, now)
    except (NoViableCrowdError, StaleSnapshotError, AskTooLongError) as e:
        raise CliError(str(e)) from None
    records = [dict(a.to_dict(), strategy=st.args.strategy) for a in plan.ask_records()]
    _append_jsonl(st.path("plan_log"), records)
    head = {k: v for k, v in plan.to_dict().items() if k != "asks"}
    head["strategy"] = st.args.strategy
    return [head] + records


def _plans_from_log(records: Sequence[dict]) -> dict[str, tuple[str, RoutingPlan]]:
    from .router import PlannedAsk

    plans: dict[str, tuple[str, RoutingPlan]] = {}
    for r in records:
        a = AskRecord.from_dict(r)
        if a.question_id not in plans:
            plans[a.question_id] = (r.get("strategy", "crowdstar"), RoutingPlan(a.question_id, a.topic, {}))
        plan = plans[a.question_id][1]
        plan.allocations[a.user.crowd] = plan.allocations.get(a.user.crowd, 0) + 1
        plan.asks.append(PlannedAsk(a.user, a.message, a.issued_at))
    return plans


def cmd_feedback(st: State) -> list[dict]:
    plans = _plans_from_log(st.plan_records())
    qid = st.args.question_id
    if qid not in plans:
        raise CliError(f"unknown question {qid!r}")
    user = _user(st.args.responder)
    if user.crowd not in st.cfg.policies:
        raise CliError(f"unknown crowd {user.crowd!r}")
    correct = None if st.args.correct is None else st.args.correct == "true"
    fb = FeedbackEvent(qid, user, st.args.at, correct)
    existing = {(r["question_id"], r["crowd"], r["responder"]) for r in st.feedback_records()}
    if (qid, user.crowd, user.handle) in existing:
        status = "duplicate"
    else:
        status = "solicited" if any(a.user == user for a in plans[qid][1].asks) else "unsolicited"
        _append_jsonl(st.path("feedback_log"), [fb.to_dict()])
    return [dict(fb.to_dict(), status=status)]


def cmd_respond(st: State) -> list[dict]:
    sim = replace(st.cfg.sim, seed=st.seed())
    users = {u.user: u for u in population(sim)}
    answered = {r["question_id"] for r in st.feedback_records()}
    out = []
    for qid, (_, plan) in _plans_from_log(st.plan_records()).items():
        if qid in answered:
            continue
        out.extend(fb.to_dict() for fb in respond(plan, sim, users))
    _append_jsonl(st.path("feedback_log"), out)
    return out


def _runs(st: State, plan_log: Optional[str], feedback_log: Optional[str]) -> dict[str, RunLog]:
    plans = _plans_from_log(st.plan_records(plan_log))
    runs: dict[str, RunLog] = {}
    owner = {}
    for qid, (strategy, plan) in plans.items():
        run = runs.setdefault(strategy, RunLog(strategy))
        run.plans.append(plan)
        run.asks.extend(plan.ask_records())
        owner[qid] = strategy
    for r in st.feedback_records(feedback_log):
        fb = FeedbackEvent.from_dict(r)
        if fb.question_id not in owner:
            raise CliError(f"feedback for unknown question {fb.question_id!r}")
        runs[owner[fb.question_id]].feedback.append(fb)
    return runs


def evaluation(st: State, plan_log=None, feedback_log=None) -> dict:
    runs = _runs(st, plan_log, feedback_log)
    routing = runs.get("crowdstar", RunLog("crowdstar"))
    baseline = runs.get("random", RunLog("random"))
    return evaluate(routing, baseline, st.cfg.kinds)


def cmd_evaluate(st: State) -> list[dict]:
    report = evaluation(st, st.args.plan_log, st.args.feedback_log)
    if st.args.format == "table":
        sys.stdout.write(format_report(report) + "\n")
        return []
    rows = [dict(r, record="row") for r in report["rows"]]
    return rows + [{"record": "lift", **report["lift"]}]


def cmd_report(st: State) -> list[dict]:
    out = []
    snaps = st.snapshots()

    def topic_rows(snap: TopicSnapshot) -> dict:
        levels = crowd_levels(snap, st.cfg.router)
        return {"record": "skyline", "crowd": snap.crowd, "topic": snap.topic, "users": len(snap.features), "skyline_sizes": [len(x) for x in levels.levels]}

    with ThreadPoolExecutor(max_workers=max(1, st.args.jobs)) as pool:
        out.extend(pool.map(topic_rows, snaps))
    for topic in sorted({s.topic for s in snaps}):
        for r in summarize_topic(st, topic):
            out.append(dict(r, record="score"))
    plans = _plans_from_log(st.plan_records())
    for qid, (strategy, plan) in plans.items():
        out.append({"record": "plan", "question_id": qid, "strategy": strategy, "topic": plan.topic, "allocations": dict(sorted(plan.allocations.items()))})
    if plans:
        report = evaluation(st)
        out.extend(dict(r, record="feedback") for r in report["rows"])
        # live-network field measurements have a schema here but no simulated stand-in values
        for crowd in sorted(st.cfg.kinds):
            out.append({"record": "field_comparison", **{c: (crowd if c == "crowd" else None) for c in FIELD_COLUMNS}})
    return out


COMMANDS = {
    "ingest": cmd_ingest,
    "index": cmd_index,
    "skyline": cmd_skyline,
    "summarize": cmd_summarize,
    "route": cmd_route,
    "feedback": cmd_feedback,
    "respond": cmd_respond,
    "simulate": cmd_simulate,
    "evaluate": cmd_evaluate,
    "report": cmd_report,
}


def _global_flags(suppress: bool) -> argparse.ArgumentParser:
    # subcommands accept the global flags too; their copies must not reset values given earlier
    p = argparse.ArgumentParser(add_help=False, argument_default=argparse.SUPPRESS if suppress else None)
    p.add_argument("--config", help="TOML config file")
    p.add_argument("--format", choices=("lines", "table"), **({} if suppress else {"default": "lines"}))
    p.add_argument("--seed", type=int, help="overrides [simulator] seed")
    p.add_argument("--jobs", type=int, help="parallel (crowd, topic) workers", **({} if suppress else {"default": 1}))
    p.add_argument("--now", type=float, help="evaluation time, unix seconds")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="crowdstar", parents=[_global_flags(False)], description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    local = _global_flags(True)

    def add(name, help):
        return sub.add_parser(name, help=help, parents=[local])

    p = add("simulate", "generate a synthetic event log")
    p.add_argument("--out", default=None)
    p = add("ingest", "validate and store event logs")
    p.add_argument("--events", action="append", required=True)
    p = add("index", "build feature snapshots")
    p.add_argument("--snapshot-dir", default=None)
    p = add("skyline", "print skyline levels")
    p.add_argument("--topic", required=True)
    p.add_argument("--crowd", default=None)
    p.add_argument("--dims", type=int, choices=(2, 4), default=4)
    p.add_argument("--levels", type=int, default=3)
    p.add_argument("--snapshot-dir", default=None)
    p = add("summarize", "per-crowd summaries and scores")
    p.add_argument("--topic", required=True)
    p.add_argument("--weights", default=None, help="weight preset name")
    p.add_argument("--snapshot-dir", default=None)
    p = add("route", "plan who to ask and append the plan to the plan log")
    p.add_argument("--question", required=True)
    p.add_argument("--topic", required=True)
    p.add_argument("--budget", type=int, default=None)
    p.add_argument("--weights", default=None, help="weight preset name")
    p.add_argument("--strategy", choices=("crowdstar", "random"), default="crowdstar")
    p.add_argument("--question-id", default=None)
    p.add_argument("--snapshot-dir", default=None)
    p = add("feedback", "record an answer")
    p.add_argument("--question-id", required=True)
    p.add_argument("--responder", required=True, help="crowd:handle")
    p.add_argument("--at", type=float, required=True)
    p.add_argument("--correct", choices=("true", "false"), default=None)
    add("respond", "simulate answers to logged plans")
    p = add("evaluate", "compare routing against the random baseline")
    p.add_argument("--plan-log", default=None)
    p.add_argument("--feedback-log", default=None)
    p = add("report", "scores, skyline sizes, plans and feedback")
    p.add_argument("--snapshot-dir", default=None)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.jobs < 1:
        parser.error("--jobs must be >= 1")
    try:
        cfg = config_mod.load(Path(args.config) if args.config else None)
        st = State(cfg, args)
        rows = COMMANDS[args.command](st)
        emit(rows, args.format)
    except (CliError, config_mod.ConfigError, RecordError, ValueError, OSError) as e:
        msg = str(e).splitlines()[0] if str(e) else type(e).__name__
        print(f"crowdstar {args.command}: error: {msg}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
