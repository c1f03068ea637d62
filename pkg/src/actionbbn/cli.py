"""Command line entry point.

Exit status: 0 on success, 1 on usage errors, 2 on data or parse errors.
"""

from __future__ import annotations

import argparse
import logging
import sys
import time
from pathlib import Path
from typing import Callable, Optional, Sequence, TextIO

from . import ausm
from .event_log import (
    ActionEvent,
    LogParseError,
    TransitionDbSink,
    build_transitions,
    is_action_token,
    parse_log_line,
    read_log_file,
    read_transition_db,
)
from .evaluation import EvaluationError, cross_validate, render_report, replay_evaluate, report_to_tsv
from .inference import InferenceError
from .network import (
    DEFAULT_FIELDS,
    FIELD_VARIABLES,
    NetworkError,
    PriorConfig,
    chain_dag,
    export_network,
    fit_network,
    import_network,
    records_to_instances,
    tally_counts,
)
from .scoring import MAX_EXHAUSTIVE_VARIABLES, log_marginal_likelihood, select_best_structure

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2

DEFAULT_TOP_K = ausm.DEFAULT_TOP_K
CV_TOP_K = 1

log = logging.getLogger("actionbbn")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _positive_float(text: str) -> float:
    value = float(text)
    if not value > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return value


def _int_at_least(minimum: int) -> Callable[[str], int]:
    def parse(text: str) -> int:
        value = int(text)
        if value < minimum:
            raise argparse.ArgumentTypeError(f"must be at least {minimum}")
        return value

    return parse


def _fields(text: str) -> tuple[str, ...]:
    fields = tuple(f.strip() for f in text.split(",") if f.strip())
    unknown = [f for f in fields if f not in FIELD_VARIABLES]
    if unknown or not fields:
        raise argparse.ArgumentTypeError(f"choose from {', '.join(FIELD_VARIABLES)}")
    return fields


def _load_topics(path: Optional[str]) -> ausm.HelpTopicMap:
    return ausm.load_topic_map(path) if path else ausm.HelpTopicMap()


def _format_ranking(result: ausm.PredictionResult) -> list[str]:
    marker = " [fallback]" if result.fallback else ""
    return [
        f"{rank}. {r.action} {r.probability:.6f} {r.topic_id} {r.title}{marker}"
        for rank, r in enumerate(result.ranking, start=1)
    ]


def cmd_ingest(args, out: TextIO) -> int:
    sink = TransitionDbSink(args.db)
    total_events = total_records = 0
    for path in args.logs:
        session = read_log_file(path)
        records = build_transitions(session)
        if not session.events:
            log.warning("%s contains no events", path)
        # writes the header even when there are no records
        sink.extend(records)
        total_events += len(session.events)
        total_records += len(records)
        print(f"{path}: {len(session.events)} events, {len(records)} records", file=out)
    print(f"total: {total_events} events, {total_records} records -> {args.db}", file=out)
    return EXIT_OK


def cmd_learn(args, out: TextIO) -> int:
    records = read_transition_db(args.db)
    if not records:
        raise EvaluationError(f"database {args.db} holds no records")
    dataset = records_to_instances(records, args.fields)
    prior = PriorConfig(args.ess)
    if args.mode == "fixed-chain":
        dag = chain_dag(dataset.variables)
        score = log_marginal_likelihood(dag, tally_counts(dataset, dag), prior.ess)
    else:
        if args.mode == "exhaustive" and len(dataset.variables) > MAX_EXHAUSTIVE_VARIABLES:
            raise UsageError(
                f"exhaustive search handles at most {MAX_EXHAUSTIVE_VARIABLES} variables, "
                f"{len(dataset.variables)} selected; use --mode greedy"
            )
        best = select_best_structure(dataset, ess=prior.ess, mode=args.mode, max_parents=args.max_parents)
        dag, score = best.dag, best.log_score
    network = fit_network(dataset, dag, prior)
    export_network(network, args.out)
    names = dag.names
    edges = ", ".join(f"{names[p]}->{names[c]}" for p, c in dag.edges()) or "(none)"
    print(f"records: {len(records)}", file=out)
    print(f"variables: {', '.join(f'{v.name}[{v.cardinality}]' for v in dag.variables)}", file=out)
    print(f"structure ({args.mode}): {edges}", file=out)
    print(f"log score: {score:.6f}", file=out)
    print(f"network written to {args.out}", file=out)
    return EXIT_OK


def cmd_predict(args, out: TextIO) -> int:
    network = import_network(args.net)
    topics = _load_topics(args.topics)
    state = ausm.InteractionState()
    state.current = ActionEvent(0, args.action) if is_action_token(args.action) else None
    result = ausm.query_help(state, network, topics, args.top_k or DEFAULT_TOP_K)
    for line in _format_ranking(result):
        print(line, file=out)
    return EXIT_OK


def cmd_evaluate(args, out: TextIO) -> int:
    if args.protocol == "cv":
        if not args.db:
            raise UsageError("cv needs --db")
        records = read_transition_db(args.db)
        report = cross_validate(records, args.folds, args.ess, args.top_k or CV_TOP_K, args.seed)
    else:
        if not args.log or args.db:
            raise UsageError("replay needs a raw log (--log) and a network (--net), not a database")
        if not args.net:
            raise UsageError("replay needs --net")
        report = replay_evaluate(import_network(args.net), read_log_file(args.log), _load_topics(args.topics), args.top_k or DEFAULT_TOP_K)
    out.write(render_report(report))
    if args.tsv:
        Path(args.tsv).write_text(report_to_tsv(report), encoding="utf-8")
    return EXIT_OK


def _parse_assist_line(line: str, started: float, clock: Callable[[], float]) -> Optional[ActionEvent]:
    if "\t" in line:
        try:
            event = parse_log_line(line)
        except LogParseError:
            event = None
        if event is not None:
            return event
    parts = line.split(None, 1)
    if not parts or not is_action_token(parts[0]):
        return None
    prop = parts[1].strip() if len(parts) > 1 else None
    return ActionEvent(int(clock() - started), parts[0], prop or None)


def cmd_assist(args, out: TextIO, clock: Callable[[], float] = time.monotonic) -> int:
    module = ausm.AdaptiveSupportModule(
        import_network(args.net),
        _load_topics(args.topics),
        TransitionDbSink(args.db) if args.db else [],
        args.top_k or DEFAULT_TOP_K,
    )
    started = clock()
    for raw in args.stdin:
        line = raw.strip()
        if not line:
            continue
        if line == "quit":
            break
        if line == "?":
            for text in _format_ranking(module.query_help()):
                print(text, file=out)
            continue
        if line.startswith("reload "):
            try:
                module.reload_network(line.split(None, 1)[1])
                print("network reloaded", file=out)
            except (OSError, NetworkError) as exc:
                print(f"warning: reload failed, keeping current network: {exc}", file=out)
            continue
        event = _parse_assist_line(line, started, clock)
        if event is None:
            print(f"warning: ignoring malformed action line {line!r}", file=out)
            continue
        module.record_action(event)
    print(f"{module.state.appended} transitions recorded", file=out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--ess", type=_positive_float, default=1.0, help="equivalent sample size of the Dirichlet prior")
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--folds", type=_int_at_least(2), default=10)
    common.add_argument("--top-k", type=_int_at_least(1), help="ranking depth (default 3; cross-validation defaults to 1)")
    common.add_argument("--fields", type=_fields, default=DEFAULT_FIELDS, help="comma separated record fields")
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="actionbbn", description="Next-action Bayesian networks from interaction logs.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("ingest", parents=[common], help="parse logs and append transitions to a database")
    p.add_argument("logs", nargs="+")
    p.add_argument("--db", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("learn", parents=[common], help="learn a network from a transition database")
    p.add_argument("--db", required=True)
    p.add_argument("--mode", choices=("fixed-chain", "exhaustive", "greedy"), default="fixed-chain")
    p.add_argument("--max-parents", type=_int_at_least(0), default=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_learn)

    p = sub.add_parser("predict", parents=[common], help="rank next actions after a given action")
    p.add_argument("action")
    p.add_argument("--net", required=True)
    p.add_argument("--topics")
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], help="cross-validation or log replay")
    p.add_argument("--protocol", choices=("cv", "replay"), required=True)
    p.add_argument("--db")
    p.add_argument("--log")
    p.add_argument("--net")
    p.add_argument("--topics")
    p.add_argument("--tsv", help="also write a tab-separated copy of the report")
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("assist", parents=[common], help="interactive help loop on stdin")
    p.add_argument("--net", required=True)
    p.add_argument("--topics")
    p.add_argument("--db", help="append recorded transitions here")
    p.set_defaults(func=cmd_assist)
    return parser


def main(argv: Optional[Sequence[str]] = None, out: Optional[TextIO] = None, stdin: Optional[TextIO] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    out = out or sys.stdout
    args.stdin = stdin or sys.stdin
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args, out)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (LogParseError, NetworkError, EvaluationError, InferenceError, ausm.TopicMapError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
