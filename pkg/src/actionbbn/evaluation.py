"""Cross-validation and log replay evaluation of next-action prediction."""

from __future__ import annotations

import functools
import math
import statistics
from dataclasses import dataclass
from typing import Optional, Sequence, TypeVar, Union

import numpy as np

from .ausm import DEFAULT_TOP_K, HelpTopicMap, InteractionState, query_help, rank_posterior, record_action
from .event_log import ActionEvent, SessionLog, TransitionRecord
from .inference import RNG_ALGORITHM, predict_next
from .network import Network, PriorConfig, chain_dag, fit_network, records_to_instances

T = TypeVar("T")

Z_95 = 1.96


class EvaluationError(ValueError):
    pass


@dataclass(frozen=True)
class CvReport:
    folds: int
    fold_accuracies: tuple[float, ...]
    fold_sizes: tuple[int, ...]
    mean: float
    half_width: float
    top_k: int
    ess: float
    seed: int
    rng: str = RNG_ALGORITHM


@dataclass(frozen=True)
class ReplayReport:
    total: int
    hits: tuple[int, ...]
    miss: int
    k: int
    source_id: str = ""

    def _hit(self, rank: int) -> int:
        return self.hits[rank - 1] if rank <= len(self.hits) else 0

    @property
    def hit_top1(self) -> int:
        return self._hit(1)

    @property
    def hit_top2(self) -> int:
        return self._hit(2)

    @property
    def hit_top3(self) -> int:
        return self._hit(3)

    def percent(self, count: int) -> float:
        return 100.0 * count / self.total if self.total else 0.0

    @property
    def overall_percent(self) -> float:
        return math.fsum(self.percent(h) for h in self.hits)


def kfold_split(records: Sequence[T], folds: int = 10, seed: int = 0) -> list[list[T]]:
    """Seeded shuffle, then a contiguous partition with sizes differing by at most one."""
    if folds < 2:
        raise EvaluationError("at least 2 folds are required")
    if len(records) < folds:
        raise EvaluationError(f"{len(records)} records cannot fill {folds} folds")
    order = np.random.default_rng(seed).permutation(len(records))
    return [[records[i] for i in part] for part in np.array_split(order, folds)]


def _fold_hits(train: Sequence[TransitionRecord], test: Sequence[TransitionRecord], ess: float, top_k: int) -> int:
    dataset = records_to_instances(train)
    network = fit_network(dataset, chain_dag(dataset.variables), PriorConfig(ess))
    known_current = set(network.variable("Caction").states)
    hits = 0
    for record in test:
        # unseen current or next actions can never be predicted
        if record.caction not in known_current:
            continue
        ranked = rank_posterior(predict_next(network, record.caction), top_k)
        hits += any(action == record.naction for action, _ in ranked)
    return hits


def cross_validate(
    records: Sequence[TransitionRecord],
    folds: int = 10,
    ess: float = 1.0,
    top_k: int = 1,
    seed: int = 0,
) -> CvReport:
    """Top-k next-action accuracy of the fixed Paction->Caction->Naction chain.

    Parameters are refit on each training partition. The half-width is
    ``1.96 * s / sqrt(folds)`` with ``s`` the sample standard deviation of
    the per-fold accuracies.
    """
    if not records:
        raise EvaluationError("no records to cross-validate")
    if top_k < 1:
        raise EvaluationError("top_k must be at least 1")
    parts = kfold_split(list(records), folds, seed)
    accuracies = []
    for held_out in range(folds):
        train = [r for f, part in enumerate(parts) if f != held_out for r in part]
        if not train:
            raise EvaluationError(f"fold {held_out} has an empty training partition")
        test = parts[held_out]
        accuracies.append(_fold_hits(train, test, ess, top_k) / len(test))
    mean = math.fsum(accuracies) / folds
    half_width = Z_95 * statistics.stdev(accuracies) / math.sqrt(folds)
    return CvReport(folds, tuple(accuracies), tuple(len(p) for p in parts), mean, half_width, top_k, ess, seed)


def replay_evaluate(
    network: Network,
    session: Union[SessionLog, Sequence[ActionEvent]],
    topic_map: Optional[HelpTopicMap] = None,
    k: int = DEFAULT_TOP_K,
) -> ReplayReport:
    """Feed a log through the support module, asking for help before each event.

    Queries start with the third event, so ``n`` events give ``n - 2`` queries.
    """
    events = session.events if isinstance(session, SessionLog) else tuple(session)
    source_id = session.source_id if isinstance(session, SessionLog) else ""
    if len(events) < 3:
        raise EvaluationError(f"replay needs at least 3 events, got {len(events)}")
    state = InteractionState()
    hits = [0] * k
    miss = 0
    for idx, event in enumerate(events):
        if idx >= 2:
            rank = query_help(state, network, topic_map, k).rank_of(event.action)
            if rank is None:
                miss += 1
            else:
                hits[rank - 1] += 1
        record_action(state, event)
    return ReplayReport(len(events) - 2, tuple(hits), miss, k, source_id)


def offline_replay(network: Network, records: Sequence[TransitionRecord], k: int = DEFAULT_TOP_K) -> ReplayReport:
    """Replay counts computed straight from transition records."""
    hits = [0] * k
    miss = 0
    for record in records:
        ranked = [a for a, _ in rank_posterior(predict_next(network, record.caction), k)]
        if record.naction in ranked:
            hits[ranked.index(record.naction)] += 1
        else:
            miss += 1
    return ReplayReport(len(records), tuple(hits), miss, k)


def _pct(value: float) -> str:
    return f"{value:.3f}%"


@functools.singledispatch
def render_report(report) -> str:
    raise TypeError(f"cannot render {type(report).__name__}")


@render_report.register
def _(report: CvReport) -> str:
    lines = [
        "cross-validation report",
        f"folds: {report.folds}",
        f"metric: top-{report.top_k} accuracy",
        f"ess: {report.ess:g}",
        f"seed: {report.seed}",
        f"rng: {report.rng}",
    ]
    for n, (acc, size) in enumerate(zip(report.fold_accuracies, report.fold_sizes), start=1):
        lines.append(f"fold {n:>2}: {_pct(100 * acc)} ({size} records)")
    lines.append(f"mean accuracy: {_pct(100 * report.mean)} ±{_pct(100 * report.half_width)} (95% normal approximation)")
    return "\n".join(lines) + "\n"


_ORDINALS = {1: "most probable", 2: "second most probable", 3: "third most probable"}


@render_report.register
def _(report: ReplayReport) -> str:
    lines = ["replay report"]
    if report.source_id:
        lines.append(f"log: {report.source_id}")
    lines.append(f"queries: {report.total}")
    for rank, count in enumerate(report.hits, start=1):
        label = _ORDINALS.get(rank, f"rank {rank}")
        lines.append(f"top-{rank} ({label}): {count} {_pct(report.percent(count))}")
    lines.append(f"miss: {report.miss} {_pct(report.percent(report.miss))}")
    lines.append(f"overall top-{report.k}: {sum(report.hits)} {_pct(report.overall_percent)}")
    return "\n".join(lines) + "\n"


def report_to_tsv(report: Union[CvReport, ReplayReport]) -> str:
    """Machine-readable twin of :func:`render_report` as ``key<TAB>value`` lines."""
    if isinstance(report, CvReport):
        rows = [
            ("folds", report.folds),
            ("top_k", report.top_k),
            ("ess", repr(report.ess)),
            ("seed", report.seed),
            ("rng", report.rng),
            *((f"fold_{n}", repr(a)) for n, a in enumerate(report.fold_accuracies, start=1)),
            ("mean", repr(report.mean)),
            ("half_width", repr(report.half_width)),
        ]
    else:
        rows = [
            ("total", report.total),
            ("k", report.k),
            *((f"hit_top{n}", h) for n, h in enumerate(report.hits, start=1)),
            ("miss", report.miss),
            ("overall_percent", f"{report.overall_percent:.3f}"),
        ]
    return "".join(f"{key}\t{value}\n" for key, value in rows)
