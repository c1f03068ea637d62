"""Adaptive user support: stream recording and help-topic ranking.

The module watches the host's action stream, writes one transition row per
completed 3-event window, and on request ranks the most probable next
actions and maps them to help topics.
"""

from __future__ import annotations

import logging
import os
import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Optional, Protocol, Union

from .event_log import ActionEvent, TransitionRecord
from .inference import Posterior, predict_next
from .network import Network, import_network

logger = logging.getLogger(__name__)

DEFAULT_TOP_K = 3
DEFAULT_TOPIC = ("HELP.GENERIC", "General help")


class TopicMapError(ValueError):
    pass


class TransitionSink(Protocol):
    def append(self, record: TransitionRecord) -> None: ...


@dataclass(frozen=True)
class HelpTopicMap:
    entries: dict[str, tuple[str, str]] = field(default_factory=dict)
    default: tuple[str, str] = DEFAULT_TOPIC

    def topic(self, action: str) -> tuple[str, str]:
        return self.entries.get(action, self.default)


def load_topic_map(source: Union[str, os.PathLike, IO[str], Iterable[str]]) -> HelpTopicMap:
    """Read ``action<TAB>topic_id<TAB>title`` lines; a ``*`` action sets the default."""
    if isinstance(source, (str, os.PathLike)):
        lines = Path(source).read_text(encoding="utf-8").splitlines()
    elif hasattr(source, "read"):
        lines = source.read().splitlines()
    else:
        lines = list(source)
    entries: dict[str, tuple[str, str]] = {}
    default = None
    for number, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        parts = line.split("\t")
        if len(parts) != 3 or not all(p.strip() for p in parts):
            raise TopicMapError(f"line {number}: expected 'action<TAB>topic_id<TAB>title'")
        action, topic_id, title = (p.strip() for p in parts)
        if action == "*":
            if default is not None:
                raise TopicMapError(f"line {number}: default topic declared twice")
            default = (topic_id, title)
            continue
        if action in entries:
            raise TopicMapError(f"line {number}: duplicate action {action!r}")
        entries[action] = (topic_id, title)
    return HelpTopicMap(entries, default or DEFAULT_TOPIC)


@dataclass
class InteractionState:
    """Sliding window over the last two actions plus the transition sink."""

    sink: TransitionSink = field(default_factory=list)
    previous: Optional[ActionEvent] = None
    current: Optional[ActionEvent] = None
    pending: Optional[TransitionRecord] = None
    appended: int = 0

    def flush(self) -> None:
        if self.pending is not None:
            self.sink.append(self.pending)
            self.pending = None
            self.appended += 1


def record_action(state: InteractionState, event: ActionEvent) -> InteractionState:
    """Push one event through the window; append a record once it is full.

    If the sink raises, the record stays in ``state.pending`` and is retried
    before the next one is written.
    """
    state.flush()
    if state.current is None:
        state.current = event
        return state
    if state.previous is None:
        state.previous, state.current = state.current, event
        return state
    record = TransitionRecord.from_events(state.previous, state.current, event)
    state.previous, state.current = state.current, event
    state.pending = record
    state.flush()
    return state


@dataclass(frozen=True)
class RankedTopic:
    action: str
    probability: float
    topic_id: str
    title: str


@dataclass(frozen=True)
class PredictionResult:
    ranking: tuple[RankedTopic, ...]
    fallback: bool = False

    @property
    def actions(self) -> tuple[str, ...]:
        return tuple(r.action for r in self.ranking)

    def rank_of(self, action: str) -> Optional[int]:
        """1-based rank of ``action`` or None if it was not offered."""
        for pos, r in enumerate(self.ranking, start=1):
            if r.action == action:
                return pos
        return None


def rank_posterior(posterior: Posterior, k: Optional[int] = None) -> list[tuple[str, float]]:
    """States by descending probability, ties by token; top ``k`` if given."""
    ranked = sorted(zip(posterior.states, posterior.probabilities), key=lambda sp: (-sp[1], sp[0]))
    return ranked if k is None else ranked[:k]


def query_help(
    state: InteractionState,
    network: Network,
    topic_map: Optional[HelpTopicMap] = None,
    k: int = DEFAULT_TOP_K,
) -> PredictionResult:
    if k < 1:
        raise ValueError("k must be at least 1")
    topic_map = topic_map or HelpTopicMap()
    current = state.current.action if state.current is not None else None
    posterior = predict_next(network, current)
    ranking = tuple(
        RankedTopic(action, p, *topic_map.topic(action)) for action, p in rank_posterior(posterior, k)
    )
    return PredictionResult(ranking, posterior.fallback)


class AdaptiveSupportModule:
    """The host-facing object: one interaction stream and a swappable network."""

    def __init__(
        self,
        network: Network,
        topic_map: Optional[HelpTopicMap] = None,
        sink: Optional[TransitionSink] = None,
        k: int = DEFAULT_TOP_K,
    ):
        self._network = network
        self._swap_lock = threading.Lock()
        self.topic_map = topic_map or HelpTopicMap()
        self.state = InteractionState(sink if sink is not None else [])
        self.k = k

    @property
    def network(self) -> Network:
        return self._network

    def record_action(self, event: ActionEvent) -> None:
        record_action(self.state, event)

    def query_help(self, k: Optional[int] = None) -> PredictionResult:
        # a reference taken once keeps a concurrent swap from splitting one query
        network = self._network
        return query_help(self.state, network, self.topic_map, k or self.k)

    def reload_network(self, path: Union[str, os.PathLike]) -> Network:
        """Swap in the network stored at ``path``.

        A file that fails to parse raises and the current network stays live.
        """
        try:
            network = import_network(path)
            predict_next(network, None)
        except Exception:
            logger.error("network reload from %s failed; keeping the active network", path)
            raise
        with self._swap_lock:
            self._network = network
        return network
