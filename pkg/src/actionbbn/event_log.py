"""Interaction log parsing and the transition database.

A log is one session: one line per user action, as

    00 : 08 : 19<TAB>ChooseAttribute<TAB>Growth->Plant

Columns are separated by tabs or by runs of two or more spaces. The
property column is optional. Every window of three consecutive events in
a session becomes one :class:`TransitionRecord`.
"""

from __future__ import annotations

import io
import logging
import os
import re
from dataclasses import dataclass
from pathlib import Path
from typing import IO, Iterable, Iterator, Optional, Sequence, Union

logger = logging.getLogger(__name__)

PathOrFile = Union[str, os.PathLike, IO[str]]

NIL_PROPERTY = "-"

DB_COLUMNS = (
    "paction",
    "pprop",
    "ptime",
    "caction",
    "cprop",
    "ctime",
    "naction",
    "nprop",
    "ntime",
    "cptime_d",
)
DB_HEADER = "\t".join(DB_COLUMNS)

ACTION_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.\-]*")
_SEPARATOR_RE = re.compile(r"\t+| {2,}")


class LogParseError(ValueError):
    """A log line or database line could not be parsed."""

    def __init__(self, message: str, line_number: Optional[int] = None, source: Optional[str] = None):
        self.reason = message
        self.line_number = line_number
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line_number is not None:
            where += f"line {line_number}: "
        elif where:
            where += " "
        super().__init__(where + message)


@dataclass(frozen=True)
class ActionEvent:
    timestamp_s: int
    action: str
    property: Optional[str] = None

    def __post_init__(self):
        if self.timestamp_s < 0:
            raise ValueError(f"negative timestamp {self.timestamp_s}")
        if not is_action_token(self.action):
            raise ValueError(f"invalid action token {self.action!r}")
        if self.property is not None and "\t" in self.property:
            raise ValueError(f"property contains a tab: {self.property!r}")


@dataclass(frozen=True)
class SessionLog:
    source_id: str
    events: tuple[ActionEvent, ...]
    warnings: tuple[str, ...] = ()

    def __len__(self):
        return len(self.events)


@dataclass(frozen=True)
class TransitionRecord:
    paction: str
    pprop: Optional[str]
    ptime_s: int
    caction: str
    cprop: Optional[str]
    ctime_s: int
    naction: str
    nprop: Optional[str]
    ntime_s: int
    cp_time_delta_s: int

    @classmethod
    def from_events(cls, prev: ActionEvent, cur: ActionEvent, nxt: ActionEvent) -> "TransitionRecord":
        return cls(
            prev.action,
            prev.property,
            prev.timestamp_s,
            cur.action,
            cur.property,
            cur.timestamp_s,
            nxt.action,
            nxt.property,
            nxt.timestamp_s,
            max(cur.timestamp_s - prev.timestamp_s, 0),
        )


def is_action_token(text: str) -> bool:
    return bool(text) and ACTION_RE.fullmatch(text) is not None


def parse_timestamp(text: str) -> int:
    """Convert ``HH:MM:SS`` (single spaces around colons allowed) to seconds."""
    parts = text.split(":")
    if len(parts) != 3:
        raise LogParseError(f"timestamp must have 3 colon-separated fields, got {len(parts)}: {text!r}")
    values = []
    for pos, part in enumerate(parts):
        if pos > 0 and part.startswith(" "):
            part = part[1:]
        if pos < 2 and part.endswith(" "):
            part = part[:-1]
        if len(part) != 2 or not (part.isascii() and part.isdigit()):
            raise LogParseError(f"timestamp field {part!r} is not two decimal digits: {text!r}")
        values.append(int(part))
    hours, minutes, seconds = values
    if minutes >= 60:
        raise LogParseError(f"minutes out of range in timestamp {text!r}")
    if seconds >= 60:
        raise LogParseError(f"seconds out of range in timestamp {text!r}")
    return hours * 3600 + minutes * 60 + seconds


def format_timestamp(seconds: int) -> str:
    hours, rest = divmod(seconds, 3600)
    return f"{hours:02d} : {rest // 60:02d} : {rest % 60:02d}"


def parse_log_line(text: str, line_number: int = 0) -> Optional[ActionEvent]:
    """Parse one log line. Returns None for a blank line."""
    line = text.rstrip("\r\n")
    if not line.strip():
        return None
    fields = _SEPARATOR_RE.split(line.strip(), maxsplit=2)
    try:
        timestamp = parse_timestamp(fields[0])
    except LogParseError as exc:
        raise LogParseError(exc.reason, line_number) from None
    if len(fields) < 2 or not fields[1].strip():
        raise LogParseError("missing action column", line_number)
    action = fields[1].strip()
    if not is_action_token(action):
        raise LogParseError(f"invalid action token {action!r}", line_number)
    prop = fields[2].strip() if len(fields) > 2 else ""
    # a property column holding only tabs/spaces is treated as absent
    prop = prop.replace("\t", " ").strip() or None
    return ActionEvent(timestamp, action, prop)


def parse_log(text: str, source_id: str = "<string>") -> SessionLog:
    events: list[ActionEvent] = []
    warnings: list[str] = []
    for number, line in enumerate(text.splitlines(), start=1):
        try:
            event = parse_log_line(line, number)
        except LogParseError as exc:
            raise LogParseError(exc.reason, number, source_id) from None
        if event is None:
            continue
        if events and event.timestamp_s < events[-1].timestamp_s:
            msg = (
                f"{source_id}:line {number}: timestamp {event.timestamp_s}s precedes "
                f"previous event at {events[-1].timestamp_s}s"
            )
            logger.warning(msg)
            warnings.append(msg)
        events.append(event)
    return SessionLog(source_id, tuple(events), tuple(warnings))


def read_log_file(path: Union[str, os.PathLike]) -> SessionLog:
    path = Path(path)
    return parse_log(path.read_text(encoding="utf-8"), str(path))


def build_transitions(session: Union[SessionLog, Sequence[ActionEvent]]) -> list[TransitionRecord]:
    """Slide a 3-wide window over one session's events.

    Boundary events without a predecessor or successor do not get a row of
    their own, so ``n`` events give ``n - 2`` records.
    """
    events = session.events if isinstance(session, SessionLog) else tuple(session)
    if len(events) < 3:
        if events:
            logger.warning("session with %d events yields no transitions", len(events))
        return []
    return [TransitionRecord.from_events(*events[i : i + 3]) for i in range(len(events) - 2)]


def _encode_prop(prop: Optional[str]) -> str:
    if prop is None:
        return NIL_PROPERTY
    if prop == NIL_PROPERTY:
        raise ValueError(f"property {NIL_PROPERTY!r} collides with the nil-property sentinel")
    if "\t" in prop or "\n" in prop:
        raise ValueError(f"property {prop!r} contains a tab or newline")
    return prop


def _decode_prop(text: str) -> Optional[str]:
    return None if text == NIL_PROPERTY else text


def format_record(record: TransitionRecord) -> str:
    r = record
    return "\t".join(
        [
            r.paction,
            _encode_prop(r.pprop),
            str(r.ptime_s),
            r.caction,
            _encode_prop(r.cprop),
            str(r.ctime_s),
            r.naction,
            _encode_prop(r.nprop),
            str(r.ntime_s),
            str(r.cp_time_delta_s),
        ]
    )


def parse_record(line: str, line_number: int = 0) -> TransitionRecord:
    cols = line.rstrip("\r\n").split("\t")
    if len(cols) != len(DB_COLUMNS):
        raise LogParseError(f"expected {len(DB_COLUMNS)} columns, found {len(cols)}", line_number)
    times = []
    for idx in (2, 5, 8, 9):
        if not cols[idx].isdigit():
            raise LogParseError(f"column {DB_COLUMNS[idx]!r} is not a non-negative integer: {cols[idx]!r}", line_number)
        times.append(int(cols[idx]))
    for idx in (0, 3, 6):
        if not is_action_token(cols[idx]):
            raise LogParseError(f"column {DB_COLUMNS[idx]!r} is not an action token: {cols[idx]!r}", line_number)
    return TransitionRecord(
        cols[0],
        _decode_prop(cols[1]),
        times[0],
        cols[3],
        _decode_prop(cols[4]),
        times[1],
        cols[6],
        _decode_prop(cols[7]),
        times[2],
        times[3],
    )


def write_transition_db(records: Iterable[TransitionRecord], sink: PathOrFile) -> None:
    """Write a header line and one tab-separated line per record."""
    lines = [DB_HEADER] + [format_record(r) for r in records]
    text = "\n".join(lines) + "\n"
    if hasattr(sink, "write"):
        sink.write(text)
    else:
        Path(sink).write_text(text, encoding="utf-8")


def _iter_db_lines(source: PathOrFile) -> Iterator[str]:
    if hasattr(source, "read"):
        yield from io.StringIO(source.read())
    else:
        with open(source, encoding="utf-8", newline="") as fh:
            yield from fh


def read_transition_db(source: PathOrFile) -> list[TransitionRecord]:
    records = []
    for number, line in enumerate(_iter_db_lines(source), start=1):
        if number == 1:
            if line.rstrip("\r\n") != DB_HEADER:
                raise LogParseError("missing or malformed header line", 1)
            continue
        if not line.strip():
            continue
        records.append(parse_record(line, number))
    return records


class TransitionDbSink:
    """Append-mode writer for the transition database.

    The header is written when the file is missing or empty.
    """

    def __init__(self, path: Union[str, os.PathLike]):
        self.path = Path(path)

    def append(self, record: TransitionRecord) -> None:
        self.extend([record])

    def extend(self, records: Iterable[TransitionRecord]) -> int:
        lines = [format_record(r) for r in records]
        new_file = not self.path.exists() or self.path.stat().st_size == 0
        with open(self.path, "a", encoding="utf-8", newline="") as fh:
            if new_file:
                fh.write(DB_HEADER + "\n")
            for line in lines:
                fh.write(line + "\n")
        return len(lines)
