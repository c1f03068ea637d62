"""Discrete Bayesian networks: structure, sufficient statistics, parameters.

Table layout convention used everywhere in the package: the counts and the
conditional probability table of variable ``i`` are ``q_i x r_i`` arrays,
where row ``j`` is the parent configuration index (mixed radix, last listed
parent varying fastest) and column ``k`` is the child state index in the
variable's declared state order.
"""

from __future__ import annotations

import math
import os
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import IO, Iterable, Mapping, Optional, Sequence, Union

import numpy as np

from .event_log import NIL_PROPERTY, TransitionRecord

NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_.\-]*")

ROW_SUM_TOLERANCE = 1e-6


class NetworkError(ValueError):
    pass


class NetworkFormatError(NetworkError):
    def __init__(self, message: str, line_number: Optional[int] = None):
        self.line_number = line_number
        prefix = f"line {line_number}: " if line_number is not None else ""
        super().__init__(prefix + message)


@dataclass(frozen=True)
class Variable:
    name: str
    states: tuple[str, ...]

    def __post_init__(self):
        object.__setattr__(self, "states", tuple(self.states))
        if not NAME_RE.fullmatch(self.name):
            raise NetworkError(f"invalid variable name {self.name!r}")
        if not self.states:
            raise NetworkError(f"variable {self.name!r} has no states")
        if len(set(self.states)) != len(self.states):
            raise NetworkError(f"variable {self.name!r} has duplicate states")

    @property
    def cardinality(self) -> int:
        return len(self.states)

    def index(self, state: str) -> int:
        try:
            return self.states.index(state)
        except ValueError:
            raise NetworkError(f"{state!r} is not a state of {self.name!r}") from None


@dataclass(frozen=True)
class Dag:
    """Variables plus an ordered parent list per variable."""

    variables: tuple[Variable, ...]
    parents: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        object.__setattr__(self, "variables", tuple(self.variables))
        object.__setattr__(self, "parents", tuple(tuple(p) for p in self.parents))
        n = len(self.variables)
        if len(self.parents) != n:
            raise NetworkError("one parent list per variable is required")
        names = [v.name for v in self.variables]
        if len(set(names)) != n:
            raise NetworkError("duplicate variable names")
        for child, plist in enumerate(self.parents):
            if len(set(plist)) != len(plist):
                raise NetworkError(f"duplicate parent of {names[child]!r}")
            for p in plist:
                if not 0 <= p < n:
                    raise NetworkError(f"parent index {p} out of range")
                if p == child:
                    raise NetworkError(f"{names[child]!r} is its own parent")
        self.topological_order()

    @classmethod
    def from_edges(cls, variables: Sequence[Variable], edges: Iterable[tuple[str, str]]) -> "Dag":
        """Build from (parent name, child name) pairs; parents keep edge order."""
        names = [v.name for v in variables]
        parents: list[list[int]] = [[] for _ in names]
        for parent, child in edges:
            parents[names.index(child)].append(names.index(parent))
        return cls(tuple(variables), tuple(tuple(p) for p in parents))

    @classmethod
    def empty(cls, variables: Sequence[Variable]) -> "Dag":
        return cls(tuple(variables), tuple(() for _ in variables))

    def __len__(self):
        return len(self.variables)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(v.name for v in self.variables)

    def index(self, name: str) -> int:
        try:
            return self.names.index(name)
        except ValueError:
            raise NetworkError(f"unknown variable {name!r}") from None

    def cardinalities(self) -> tuple[int, ...]:
        return tuple(v.cardinality for v in self.variables)

    def parent_cardinalities(self, i: int) -> tuple[int, ...]:
        return tuple(self.variables[p].cardinality for p in self.parents[i])

    def q(self, i: int) -> int:
        return math.prod(self.parent_cardinalities(i))

    def edges(self) -> tuple[tuple[int, int], ...]:
        """Sorted (parent, child) index pairs."""
        return tuple(sorted((p, c) for c, plist in enumerate(self.parents) for p in plist))

    def topological_order(self) -> tuple[int, ...]:
        n = len(self.variables)
        indegree = [len(p) for p in self.parents]
        children: list[list[int]] = [[] for _ in range(n)]
        for c, plist in enumerate(self.parents):
            for p in plist:
                children[p].append(c)
        ready = [i for i in range(n) if indegree[i] == 0]
        order = []
        while ready:
            ready.sort()
            node = ready.pop(0)
            order.append(node)
            for c in children[node]:
                indegree[c] -= 1
                if indegree[c] == 0:
                    ready.append(c)
        if len(order) != n:
            raise NetworkError("graph contains a cycle")
        return tuple(order)


@dataclass(frozen=True)
class CountTable:
    """Per-variable ``q_i x r_i`` integer counts N_ijk for one dag and dataset."""

    dag: Dag
    counts: tuple[np.ndarray, ...]

    def row_sums(self, i: int) -> np.ndarray:
        return self.counts[i].sum(axis=1)

    @property
    def size(self) -> int:
        return int(self.counts[0].sum()) if self.counts else 0


@dataclass(frozen=True)
class PriorConfig:
    ess: float = 1.0

    def __post_init__(self):
        if not self.ess > 0:
            raise NetworkError(f"equivalent sample size must be positive, got {self.ess}")


@dataclass(frozen=True)
class Network:
    dag: Dag
    cpts: tuple[np.ndarray, ...]
    name: str = "actions"

    def __post_init__(self):
        tables = []
        for i, cpt in enumerate(self.cpts):
            arr = np.array(cpt, dtype=float)
            shape = (self.dag.q(i), self.dag.variables[i].cardinality)
            if arr.shape != shape:
                raise NetworkError(
                    f"cpt of {self.dag.variables[i].name!r} has shape {arr.shape}, expected {shape}"
                )
            if np.any(arr < 0) or np.any(arr > 1):
                raise NetworkError(f"cpt of {self.dag.variables[i].name!r} has entries outside [0, 1]")
            if np.any(np.abs(arr.sum(axis=1) - 1.0) > 1e-9):
                raise NetworkError(f"cpt of {self.dag.variables[i].name!r} has a row not summing to 1")
            arr.setflags(write=False)
            tables.append(arr)
        if len(tables) != len(self.dag):
            raise NetworkError("one cpt per variable is required")
        object.__setattr__(self, "cpts", tuple(tables))
        if not NAME_RE.fullmatch(self.name):
            raise NetworkError(f"invalid network name {self.name!r}")

    @property
    def variables(self) -> tuple[Variable, ...]:
        return self.dag.variables

    def variable(self, name: str) -> Variable:
        return self.dag.variables[self.dag.index(name)]

    def cpt(self, name: str) -> np.ndarray:
        return self.cpts[self.dag.index(name)]


@dataclass(frozen=True)
class Dataset:
    """Complete categorical instances; ``rows[n][i]`` is a state of ``variables[i]``."""

    variables: tuple[Variable, ...]
    rows: tuple[tuple[str, ...], ...]
    fields: tuple[str, ...] = field(default=())

    def __len__(self):
        return len(self.rows)

    def encode(self) -> np.ndarray:
        return encode_rows(self.rows, self.variables)


def _mixed_radix(states: Sequence[int], radices: Sequence[int]) -> int:
    index = 0
    for s, r in zip(states, radices):
        index = index * r + s
    return index


def parent_config_index(dag: Dag, variable: Union[int, str], assignment: Mapping[str, str]) -> int:
    """Row index of a parent configuration (last listed parent varies fastest)."""
    i = dag.index(variable) if isinstance(variable, str) else variable
    states = []
    for p in dag.parents[i]:
        pvar = dag.variables[p]
        if pvar.name not in assignment:
            raise NetworkError(f"no state given for parent {pvar.name!r}")
        states.append(pvar.index(assignment[pvar.name]))
    return _mixed_radix(states, dag.parent_cardinalities(i))


def parent_config_states(dag: Dag, variable: int, j: int) -> tuple[int, ...]:
    """Inverse of the mixed-radix layout: parent state indices of row ``j``."""
    radices = dag.parent_cardinalities(variable)
    states = []
    for r in reversed(radices):
        j, s = divmod(j, r)
        states.append(s)
    return tuple(reversed(states))


def encode_rows(rows: Iterable[Sequence[str]], variables: Sequence[Variable]) -> np.ndarray:
    lookup = [{s: k for k, s in enumerate(v.states)} for v in variables]
    out = []
    for n, row in enumerate(rows):
        if len(row) != len(variables):
            raise NetworkError(f"record {n} has {len(row)} values, expected {len(variables)}")
        coded = []
        for i, token in enumerate(row):
            try:
                coded.append(lookup[i][token])
            except KeyError:
                raise NetworkError(
                    f"record {n}: {token!r} is not a state of variable {variables[i].name!r}"
                ) from None
        out.append(coded)
    return np.array(out, dtype=np.int64).reshape(len(out), len(variables))


def family_counts(codes: np.ndarray, cardinalities: Sequence[int], child: int, parents: Sequence[int]) -> np.ndarray:
    """N_ijk for one family from integer-coded data."""
    r = cardinalities[child]
    q = math.prod(cardinalities[p] for p in parents)
    j = np.zeros(codes.shape[0], dtype=np.int64)
    for p in parents:
        j = j * cardinalities[p] + codes[:, p]
    return np.bincount(j * r + codes[:, child], minlength=q * r).reshape(q, r)


def tally_counts(dataset: Union[Dataset, Sequence[Sequence[str]], np.ndarray], dag: Dag) -> CountTable:
    """Count N_ijk for every variable of ``dag``.

    ``dataset`` is a :class:`Dataset`, a sequence of token rows aligned with
    ``dag.variables``, or an already integer-coded array.
    """
    if isinstance(dataset, np.ndarray):
        codes = dataset
    else:
        rows = dataset.rows if isinstance(dataset, Dataset) else dataset
        codes = encode_rows(rows, dag.variables)
    counts = []
    for i in range(len(dag)):
        table = family_counts(codes, dag.cardinalities(), i, dag.parents[i])
        table.setflags(write=False)
        counts.append(table)
    return CountTable(dag, tuple(counts))


def estimate_cpts(counts: CountTable, prior: Union[PriorConfig, float] = PriorConfig()) -> tuple[np.ndarray, ...]:
    """Dirichlet posterior mean with the same pseudo-counts as the structure score.

    entry(i, j, k) = (N_ijk + N'/(r_i q_i)) / (N_ij + N'/q_i)
    """
    if not isinstance(prior, PriorConfig):
        prior = PriorConfig(float(prior))
    ess = prior.ess
    cpts = []
    for table in counts.counts:
        q, r = table.shape
        num = table + ess / (r * q)
        cpts.append(num / (table.sum(axis=1, keepdims=True) + ess / q))
    return tuple(cpts)


def fit_network(dataset: Dataset, dag: Dag, prior: Union[PriorConfig, float] = PriorConfig(), name: str = "actions") -> Network:
    return Network(dag, estimate_cpts(tally_counts(dataset, dag), prior), name)


# -- transition records -> categorical instances --------------------------------

FIELD_VARIABLES = {
    "paction": "Paction",
    "pprop": "Pprop",
    "caction": "Caction",
    "cprop": "Cprop",
    "naction": "Naction",
    "nprop": "Nprop",
    "cptime_bin": "CPTime_d",
}
DEFAULT_FIELDS = ("paction", "caction", "naction")
TIME_BIN_THRESHOLDS = (5, 15, 60)


def time_bin(delta_s: int, thresholds: Sequence[int] = TIME_BIN_THRESHOLDS) -> str:
    for t in thresholds:
        if delta_s <= t:
            return f"le{t}"
    return f"gt{thresholds[-1]}"


def _field_value(record: TransitionRecord, name: str, thresholds: Sequence[int]) -> str:
    if name == "cptime_bin":
        return time_bin(record.cp_time_delta_s, thresholds)
    value = getattr(record, name)
    return NIL_PROPERTY if value is None else value


def records_to_instances(
    records: Sequence[TransitionRecord],
    fields: Iterable[str] = DEFAULT_FIELDS,
    time_thresholds: Sequence[int] = TIME_BIN_THRESHOLDS,
) -> Dataset:
    """One categorical variable per selected field, states sorted lexicographically.

    Variables always follow the canonical field order (previous, current,
    next, time) whatever order ``fields`` is given in.
    """
    if not records:
        raise NetworkError("no transition records")
    selected = set(fields)
    unknown = selected - FIELD_VARIABLES.keys()
    if unknown:
        raise NetworkError(f"unknown fields: {sorted(unknown)}")
    if not selected:
        raise NetworkError("empty field selection")
    ordered = tuple(f for f in FIELD_VARIABLES if f in selected)
    rows = tuple(tuple(_field_value(r, f, time_thresholds) for f in ordered) for r in records)
    variables = tuple(
        Variable(FIELD_VARIABLES[f], tuple(sorted({row[col] for row in rows}))) for col, f in enumerate(ordered)
    )
    return Dataset(variables, rows, ordered)


def chain_dag(variables: Sequence[Variable]) -> Dag:
    """Paction -> Caction -> Naction; any other variable stays parentless."""
    names = [v.name for v in variables]
    edges = [(a, b) for a, b in (("Paction", "Caction"), ("Caction", "Naction")) if a in names and b in names]
    return Dag.from_edges(variables, edges)


# -- text format ---------------------------------------------------------------


def _format_prob(p: float) -> str:
    return repr(float(p))


def export_network(network: Network, sink: Union[str, os.PathLike, IO[str], None] = None) -> str:
    """Serialize to the line-oriented network text format.

    Returns the text; also writes it when ``sink`` is a path or a file object.
    """
    dag = network.dag
    lines = [f"net {network.name}"]
    for v in dag.variables:
        for s in v.states:
            if any(ch in s for ch in ",{}#\n\t") or s != s.strip():
                raise NetworkError(f"state {s!r} of {v.name!r} cannot be written in the text format")
        lines.append(f"var {v.name} {{ {', '.join(v.states)} }}")
    for i, v in enumerate(dag.variables):
        parents = " ".join(dag.variables[p].name for p in dag.parents[i])
        lines.append(f"cpt {v.name} | {parents} {{" if parents else f"cpt {v.name} {{")
        for row in network.cpts[i]:
            lines.append("  " + " ".join(_format_prob(p) for p in row))
        lines.append("}")
    text = "\n".join(lines) + "\n"
    if sink is not None:
        if hasattr(sink, "write"):
            sink.write(text)
        else:
            Path(sink).write_text(text, encoding="utf-8")
    return text


_VAR_RE = re.compile(r"var\s+(\S+)\s*\{(.*)\}\s*$")
_CPT_RE = re.compile(r"cpt\s+(\S+)\s*(?:\|\s*(.*?))?\s*\{\s*$")


def parse_network(text: str) -> Network:
    name: Optional[str] = None
    variables: list[Variable] = []
    var_index: dict[str, int] = {}
    cpt_specs: dict[int, tuple[tuple[int, ...], list[list[float]], int]] = {}
    current: Optional[tuple[int, tuple[int, ...], list[list[float]], int]] = None

    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if current is not None:
            if line == "}":
                child, parents, rows, start = current
                cpt_specs[child] = (parents, rows, start)
                current = None
                continue
            try:
                row = [float(tok) for tok in line.split()]
            except ValueError:
                raise NetworkFormatError(f"non-numeric probability row: {line!r}", number) from None
            child = current[0]
            width = variables[child].cardinality
            if len(row) != width:
                raise NetworkFormatError(f"expected {width} probabilities, found {len(row)}", number)
            if any(not math.isfinite(p) or p < 0 or p > 1 for p in row):
                raise NetworkFormatError("probability outside [0, 1]", number)
            total = math.fsum(row)
            if abs(total - 1.0) > ROW_SUM_TOLERANCE:
                raise NetworkFormatError(f"row not normalized (sums to {total:.12g})", number)
            current[2].append(row)
            continue

        keyword = line.split(None, 1)[0]
        if keyword == "net":
            parts = line.split()
            if len(parts) != 2 or name is not None:
                raise NetworkFormatError("malformed or repeated 'net' line", number)
            name = parts[1]
        elif keyword == "var":
            if cpt_specs:
                raise NetworkFormatError("variables must be declared before any cpt", number)
            m = _VAR_RE.fullmatch(line)
            if not m:
                raise NetworkFormatError(f"malformed variable declaration: {line!r}", number)
            vname = m.group(1)
            states = tuple(s.strip() for s in m.group(2).split(","))
            if vname in var_index:
                raise NetworkFormatError(f"variable {vname!r} declared twice", number)
            if any(not s for s in states):
                raise NetworkFormatError(f"empty state name in {vname!r}", number)
            try:
                variables.append(Variable(vname, states))
            except NetworkError as exc:
                raise NetworkFormatError(str(exc), number) from None
            var_index[vname] = len(variables) - 1
        elif keyword == "cpt":
            m = _CPT_RE.fullmatch(line)
            if not m:
                raise NetworkFormatError(f"malformed cpt header: {line!r}", number)
            child_name, parent_text = m.group(1), m.group(2)
            if child_name not in var_index:
                raise NetworkFormatError(f"cpt for undeclared variable {child_name!r}", number)
            child = var_index[child_name]
            if child in cpt_specs:
                raise NetworkFormatError(f"second cpt for {child_name!r}", number)
            parent_names = parent_text.split() if parent_text else []
            for pn in parent_names:
                if pn not in var_index:
                    raise NetworkFormatError(f"unknown parent {pn!r} of {child_name!r}", number)
            current = (child, tuple(var_index[pn] for pn in parent_names), [], number)
        else:
            raise NetworkFormatError(f"unexpected line: {line!r}", number)

    if current is not None:
        raise NetworkFormatError(f"unterminated cpt block for {variables[current[0]].name!r}", current[3])
    if name is None:
        raise NetworkFormatError("missing 'net' line")
    missing = [v.name for i, v in enumerate(variables) if i not in cpt_specs]
    if missing:
        raise NetworkFormatError(f"no cpt for {', '.join(missing)}")
    try:
        dag = Dag(tuple(variables), tuple(cpt_specs[i][0] for i in range(len(variables))))
    except NetworkError as exc:
        raise NetworkFormatError(str(exc)) from None
    cpts = []
    for i in range(len(variables)):
        _, rows, start = cpt_specs[i]
        if len(rows) != dag.q(i):
            raise NetworkFormatError(
                f"cpt of {variables[i].name!r} has {len(rows)} rows, expected {dag.q(i)}", start
            )
        arr = np.array(rows, dtype=float).reshape(dag.q(i), variables[i].cardinality)
        # tolerate the 1e-6 import slack by renormalizing
        cpts.append(arr / arr.sum(axis=1, keepdims=True))
    return Network(dag, tuple(cpts), name)


def import_network(source: Union[str, os.PathLike, IO[str]]) -> Network:
    if hasattr(source, "read"):
        return parse_network(source.read())
    return parse_network(Path(source).read_text(encoding="utf-8"))
