"""Bayesian structure score and structure search.

The score of a dag is the log marginal likelihood of the data with the
parameters integrated out under a Dirichlet prior of equivalent sample size
``ess`` spread uniformly over the cells of each family table:

    log P(D|M) = sum_i sum_j [ lgamma(a_ij) - lgamma(a_ij + N_ij)
                   + sum_k ( lgamma(a_ijk + N_ijk) - lgamma(a_ijk) ) ]

with ``a_ij = ess / q_i`` and ``a_ijk = ess / (r_i q_i)``.  With equal
structure priors the log posterior ratio of two models is the difference
of their scores.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

from .network import CountTable, Dag, Dataset, NetworkError, Variable, encode_rows, family_counts, tally_counts

MAX_EXHAUSTIVE_VARIABLES = 4
DEFAULT_MAX_PARENTS = 2
TIE_TOLERANCE = 1e-9


@dataclass(frozen=True)
class ScoredModel:
    dag: Dag
    log_score: float


def _check_ess(ess: float) -> None:
    if not ess > 0:
        raise ValueError(f"equivalent sample size must be positive, got {ess}")


def family_log_score(table: np.ndarray, ess: float) -> float:
    """Score contribution of one variable given its ``q x r`` count table."""
    q, r = table.shape
    a_ij = ess / q
    a_ijk = ess / (q * r)
    n_ij = table.sum(axis=1)
    lg_row = math.lgamma(a_ij)
    lg_cell = math.lgamma(a_ijk)
    # empty rows and cells contribute exactly zero
    total = 0.0
    for j in np.flatnonzero(n_ij):
        row = table[j]
        nz = row[row > 0]
        total += lg_row - math.lgamma(a_ij + n_ij[j])
        total += math.fsum(math.lgamma(a_ijk + n) - lg_cell for n in nz)
    return total


def log_marginal_likelihood(dag: Dag, counts: CountTable, ess: float = 1.0) -> float:
    _check_ess(ess)
    if counts.dag.parents != dag.parents or counts.dag.variables != dag.variables:
        raise NetworkError("count table was not built for this dag")
    return math.fsum(family_log_score(t, ess) for t in counts.counts)


def _as_codes(dataset, variables: Sequence[Variable]) -> np.ndarray:
    if isinstance(dataset, np.ndarray):
        return dataset
    rows = dataset.rows if isinstance(dataset, Dataset) else dataset
    return encode_rows(rows, variables)


def score_dag(dag: Dag, dataset, ess: float = 1.0) -> float:
    return log_marginal_likelihood(dag, tally_counts(_as_codes(dataset, dag.variables), dag), ess)


def model_log_ratio(dag1: Dag, dag2: Dag, dataset, ess: float = 1.0) -> float:
    """log P(D|M1) - log P(D|M2). Positive means M1 is the more probable model."""
    _check_ess(ess)
    if dag1.variables != dag2.variables:
        raise NetworkError("models are defined over different variables")
    codes = _as_codes(dataset, dag1.variables)
    return score_dag(dag1, codes, ess) - score_dag(dag2, codes, ess)


def _edge_key(dag: Dag) -> tuple:
    edges = dag.edges()
    return (len(edges), edges)


def enumerate_dags(variables: Sequence[Variable], max_parents: int = DEFAULT_MAX_PARENTS) -> list[Dag]:
    """Every labeled dag over ``variables`` with at most ``max_parents`` parents per node.

    Ordered by edge count, then by sorted edge list.
    """
    variables = tuple(variables)
    n = len(variables)
    if n > MAX_EXHAUSTIVE_VARIABLES:
        raise NetworkError(
            f"exhaustive enumeration supports at most {MAX_EXHAUSTIVE_VARIABLES} variables, got {n}"
        )
    candidates = [(p, c) for c in range(n) for p in range(n) if p != c]
    dags = []
    for mask in range(1 << len(candidates)):
        parents: list[list[int]] = [[] for _ in range(n)]
        for bit, (p, c) in enumerate(candidates):
            if mask >> bit & 1:
                parents[c].append(p)
        if any(len(plist) > max_parents for plist in parents):
            continue
        try:
            dags.append(Dag(variables, tuple(tuple(sorted(p)) for p in parents)))
        except NetworkError:
            continue
    dags.sort(key=_edge_key)
    return dags


class _FamilyCache:
    def __init__(self, codes: np.ndarray, variables: tuple[Variable, ...], ess: float):
        self.codes = codes
        self.cardinalities = tuple(v.cardinality for v in variables)
        self.ess = ess
        self._scores: dict[tuple[int, tuple[int, ...]], float] = {}

    def family(self, i: int, parents: tuple[int, ...]) -> float:
        key = (i, parents)
        if key not in self._scores:
            table = family_counts(self.codes, self.cardinalities, i, parents)
            self._scores[key] = family_log_score(table, self.ess)
        return self._scores[key]

    def score(self, dag: Dag) -> float:
        return math.fsum(self.family(i, dag.parents[i]) for i in range(len(dag)))


def _better(score: float, dag: Dag, best_score: float, best: Optional[Dag]) -> bool:
    if best is None or score > best_score + TIE_TOLERANCE:
        return True
    if score < best_score - TIE_TOLERANCE:
        return False
    return _edge_key(dag) < _edge_key(best)


def _neighbours(dag: Dag, max_parents: int) -> list[Dag]:
    n = len(dag)
    parent_sets = [set(p) for p in dag.parents]
    out = []

    def make(sets):
        try:
            return Dag(dag.variables, tuple(tuple(sorted(s)) for s in sets))
        except NetworkError:
            return None

    for p, c in itertools.permutations(range(n), 2):
        sets = [set(s) for s in parent_sets]
        if p in sets[c]:
            sets[c].discard(p)
            out.append(make(sets))
            sets[p].add(c)
            if len(sets[p]) <= max_parents:
                out.append(make(sets))
        elif c not in parent_sets[p]:
            sets[c].add(p)
            if len(sets[c]) <= max_parents:
                out.append(make(sets))
    return [d for d in out if d is not None]


def select_best_structure(
    dataset: Union[Dataset, Sequence[Sequence[str]], np.ndarray],
    variables: Optional[Sequence[Variable]] = None,
    ess: float = 1.0,
    mode: str = "exhaustive",
    max_parents: int = DEFAULT_MAX_PARENTS,
) -> ScoredModel:
    """Highest scoring dag, exhaustively or by greedy hill climbing.

    Scores within ``TIE_TOLERANCE`` count as equal; ties go to fewer edges,
    then to the lexicographically smallest edge list.  The greedy search
    starts from the empty graph and applies the best single edge addition,
    removal or reversal until no move improves the score.
    """
    _check_ess(ess)
    if variables is None:
        if not isinstance(dataset, Dataset):
            raise ValueError("variables are required unless a Dataset is given")
        variables = dataset.variables
    variables = tuple(variables)
    codes = _as_codes(dataset, variables)
    if codes.shape[0] == 0:
        raise ValueError("cannot select a structure from an empty dataset")
    cache = _FamilyCache(codes, variables, ess)

    if mode == "exhaustive":
        best, best_score = None, -math.inf
        for dag in enumerate_dags(variables, max_parents):
            s = cache.score(dag)
            if _better(s, dag, best_score, best):
                best, best_score = dag, s
        return ScoredModel(best, best_score)

    if mode == "greedy":
        current = Dag.empty(variables)
        current_score = cache.score(current)
        while True:
            move, move_score = None, -math.inf
            for cand in _neighbours(current, max_parents):
                s = cache.score(cand)
                if _better(s, cand, move_score, move):
                    move, move_score = cand, s
            if move is None or move_score <= current_score + TIE_TOLERANCE:
                return ScoredModel(current, current_score)
            current, current_score = move, move_score

    raise ValueError(f"unknown search mode {mode!r}; expected 'exhaustive' or 'greedy'")
