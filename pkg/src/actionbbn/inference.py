"""Queries on a fitted network: joint probabilities and posteriors.

Exact posteriors enumerate every completion of the evidence, which is
exponential in the number of free variables and meant for small networks.
Likelihood weighting gives a seeded Monte Carlo estimate.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np

from .network import Network, NetworkError, parent_config_index

# recorded in evaluation output so sampled runs can be reproduced
RNG_ALGORITHM = "numpy.random.Generator(PCG64)"

CURRENT_ACTION = "Caction"
NEXT_ACTION = "Naction"


class InferenceError(ValueError):
    pass


@dataclass(frozen=True)
class Posterior:
    variable: str
    states: tuple[str, ...]
    probabilities: tuple[float, ...]
    fallback: bool = False

    def __post_init__(self):
        object.__setattr__(self, "probabilities", tuple(float(p) for p in self.probabilities))

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.states, self.probabilities))

    def __getitem__(self, state: str) -> float:
        return self.probabilities[self.states.index(state)]


def _check_evidence(network: Network, evidence: Mapping[str, str]) -> dict[int, int]:
    coded = {}
    for name, state in evidence.items():
        i = network.dag.index(name)
        coded[i] = network.variables[i].index(state)
    return coded


def _joint_coded(network: Network, states: list[int]) -> float:
    dag = network.dag
    p = 1.0
    for i, cpt in enumerate(network.cpts):
        j = 0
        for parent in dag.parents[i]:
            j = j * dag.variables[parent].cardinality + states[parent]
        p *= cpt[j, states[i]]
        if p == 0.0:
            return 0.0
    return p


def joint_probability(network: Network, assignment: Mapping[str, str]) -> float:
    """Product over variables of P(state | parent configuration)."""
    missing = [v.name for v in network.variables if v.name not in assignment]
    if missing:
        raise InferenceError(f"assignment is missing {', '.join(missing)}")
    p = 1.0
    for i, var in enumerate(network.variables):
        j = parent_config_index(network.dag, i, assignment)
        p *= float(network.cpts[i][j, var.index(assignment[var.name])])
    return p


def posterior_exact(network: Network, evidence: Mapping[str, str], query: str) -> Posterior:
    """P(query | evidence) by summing the joint over all completions."""
    q = network.dag.index(query)
    if query in evidence:
        raise InferenceError(f"query variable {query!r} is part of the evidence")
    fixed = _check_evidence(network, evidence)
    free = [i for i in range(len(network.variables)) if i not in fixed]
    sizes = [network.variables[i].cardinality for i in free]
    totals = np.zeros(network.variables[q].cardinality)
    states = [0] * len(network.variables)
    for i, s in fixed.items():
        states[i] = s
    for combo in itertools.product(*(range(n) for n in sizes)):
        for i, s in zip(free, combo):
            states[i] = s
        totals[states[q]] += _joint_coded(network, states)
    z = math.fsum(totals)
    if z <= 0.0:
        raise InferenceError("inconsistent evidence: it has zero probability")
    return Posterior(query, network.variables[q].states, tuple(totals / z))


def posterior_lw(
    network: Network,
    evidence: Mapping[str, str],
    query: str,
    n_samples: int = 100_000,
    seed: Optional[int] = 0,
) -> Posterior:
    """Likelihood-weighted estimate of P(query | evidence).

    Non-evidence variables are drawn in topological order from their CPT
    rows; each sample is weighted by the probability of the evidence values
    given its sampled parents.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be at least 1")
    q = network.dag.index(query)
    if query in evidence:
        raise InferenceError(f"query variable {query!r} is part of the evidence")
    fixed = _check_evidence(network, evidence)
    rng = np.random.default_rng(seed)
    dag = network.dag
    n = n_samples
    samples = np.zeros((n, len(dag)), dtype=np.int64)
    weights = np.ones(n)
    for i in dag.topological_order():
        cpt = network.cpts[i]
        j = np.zeros(n, dtype=np.int64)
        for p in dag.parents[i]:
            j = j * dag.variables[p].cardinality + samples[:, p]
        if i in fixed:
            samples[:, i] = fixed[i]
            weights *= cpt[j, fixed[i]]
        else:
            cumulative = np.cumsum(cpt, axis=1)[j]
            u = rng.random(n)[:, None]
            drawn = (u >= cumulative).sum(axis=1)
            samples[:, i] = np.minimum(drawn, cpt.shape[1] - 1)
    totals = np.bincount(samples[:, q], weights=weights, minlength=dag.variables[q].cardinality)
    z = totals.sum()
    if z <= 0.0:
        raise InferenceError(f"no support found for the evidence in {n_samples} samples")
    return Posterior(query, dag.variables[q].states, tuple(totals / z))


def predict_next(network: Network, current_action: Optional[str]) -> Posterior:
    """Distribution of the next action given the current one.

    When the next-action node hangs directly off the current-action node the
    answer is a single CPT row. An unknown or missing current action yields
    the next-action marginal with ``fallback`` set.
    """
    for name in (CURRENT_ACTION, NEXT_ACTION):
        if name not in network.dag.names:
            raise NetworkError(f"network has no {name!r} variable")
    nxt = network.dag.index(NEXT_ACTION)
    cur = network.dag.index(CURRENT_ACTION)
    states = network.variables[nxt].states
    if current_action is None or current_action not in network.variables[cur].states:
        marginal = posterior_exact(network, {}, NEXT_ACTION)
        return Posterior(NEXT_ACTION, states, marginal.probabilities, fallback=True)
    parents = network.dag.parents[nxt]
    if parents == (cur,):
        row = network.cpts[nxt][network.variables[cur].index(current_action)]
        return Posterior(NEXT_ACTION, states, tuple(row))
    return posterior_exact(network, {CURRENT_ACTION: current_action}, NEXT_ACTION)
