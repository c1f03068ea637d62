"""Seeded generators shared by the test modules."""

import numpy as np

from actionbbn.event_log import ActionEvent
from actionbbn.network import Dag, Network, Variable

BINARY = ("s0", "s1")


def chain_network(strength=0.9, names=("Paction", "Caction", "Naction"), states=BINARY):
    """Binary chain whose CPT entries are ``strength`` / ``1 - strength``."""
    variables = tuple(Variable(n, states) for n in names)
    dag = Dag.from_edges(variables, [(names[0], names[1]), (names[1], names[2])])
    weak = 1 - strength
    copy = np.array([[strength, weak], [weak, strength]])
    return Network(dag, (np.array([[strength, weak]]), copy, copy))


def sample_network(network, n, seed):
    """Forward samples as integer codes, shape (n, variables)."""
    rng = np.random.default_rng(seed)
    dag = network.dag
    out = np.zeros((n, len(dag)), dtype=np.int64)
    for i in dag.topological_order():
        j = np.zeros(n, dtype=np.int64)
        for p in dag.parents[i]:
            j = j * dag.variables[p].cardinality + out[:, p]
        probs = network.cpts[i][j]
        u = rng.random(n)
        out[:, i] = np.minimum((u[:, None] >= np.cumsum(probs, axis=1)).sum(axis=1), probs.shape[1] - 1)
    return out


def random_network(rng, max_vars=4, max_states=2, edge_prob=0.5, zeros=False):
    n = int(rng.integers(1, max_vars + 1))
    variables = tuple(
        Variable(f"V{i}", tuple(f"v{i}_{k}" for k in range(int(rng.integers(2, max_states + 1)))))
        for i in range(n)
    )
    order = rng.permutation(n)
    parents = [[] for _ in range(n)]
    for a in range(n):
        for b in range(a + 1, n):
            if rng.random() < edge_prob:
                parents[order[b]].append(int(order[a]))
    dag = Dag(variables, tuple(tuple(p) for p in parents))
    cpts = []
    for i in range(n):
        table = rng.dirichlet(np.ones(variables[i].cardinality), size=dag.q(i))
        if zeros:
            table[table < 0.1] = 0.0
            table = table / table.sum(axis=1, keepdims=True)
        cpts.append(table)
    return Network(dag, tuple(cpts))


def events_from_actions(actions, start=0, step=3):
    return [ActionEvent(start + step * i, a) for i, a in enumerate(actions)]


def synthetic_records(n, actions, seed, next_of=None):
    """Transition records with random previous/current actions.

    ``next_of`` maps the current action to the next one; without it the
    next action is uniform and independent of everything else.
    """
    from actionbbn.event_log import TransitionRecord

    rng = np.random.default_rng(seed)
    records = []
    for i in range(n):
        p, c = (actions[int(k)] for k in rng.integers(len(actions), size=2))
        nxt = next_of[c] if next_of else actions[int(rng.integers(len(actions)))]
        t = 10 * i
        records.append(TransitionRecord(p, None, t, c, None, t + 2, nxt, None, t + 5, 2))
    return records


def uniform_next_network(actions):
    variables = tuple(Variable(n, tuple(actions)) for n in ("Paction", "Caction", "Naction"))
    dag = Dag.from_edges(variables, [("Paction", "Caction"), ("Caction", "Naction")])
    k = len(actions)
    return Network(dag, (np.full((1, k), 1 / k), np.full((k, k), 1 / k), np.full((k, k), 1 / k)))


def self_generated_events(network, n, seed):
    """Event stream whose next action is drawn from the network given the current one."""
    rng = np.random.default_rng(seed)
    states = network.variable("Naction").states
    cur_states = network.variable("Caction").states
    cpt = network.cpt("Naction")
    current = states[int(rng.integers(len(states)))]
    actions = [current]
    for _ in range(n - 1):
        row = cpt[cur_states.index(current)]
        current = states[int(rng.choice(len(states), p=row))]
        actions.append(current)
    return events_from_actions(actions)
