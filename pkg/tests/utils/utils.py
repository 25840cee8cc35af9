import itertools
from fractions import Fraction
from typing import List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.optimize import linprog

from pecert.engine.behaviors import ConditionalBehavior
from pecert.engine.polytope import HPolytope
from pecert.engine.quantum.npa import random_quantum_behavior
from pecert.engine.scenario import OutputMap, Scenario

Vector = Tuple[Fraction, ...]


def quantum_samples(
    scenario: Scenario, count: int, seed: int = 0
) -> List[ConditionalBehavior]:
    """Seeded Born-rule behaviors (random qubit states and observables)."""
    rng = np.random.default_rng(seed)
    return [random_quantum_behavior(scenario, rng) for _ in range(count)]


def _solve_exact(rows: Sequence[Sequence[Fraction]], rhs: Sequence[Fraction]) -> Optional[Vector]:
    """Unique solution of a square exact system, or None when singular."""
    n = len(rows)
    aug = [list(r) + [b] for r, b in zip(rows, rhs)]
    for col in range(n):
        piv = next((i for i in range(col, n) if aug[i][col] != 0), None)
        if piv is None:
            return None
        aug[col], aug[piv] = aug[piv], aug[col]
        inv = 1 / aug[col][col]
        aug[col] = [a * inv for a in aug[col]]
        for i in range(n):
            if i != col and aug[i][col] != 0:
                f = aug[i][col]
                aug[i] = [a - f * b for a, b in zip(aug[i], aug[col])]
    return tuple(row[n] for row in aug)


def brute_force_vertices(P: HPolytope) -> Set[Vector]:
    """Solve every d-subset of inequalities as equalities and keep the
    feasible basic solutions."""
    d = P.ambient_dim
    found: Set[Vector] = set()
    for subset in itertools.combinations(P.inequalities, d):
        x = _solve_exact([h.normal for h in subset], [h.bound for h in subset])
        if x is not None and P.contains(x):
            found.add(x)
    return found


def vertex_guessing_lp(
    target: np.ndarray,
    vertices: np.ndarray,
    scenario: Scenario,
    dmap: OutputMap,
    z: int,
) -> float:
    """max sum_d mu_d(d|z) over explicit vertex weights w_{d,v} >= 0 with
    sum_{d,v} w_{d,v} v = target."""
    nv = vertices.shape[0]
    table = dmap.table
    k = scenario.num_outputs
    c = []
    for d in range(dmap.num_values):
        gain = np.zeros(scenario.size)
        for cc in range(k):
            if table[cc] == d:
                gain[scenario.index(cc, z)] = 1.0
        c.append(-(vertices @ gain))
    A_eq = np.hstack([vertices.T] * dmap.num_values)
    A_eq = np.vstack([A_eq, np.ones((1, nv * dmap.num_values))])
    b_eq = np.concatenate([target, [1.0]])
    res = linprog(
        np.concatenate(c),
        A_eq=A_eq,
        b_eq=b_eq,
        bounds=[(0, None)] * (nv * dmap.num_values),
        method="highs",
    )
    assert res.status == 0, res.message
    return float(-res.fun)


def chsh_value(probs: np.ndarray, scenario: Scenario) -> float:
    """<A0B0> + <A0B1> + <A1B0> - <A1B1> from a bipartite full vector."""
    total = 0.0
    for z in range(scenario.num_inputs):
        x, y = scenario.decode_inputs(z)
        corr = 0.0
        for c in range(scenario.num_outputs):
            a, b = scenario.decode_outputs(c)
            corr += (-1) ** (a + b) * probs[scenario.index(c, z)]
        total += -corr if (x, y) == (1, 1) else corr
    return total
