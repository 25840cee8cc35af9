"""Moment-matrix layout of the NPA relaxation for dichotomic observables.

Each party/input pair carries a +/-1 observable ``O = P_0 - P_1`` (outcome 0
is eigenvalue +1), so ``O^2 = 1`` and operators of different parties
commute. A word is a tuple of operators; its reduced form sorts operators by
party (stable within a party) and cancels equal neighbours. Words are
identified with their reverse, which is the real-symmetric relaxation: any
quantum moment matrix has a PSD real part with the same behavior.
"""

import itertools
from dataclasses import dataclass
from typing import Dict, List, Tuple

import numpy as np

from pecert.core.errors import DomainError
from pecert.engine.scenario import PARTY_NAMES, Scenario

Operator = Tuple[int, int]  # (party, input)
Word = Tuple[Operator, ...]


def reduce_word(word: Word) -> Word:
    ops = sorted(word, key=lambda op: op[0])
    changed = True
    while changed:
        changed = False
        for i in range(len(ops) - 1):
            if ops[i] == ops[i + 1]:
                del ops[i : i + 2]
                changed = True
                break
    return tuple(ops)


def canonical_word(word: Word) -> Word:
    forward = reduce_word(word)
    backward = reduce_word(tuple(reversed(forward)))
    return min(forward, backward)


def word_label(word: Word) -> str:
    if not word:
        return "1"
    return "".join(f"{PARTY_NAMES[p]}{x}" for p, x in word)


@dataclass(frozen=True, eq=False)
class MomentStructure:
    """Symbolic NPA layout.

    ``gamma_index[i, j]`` is the moment id of entry ``(i, j)`` of the moment
    matrix; moment 0 is the identity. ``T`` maps the moment vector to the
    full behavior vector (``probs = T @ m``).
    """

    scenario: Scenario
    level: int
    monomials: Tuple[Word, ...]
    moments: Tuple[Word, ...]
    gamma_index: np.ndarray
    T: np.ndarray

    @property
    def side(self) -> int:
        return len(self.monomials)

    @property
    def num_moments(self) -> int:
        return len(self.moments)

    def basis(self) -> np.ndarray:
        """Array of shape (num_moments, side, side) with Gamma(m) = sum_i m_i basis[i]."""
        out = np.zeros((self.num_moments, self.side, self.side))
        for i in range(self.side):
            for j in range(self.side):
                out[self.gamma_index[i, j], i, j] = 1.0
        return out

    def gamma(self, m: np.ndarray) -> np.ndarray:
        return np.asarray(m, dtype=float)[self.gamma_index]

    def behavior(self, m: np.ndarray) -> np.ndarray:
        return self.T @ np.asarray(m, dtype=float)


def _operators(scenario: Scenario) -> List[Operator]:
    return [
        (p, x) for p in range(scenario.parties) for x in range(scenario.inputs_per_party[p])
    ]


def _monomials(scenario: Scenario, level: int) -> List[Word]:
    ops = _operators(scenario)
    seen: Dict[Word, None] = {(): None}
    for length in range(1, level + 1):
        for word in itertools.product(ops, repeat=length):
            reduced = reduce_word(word)
            if len(reduced) == length and reduced not in seen:
                seen[reduced] = None
    return list(seen)


def build_moment_structure(scenario: Scenario, level: int) -> MomentStructure:
    scenario.require_supported()
    if level not in (1, 2):
        raise DomainError(f"unsupported NPA level {level}; use 1 or 2")
    monomials = _monomials(scenario, level)
    side = len(monomials)

    ids: Dict[Word, int] = {(): 0}
    gamma_index = np.zeros((side, side), dtype=np.int64)
    for i, left in enumerate(monomials):
        for j, right in enumerate(monomials):
            key = canonical_word(tuple(reversed(left)) + right)
            gamma_index[i, j] = ids.setdefault(key, len(ids))

    # correlators of every party subset at every input; those of size above
    # the matrix's reach (e.g. three-body terms at level 1) become free moments
    n = scenario.parties
    columns: Dict[int, np.ndarray] = {}
    for c, z in scenario.cells():
        outs = scenario.decode_outputs(c)
        ins = scenario.decode_inputs(z)
        row = scenario.index(c, z)
        for size in range(0, n + 1):
            for subset in itertools.combinations(range(n), size):
                word = canonical_word(tuple((p, ins[p]) for p in subset))
                k = ids.setdefault(word, len(ids))
                col = columns.setdefault(k, np.zeros(scenario.size))
                col[row] += (-1) ** sum(outs[p] for p in subset) / 2**n
    T_rows = np.zeros((scenario.size, len(ids)))
    for k, col in columns.items():
        T_rows[:, k] = col

    moments: List[Word] = [()] * len(ids)
    for word, k in ids.items():
        moments[k] = word
    return MomentStructure(
        scenario=scenario,
        level=level,
        monomials=tuple(monomials),
        moments=tuple(moments),
        gamma_index=gamma_index,
        T=T_rows,
    )
