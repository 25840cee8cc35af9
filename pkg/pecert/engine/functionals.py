"""Bell, Mermin and MDL functionals as coefficient vectors.

All functionals act on full behavior vectors (context-major, see
``engine.scenario``). Coefficients are Python ints or Fractions so they can
be applied exactly; ``bell_value`` handles the float case.
"""

import itertools
import math
from fractions import Fraction
from typing import List, Optional, Sequence, Tuple

import numpy as np

from pecert.core.config import numeric
from pecert.core.errors import DomainError
from pecert.engine.rational import round_up
from pecert.engine.scenario import Scenario

Functional = np.ndarray
BoundedFunctional = Tuple[np.ndarray, Fraction]


def correlator_functional(
    scenario: Scenario, parties: Sequence[int], inputs: Sequence[int]
) -> Functional:
    """Coefficients of ``<prod_{p in parties} O_p(inputs[p])>``.

    ``inputs`` is the full joint input; the correlator of a party subset is
    read off that single context.
    """
    b = np.zeros(scenario.size, dtype=object)
    z = scenario.encode_inputs(inputs)
    for c in range(scenario.num_outputs):
        outs = scenario.decode_outputs(c)
        b[scenario.index(c, z)] = (-1) ** sum(outs[p] for p in parties)
    return b


def marginal_functional(
    scenario: Scenario, party: int, output: int, party_input: int
) -> Functional:
    """Coefficients of ``mu_party(output | party_input)``, read off the context
    where every other party uses input 0."""
    b = np.zeros(scenario.size, dtype=object)
    ins = [0] * scenario.parties
    ins[party] = party_input
    z = scenario.encode_inputs(ins)
    for c in range(scenario.num_outputs):
        if scenario.decode_outputs(c)[party] == output:
            b[scenario.index(c, z)] = 1
    return b


def tsirelson_bound(denominator: int = numeric.BOUND_DENOMINATOR) -> Fraction:
    """2*sqrt(2) rounded up to a rational."""
    return round_up(2 * math.sqrt(2), denominator)


def chsh_alpha_functional(alpha: float = 1) -> Functional:
    """alpha (<A0B0> + <A0B1>) + <A1B0> - <A1B1> on the bipartite scenario."""
    scenario = Scenario.bipartite()
    coeff = Fraction(alpha) if isinstance(alpha, (int, Fraction)) else alpha
    terms = {(0, 0): coeff, (0, 1): coeff, (1, 0): 1, (1, 1): -1}
    b = np.zeros(scenario.size, dtype=object)
    for (x, y), weight in terms.items():
        b = b + weight * correlator_functional(scenario, (0, 1), (x, y))
    if not isinstance(coeff, (int, Fraction)):
        b = b.astype(float)
    return b


def chsh_variant(
    scenario: Scenario, pair: Tuple[int, int], signs: Tuple[int, int, int], context: Sequence[int]
) -> Functional:
    """CHSH symmetry sum_{xy} (-1)^{xy + s0 x + s1 y + s2} <O_i(x) O_j(y)>.

    ``context`` fixes the inputs of the parties outside ``pair``.
    """
    s0, s1, s2 = signs
    b = np.zeros(scenario.size, dtype=object)
    for x, y in itertools.product((0, 1), repeat=2):
        ins = list(context)
        ins[pair[0]] = x
        ins[pair[1]] = y
        sign = (-1) ** ((x * y + s0 * x + s1 * y + s2) % 2)
        b = b + sign * correlator_functional(scenario, pair, ins)
    return b


def chsh_family(
    scenario: Scenario, bound: Optional[Fraction] = None
) -> List[BoundedFunctional]:
    """The eight CHSH symmetries, each paired with ``bound`` (2*sqrt(2) by default)."""
    if scenario != Scenario.bipartite():
        raise DomainError("the CHSH family is defined on the 2-2-2 scenario")
    bound = tsirelson_bound() if bound is None else Fraction(bound)
    return [
        (chsh_variant(scenario, (0, 1), signs, (0, 0)), bound)
        for signs in itertools.product((0, 1), repeat=3)
    ]


def lifted_chsh_family(
    scenario: Scenario, kappa: Optional[Fraction] = None
) -> List[BoundedFunctional]:
    """CHSH symmetries between two parties, lifted by the third party's
    (input, output) pair.

    Each entry encodes ``sum_{xy} s_xy E_{ij}(x, y; c_k, z_k) - kappa mu_k(c_k|z_k) <= 0``
    where ``E_{ij}(x, y; c_k, z_k) = sum_{c: c_k fixed} (-1)^{c_i + c_j} mu(c|x, y, z_k)``.
    96 inequalities on the 3-2-2 scenario.
    """
    if scenario != Scenario.tripartite():
        raise DomainError("lifted CHSH is defined on the 3-2-2 scenario")
    kappa = tsirelson_bound() if kappa is None else Fraction(kappa)
    family: List[BoundedFunctional] = []
    for pair in ((0, 1), (0, 2), (1, 2)):
        (k,) = tuple({0, 1, 2} - set(pair))
        for z_k, c_k in itertools.product((0, 1), repeat=2):
            for signs in itertools.product((0, 1), repeat=3):
                b = np.zeros(scenario.size, dtype=object)
                for x, y in itertools.product((0, 1), repeat=2):
                    ins = [0, 0, 0]
                    ins[pair[0]], ins[pair[1]], ins[k] = x, y, z_k
                    z = scenario.encode_inputs(ins)
                    sign = (-1) ** ((x * y + signs[0] * x + signs[1] * y + signs[2]) % 2)
                    for c in range(scenario.num_outputs):
                        outs = scenario.decode_outputs(c)
                        if outs[k] != c_k:
                            continue
                        b[scenario.index(c, z)] += sign * (-1) ** (outs[pair[0]] + outs[pair[1]])
                b = b - kappa * marginal_functional(scenario, k, c_k, z_k)
                family.append((b, Fraction(0)))
    return family


def mermin_functional() -> Functional:
    """<A0B0C0> - <A0B1C1> - <A1B0C1> - <A1B1C0>."""
    scenario = Scenario.tripartite()
    terms = {(0, 0, 0): 1, (0, 1, 1): -1, (1, 0, 1): -1, (1, 1, 0): -1}
    b = np.zeros(scenario.size, dtype=object)
    for ins, weight in terms.items():
        b = b + weight * correlator_functional(scenario, (0, 1, 2), ins)
    return b


def mdl_functional(delta: float) -> Functional:
    """Coefficients of the MDL expression on joint p(a, b, x, y):

    h = p(0000) (1/2 - delta)^2 - (p(0101) + p(1010) + p(0011)) (1/2 + delta)^2,

    with strings ordered as a, b, x, y.
    """
    if not 0 <= delta < 0.5:
        raise DomainError("delta must lie in [0, 1/2)")
    scenario = Scenario.bipartite()
    d = Fraction(delta) if isinstance(delta, (int, Fraction)) else delta
    low = (Fraction(1, 2) - d) ** 2
    high = (Fraction(1, 2) + d) ** 2
    b = np.zeros(scenario.size, dtype=object)
    b[scenario.index(scenario.encode_outputs((0, 0)), scenario.encode_inputs((0, 0)))] = low
    for abxy in ((0, 1, 0, 1), (1, 0, 1, 0), (0, 0, 1, 1)):
        c = scenario.encode_outputs(abxy[:2])
        z = scenario.encode_inputs(abxy[2:])
        b[scenario.index(c, z)] = -high
    if not isinstance(d, (int, Fraction)):
        b = b.astype(float)
    return b
