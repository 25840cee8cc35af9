"""
NPA relaxation: certified Bell bounds, membership and guessing probability.
"""

import math

import numpy as np
import pytest

from pecert.core.errors import DomainError
from pecert.engine.behaviors import ConditionalBehavior, make_tilted_chsh
from pecert.engine.functionals import chsh_alpha_functional, mermin_functional
from pecert.engine.quantum.moments import MomentStructure
from pecert.engine.quantum.npa import (
    guess_functional,
    guessing_probability_npa,
    level_bounds,
    max_linear,
    membership,
    moment_problem,
    nearest_quantum,
    random_quantum_behavior,
    structure_for,
)
from pecert.engine.quantum.sdp import OPTIMAL, SdpProblem, dump_sdpa, solve_sdp
from pecert.engine.scenario import OutputMap, Scenario
from tests.utils.utils import chsh_value, quantum_samples


def _pr_box(scenario: Scenario) -> np.ndarray:
    probs = np.zeros(scenario.size)
    for c, z in scenario.cells():
        a, b = scenario.decode_outputs(c)
        x, y = scenario.decode_inputs(z)
        if (a ^ b) == (x & y):
            probs[scenario.index(c, z)] = 0.5
    return probs


def _deterministic(scenario: Scenario, c: int = 0) -> np.ndarray:
    probs = np.zeros(scenario.size)
    for z in range(scenario.num_inputs):
        probs[scenario.index(c, z)] = 1.0
    return probs


def test_moment_matrix_sides(level1: MomentStructure, tripartite: Scenario) -> None:
    assert level1.side == 5
    assert structure_for(tripartite, 1).side == 7


def test_moment_structure_maps_identity(level1: MomentStructure) -> None:
    """T maps the identity moment alone to the uniform behavior"""
    m = np.zeros(level1.num_moments)
    m[0] = 1.0
    assert np.allclose(level1.behavior(m), 0.25)


def test_tsirelson_bound(level1: MomentStructure) -> None:
    q = max_linear(chsh_alpha_functional(1), level1)
    assert q.bound >= 2 * math.sqrt(2) - 1e-9
    assert q.bound == pytest.approx(2 * math.sqrt(2), abs=1e-6)
    assert chsh_value(q.behavior, level1.scenario) == pytest.approx(2 * math.sqrt(2), abs=1e-5)


def test_tilted_chsh_bound(level1: MomentStructure) -> None:
    """alpha = 8 gives 2 sqrt(65)"""
    q = max_linear(chsh_alpha_functional(8), level1)
    assert q.bound == pytest.approx(2 * math.sqrt(65), abs=1e-5)


def test_mermin_bound(tripartite: Scenario) -> None:
    q = max_linear(mermin_functional(), structure_for(tripartite, 1))
    assert q.bound == pytest.approx(4.0, abs=1e-6)
    assert q.bound >= 4.0 - 1e-9


def test_levels_are_monotone(bipartite: Scenario) -> None:
    """Level 2 is never looser than level 1"""
    b = chsh_alpha_functional(1) + 0.3 * guess_functional(
        bipartite, OutputMap.from_spec(bipartite, "A"), 0, 0
    )
    low, high = level_bounds(b, bipartite)
    assert high <= low + 1e-7


def test_membership_local_point(level1: MomentStructure) -> None:
    m = membership(_deterministic(level1.scenario), level1)
    assert m.inside
    assert m.functional is None


def test_membership_pr_box(level2: MomentStructure) -> None:
    """The PR box lies outside, with a separating direction"""
    pr = _pr_box(level2.scenario)
    m = membership(pr, level2)
    assert not m.inside
    assert m.distance > 0.05
    assert m.functional is not None
    assert m.nearest is not None
    assert float(m.functional @ pr) > float(m.functional @ m.nearest)


def test_membership_tsirelson_point(level2: MomentStructure) -> None:
    assert membership(make_tilted_chsh(1, 0), level2, tol=1e-5).inside


def test_membership_random_quantum(level2: MomentStructure) -> None:
    for q in quantum_samples(level2.scenario, 3, seed=4):
        assert membership(q, level2, tol=1e-5).inside


def test_nearest_point_of_pr_box(level1: MomentStructure) -> None:
    """The projection of the PR box sits on the Tsirelson boundary"""
    point = nearest_quantum(_pr_box(level1.scenario), level1)
    assert chsh_value(point.q, level1.scenario) == pytest.approx(2 * math.sqrt(2), abs=1e-4)


def test_random_quantum_behavior_is_seeded(bipartite: Scenario) -> None:
    a = random_quantum_behavior(bipartite, np.random.default_rng(1))
    b = random_quantum_behavior(bipartite, np.random.default_rng(1))
    assert np.array_equal(a.probs, b.probs)
    assert a.is_no_signalling(1e-9)


def test_solve_sdp_small_problem() -> None:
    """max x s.t. [[1, x], [x, 1]] >= 0 has value 1"""
    blocks = np.array([np.eye(2), [[0.0, 1.0], [1.0, 0.0]]])
    problem = SdpProblem.build(
        objective=np.array([0.0, 1.0]),
        blocks=blocks,
        eq_matrix=np.array([[1.0, 0.0]]),
        eq_rhs=np.ones(1),
        var_bound=np.ones(2),
        label="unit",
    )
    sol = solve_sdp(problem)
    assert sol.status == OPTIMAL
    assert sol.value == pytest.approx(1.0, abs=1e-7)
    assert 1.0 - 1e-9 <= sol.certified_bound <= 1.0 + 1e-6


def test_sdp_rejects_asymmetric_blocks() -> None:
    with pytest.raises(DomainError):
        SdpProblem.build(objective=np.zeros(1), blocks=np.array([[[0.0, 1.0], [0.0, 0.0]]]))


def test_dump_sdpa(tmp_path, level1: MomentStructure) -> None:
    problem = moment_problem(level1, chsh_alpha_functional(1), label="chsh")
    path = tmp_path / "chsh.dat-s"
    dump_sdpa(problem, path)
    lines = path.read_text().splitlines()
    assert lines[0].startswith('"pecert SDP')
    assert int(lines[1]) == level1.num_moments
    assert lines[2] == "2"
    assert lines[3].split()[0] == "5"


def test_guessing_deterministic(level1: MomentStructure, dmap_ab: OutputMap) -> None:
    p = ConditionalBehavior(level1.scenario, _deterministic(level1.scenario, 2))
    g = guessing_probability_npa(p, dmap_ab, level1, certify=False)
    assert g.value == pytest.approx(1.0, abs=1e-6)


def test_guessing_estimator_is_valid(level1: MomentStructure, dmap_ab: OutputMap) -> None:
    """sum q B >= max_{d,z} q(d|z) on quantum behaviors"""
    p = make_tilted_chsh(1, 0.1)
    g = guessing_probability_npa(p, dmap_ab, level1)
    assert (2 + math.sqrt(2)) / 8 * 0.9 <= g.value <= 1.0 + 1e-6
    assert g.certified_value >= g.value - 1e-6
    for q in quantum_samples(level1.scenario, 5, seed=9):
        probs = q.as_float()
        best = max(
            float(guess_functional(level1.scenario, dmap_ab, d, z) @ probs)
            for d in range(dmap_ab.num_values)
            for z in range(level1.scenario.num_inputs)
        )
        assert float(probs @ g.B_conditional) >= best - 1e-6
