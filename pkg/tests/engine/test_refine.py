"""
NearV and MaxGP refinement on the bipartite scenario (level-1 relaxation).
"""

from dataclasses import replace

import numpy as np
import pytest

from pecert.engine import refine
from pecert.engine.behaviors import make_tilted_chsh, uniform_inputs
from pecert.engine.polytope import (
    VPolytope,
    halfspace_from_functional,
    implied_by,
    ns_polytope,
)
from pecert.engine.quantum.moments import MomentStructure
from pecert.engine.refine import guessing_strategies, make_cut, maxgp, nearv
from pecert.engine.rational import to_float
from pecert.engine.scenario import OutputMap, Scenario
from pecert.schemas.run import RefinementConfig, ZPolicy
from tests.utils.utils import quantum_samples, vertex_guessing_lp


def _cfg(**kwargs) -> RefinementConfig:
    return RefinementConfig(level=1, **{"iterations": 2, "seed": 3, **kwargs})


def _assert_quantum_valid(cuts, scenario: Scenario) -> None:
    for q in quantum_samples(scenario, 20, seed=12):
        probs = q.as_float()
        for cut in cuts:
            coeff = np.array([float(x) for x in cut.functional])
            assert float(coeff @ probs) <= float(cut.bound) + 1e-7


def test_guessing_lp_matches_vertex_lp(
    bipartite: Scenario, dmap_ab: OutputMap, ns_vertices: VPolytope
) -> None:
    """Halfspace and vertex formulations give the same guessing probability"""
    p = make_tilted_chsh(1, 0.1)
    over_h = guessing_strategies(p, 0, ns_polytope(bipartite), dmap_ab)
    over_v = guessing_strategies(p, 0, ns_vertices, dmap_ab)
    reference = vertex_guessing_lp(
        p.as_float(), ns_vertices.full_vertices(bipartite), bipartite, dmap_ab, 0
    )
    assert over_h.value == pytest.approx(reference, abs=1e-7)
    assert over_v.value == pytest.approx(reference, abs=1e-7)


def test_strategies_recompose_behavior(bipartite: Scenario, dmap_ab: OutputMap) -> None:
    p = make_tilted_chsh(1, 0.2)
    result = guessing_strategies(p, 1, ns_polytope(bipartite), dmap_ab)
    assert sum(s.weight for s in result.strategies) == pytest.approx(1.0, abs=1e-8)
    total = sum(s.weight * s.behavior for s in result.strategies)
    assert np.allclose(total, p.as_float(), atol=1e-7)
    assert result.z == 1


def test_averaged_guessing(bipartite: Scenario, dmap_ab: OutputMap) -> None:
    """Averaging over z never beats the best single input"""
    p = make_tilted_chsh(1, 0.1)
    P = ns_polytope(bipartite)
    averaged = guessing_strategies(p, None, P, dmap_ab)
    best = max(guessing_strategies(p, z, P, dmap_ab).value for z in range(4))
    assert 0.0 < averaged.value <= best + 1e-8
    assert averaged.z is None


def test_joint_behavior_guessing(bipartite: Scenario, dmap_ab: OutputMap) -> None:
    p = make_tilted_chsh(1, 0.1)
    joint = p.to_joint(to_float(uniform_inputs(bipartite)))
    P = ns_polytope(bipartite)
    assert guessing_strategies(joint, 2, P, dmap_ab).value == pytest.approx(
        guessing_strategies(p, 2, P, dmap_ab).value
    )


def test_make_cut_vanishing_direction(level1: MomentStructure) -> None:
    assert make_cut(np.zeros(16), level1, "nearv", 0, "zero") is None


def test_make_cut_is_quantum_valid(level1: MomentStructure, bipartite: Scenario) -> None:
    direction = np.random.default_rng(7).normal(size=16)
    cut = make_cut(direction, level1, "nearv", 0, "random")
    assert cut is not None
    assert float(cut.bound) >= cut.quantum_bound
    _assert_quantum_valid([cut], bipartite)


def test_nearv_zero_iterations(ns_vertices: VPolytope, level1: MomentStructure) -> None:
    p = make_tilted_chsh(1, 0.1)
    result = nearv(p, ns_polytope(p.scenario), _cfg(iterations=0), level1, ns_vertices)
    assert result.cuts == []
    assert result.polytope.vertices == ns_vertices.vertices


def test_nearv_cuts(ns_vertices: VPolytope, level1: MomentStructure) -> None:
    """Cuts remove a PR box and never a quantum behavior"""
    p = make_tilted_chsh(1, 0.1)
    result = nearv(p, ns_polytope(p.scenario), _cfg(), level1, ns_vertices)
    assert 1 <= len(result.cuts) <= 2
    assert len(result.records) == len(result.cuts)
    assert result.polytope.cuts
    _assert_quantum_valid(result.cuts, p.scenario)
    probs = p.as_float()
    for cut in result.cuts:
        assert float(np.array([float(x) for x in cut.functional]) @ probs) <= float(cut.bound)


def test_nearv_is_deterministic(ns_vertices: VPolytope, level1: MomentStructure) -> None:
    p = make_tilted_chsh(1, 0.1)
    P = ns_polytope(p.scenario)
    a = nearv(p, P, _cfg(iterations=1), level1, ns_vertices)
    b = nearv(p, P, _cfg(iterations=1), level1, ns_vertices)
    assert [list(c.functional) for c in a.cuts] == [list(c.functional) for c in b.cuts]
    assert a.polytope.vertices == b.polytope.vertices


def test_maxgp_lowers_guessing(
    ns_vertices: VPolytope, level1: MomentStructure, dmap_ab: OutputMap
) -> None:
    p = make_tilted_chsh(1, 0.1)
    p_z = [0.25] * 4
    P = ns_polytope(p.scenario)
    before = guessing_strategies(p, 0, P, dmap_ab).value
    cfg = _cfg(iterations=1, z_policy=ZPolicy.fixed, fixed_z=0)
    result = maxgp(p, p_z, P, cfg, dmap_ab, level1, ns_vertices)
    assert result.cuts
    _assert_quantum_valid(result.cuts, p.scenario)
    after = guessing_strategies(p, 0, result.polytope, dmap_ab).value
    assert after <= before + 1e-8
    assert all(r.z == 0 for r in result.records)


@pytest.fixture
def loose_cuts(monkeypatch: pytest.MonkeyPatch) -> None:
    """Cuts whose bound is raised until they separate nothing."""
    original = refine.make_cut

    def make_loose_cut(direction, structure, algorithm, iteration, source):
        cut = original(direction, structure, algorithm, iteration, source)
        if cut is None:
            return None
        bound = cut.bound + 10
        halfspace = halfspace_from_functional(structure.scenario, cut.functional, bound)
        return replace(cut, bound=bound, halfspace=halfspace)

    monkeypatch.setattr(refine, "make_cut", make_loose_cut)


def test_nearv_skips_non_separating_cut(
    loose_cuts: None, ns_vertices: VPolytope, level1: MomentStructure
) -> None:
    p = make_tilted_chsh(1, 0.1)
    result = nearv(p, ns_polytope(p.scenario), _cfg(), level1, ns_vertices)
    assert result.cuts == []
    assert result.records == []
    assert result.polytope.vertices == ns_vertices.vertices


def test_maxgp_skips_non_separating_cut(
    loose_cuts: None, ns_vertices: VPolytope, level1: MomentStructure, dmap_ab: OutputMap
) -> None:
    p = make_tilted_chsh(1, 0.1)
    cfg = _cfg(iterations=1, z_policy=ZPolicy.fixed, fixed_z=0)
    result = maxgp(p, [0.25] * 4, ns_polytope(p.scenario), cfg, dmap_ab, level1, ns_vertices)
    assert result.cuts == []
    assert result.polytope.vertices == ns_vertices.vertices


def test_refinement_is_nested(
    bipartite: Scenario, ns_vertices: VPolytope, level1: MomentStructure
) -> None:
    """Each refinement lies inside the previous one and keeps the quantum vertices"""
    p = make_tilted_chsh(1, 0.1)
    P = ns_polytope(bipartite)
    one = nearv(p, P, _cfg(iterations=1), level1, ns_vertices)
    two = nearv(p, P, _cfg(iterations=2), level1, ns_vertices)
    assert all(P.contains(v) for v in two.polytope.vertices)
    for cut in one.cuts + two.cuts:
        assert implied_by(two.polytope, cut.halfspace)

    full = ns_vertices.full_vertices(bipartite)
    local = {
        v for v, row in zip(ns_vertices.vertices, full) if np.all((row == 0) | (row == 1))
    }
    assert len(local) == 16
    assert local <= set(one.polytope.vertices)
    assert local <= set(two.polytope.vertices)


@pytest.mark.slow
def test_nearv_level_two(ns_vertices: VPolytope, level2: MomentStructure) -> None:
    p = make_tilted_chsh(1, 0.15)
    cfg = RefinementConfig(level=2, iterations=10, nearest=10, seed=0)
    result = nearv(p, ns_polytope(p.scenario), cfg, level2, ns_vertices)
    assert result.cuts
    probs = p.as_float()
    for cut in result.cuts:
        assert float(np.array([float(x) for x in cut.functional]) @ probs) <= float(cut.bound)
    _assert_quantum_valid(result.cuts, p.scenario)
