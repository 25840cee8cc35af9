"""
Exact vertex enumeration, incremental cuts and the SV input polytopes.
"""

from fractions import Fraction

import numpy as np
import pytest
from sqlalchemy.orm import Session

from pecert import crud
from pecert.core.errors import DomainError, InfeasibleError, UnboundedError
from pecert.engine.behaviors import uniform_behavior
from pecert.engine.functionals import chsh_alpha_functional, tsirelson_bound
from pecert.engine.polytope import (
    Halfspace,
    HPolytope,
    SVConvention,
    SVSource,
    VPolytope,
    add_halfspace,
    box_polytope,
    enumerate_vertices,
    enumerate_vertices_cached,
    facets_of,
    halfspace_from_functional,
    implied_by,
    joint_product_vertices,
    load_polytope,
    ns_polytope,
    save_polytope,
    sv2_polytope,
    sv_polytope,
    tv_distance,
)
from pecert.engine.scenario import Scenario
from pecert.schemas.polytope import CutProvenance
from tests.utils.utils import brute_force_vertices


def _frac(*values: float) -> tuple:
    return tuple(Fraction(v) for v in values)


def test_unit_square_cut() -> None:
    """x + y <= 1 cuts the unit square to a triangle"""
    P = box_polytope(2).with_halfspace(Halfspace((1, 1), 1))
    V = enumerate_vertices(P)
    assert set(V.vertices) == {_frac(0, 0), _frac(1, 0), _frac(0, 1)}


def test_cube_has_eight_vertices() -> None:
    V = enumerate_vertices(box_polytope(3))
    assert len(V) == 8
    assert set(V.vertices) == brute_force_vertices(box_polytope(3))


def test_cut_cube_matches_brute_force() -> None:
    P = box_polytope(3).with_halfspace(Halfspace((1, 1, 1), Fraction(3, 2)))
    assert set(enumerate_vertices(P).vertices) == brute_force_vertices(P)


def test_unbounded_polyhedron() -> None:
    P = HPolytope(
        2,
        (
            Halfspace((1, 0), 1),
            Halfspace((-1, 0), 0),
            Halfspace((0, 1), 1),
        ),
    )
    with pytest.raises(UnboundedError) as exc:
        enumerate_vertices(P)
    assert exc.value.ray


def test_empty_polytope() -> None:
    P = box_polytope(2).with_halfspace(Halfspace((1, 1), -1))
    with pytest.raises(InfeasibleError):
        enumerate_vertices(P)


def test_unknown_backend() -> None:
    with pytest.raises(DomainError):
        enumerate_vertices(box_polytope(2), backend="lrs")


def test_duplicate_halfspaces_collapse() -> None:
    P = HPolytope(1, (Halfspace((1,), 1), Halfspace((2,), 2), Halfspace((-1,), 0)))
    assert len(P.inequalities) == 2


def test_ns_polytope_sizes(bipartite: Scenario, tripartite: Scenario) -> None:
    """16 facets in dimension 8, 64 in dimension 26"""
    P2 = ns_polytope(bipartite)
    assert (len(P2.inequalities), P2.ambient_dim) == (16, 8)
    P3 = ns_polytope(tripartite)
    assert (len(P3.inequalities), P3.ambient_dim) == (64, 26)


def test_ns_vertices(bipartite: Scenario, ns_vertices: VPolytope) -> None:
    """16 local deterministic points and 8 PR boxes"""
    assert len(ns_vertices) == 24
    full = ns_vertices.full_vertices(bipartite, exact=True)
    integral = [row for row in full if all(x in (0, 1) for x in row)]
    assert len(integral) == 16
    chsh = chsh_alpha_functional(1)
    assert max(sum(b * x for b, x in zip(chsh, row)) for row in full) == 4


@pytest.mark.slow
def test_ns_vertices_brute_force(bipartite: Scenario, ns_vertices: VPolytope) -> None:
    assert set(ns_vertices.vertices) == brute_force_vertices(ns_polytope(bipartite))


def test_add_halfspace_matches_batch(bipartite: Scenario, ns_vertices: VPolytope) -> None:
    """Incremental cut agrees with re-enumerating from scratch"""
    cut = halfspace_from_functional(bipartite, chsh_alpha_functional(1), tsirelson_bound())
    prov = CutProvenance(algorithm="test", iteration=1)
    incremental = add_halfspace(ns_vertices, cut, prov)
    batch = enumerate_vertices(ns_polytope(bipartite).with_halfspace(cut))
    assert incremental.vertices == batch.vertices
    assert incremental.cuts == (prov,)
    assert all(cut.contains(v) for v in incremental.vertices)


def test_add_halfspace_sequence(bipartite: Scenario, ns_vertices: VPolytope) -> None:
    """Two cuts in a row still agree with batch enumeration"""
    first = halfspace_from_functional(bipartite, chsh_alpha_functional(1), tsirelson_bound())
    second = halfspace_from_functional(bipartite, -chsh_alpha_functional(1), tsirelson_bound())
    V = add_halfspace(add_halfspace(ns_vertices, first), second)
    batch = enumerate_vertices(ns_polytope(bipartite).with_halfspace(first).with_halfspace(second))
    assert V.vertices == batch.vertices


def test_add_halfspace_needs_source() -> None:
    V = VPolytope(2, (_frac(0, 0), _frac(1, 0)))
    with pytest.raises(DomainError):
        add_halfspace(V, Halfspace((1, 1), 1))


def test_add_halfspace_empty() -> None:
    V = enumerate_vertices(box_polytope(2))
    with pytest.raises(InfeasibleError):
        add_halfspace(V, Halfspace((1, 1), -1))


def test_implied_by(bipartite: Scenario, ns_vertices: VPolytope) -> None:
    chsh = chsh_alpha_functional(1)
    assert implied_by(ns_vertices, halfspace_from_functional(bipartite, chsh, 4))
    cut = halfspace_from_functional(bipartite, chsh, tsirelson_bound())
    assert not implied_by(ns_vertices, cut)


def test_facets_drop_redundant_rows() -> None:
    P = box_polytope(2).with_halfspace(Halfspace((1, 1), 3))
    V = enumerate_vertices(P)
    assert len(facets_of(P, V).inequalities) == 4


def test_tv_distance(bipartite: Scenario) -> None:
    u = uniform_behavior(bipartite).probs
    det = np.zeros(bipartite.size)
    det[[bipartite.index(0, z) for z in range(bipartite.num_inputs)]] = 1.0
    assert tv_distance(u, det, bipartite) == pytest.approx(0.75)
    assert tv_distance(u, u, bipartite) == 0.0
    with pytest.raises(DomainError):
        tv_distance(u, det[:8], bipartite)


def test_sv_conventions() -> None:
    """Box extremes are 1/2 +/- delta, the theorem reading 1/2 +/- delta/2"""
    src = SVSource(Fraction(1, 10))
    assert set(sv_polytope(src).vertices) == {
        (Fraction(3, 5), Fraction(2, 5)),
        (Fraction(2, 5), Fraction(3, 5)),
    }
    assert set(sv_polytope(src, SVConvention.theorem).vertices) == {
        (Fraction(11, 20), Fraction(9, 20)),
        (Fraction(9, 20), Fraction(11, 20)),
    }


def test_sv2_vertices() -> None:
    """At delta = 0.1, u00 = (0.3025, 0.2475, 0.2475, 0.2025)"""
    src = SVSource(Fraction(1, 10))
    V = sv2_polytope(src, SVConvention.theorem)
    assert len(V) == 4
    u00 = (Fraction(121, 400), Fraction(99, 400), Fraction(99, 400), Fraction(81, 400))
    assert u00 in V.vertices
    for v in V.vertices:
        assert sum(v) == 1
        # rank one: p(00) p(11) == p(01) p(10)
        assert v[0] * v[3] == v[1] * v[2]
    box = sv2_polytope(src)
    assert (Fraction(9, 25), Fraction(6, 25), Fraction(6, 25), Fraction(4, 25)) in box.vertices


def test_sv_source_range() -> None:
    with pytest.raises(DomainError):
        SVSource(Fraction(1, 2))


def test_joint_product_vertices(bipartite: Scenario, ns_vertices: VPolytope) -> None:
    """24 conditional vertices times 4 SV vertices"""
    joint = joint_product_vertices(ns_vertices, sv2_polytope(SVSource(Fraction(1, 10))), bipartite)
    assert len(joint) == 96
    assert joint.chart_id == "joint-2-2-2"
    assert all(sum(v) == 1 for v in joint.vertices)


def test_polytope_file(tmp_path, ns_vertices: VPolytope) -> None:
    path = tmp_path / "ns.json"
    save_polytope(path, ns_vertices, extra={"note": "bipartite"})
    loaded = load_polytope(path)
    assert loaded.vertices == ns_vertices.vertices
    assert loaded.fingerprint == ns_vertices.fingerprint
    assert loaded.source is not None
    assert len(loaded.source.inequalities) == 16


def test_vertex_cache(db: Session, bipartite: Scenario) -> None:
    P = ns_polytope(bipartite)
    first = enumerate_vertices_cached(P, db)
    entry = crud.vertex_cache.get_by_key(db, key=P.cache_key())
    assert entry is not None
    assert entry.vertex_count == 24
    second = enumerate_vertices_cached(P, db)
    assert second.vertices == first.vertices
