"""Exact-arithmetic convex polytopes.

H-representations are lists of halfspaces ``h . x <= eta`` and
V-representations are vertex lists, both over ``fractions.Fraction``.
Vertices are found with the double description method on the homogenised
cone ``{(x, t) : h . x - eta t <= 0, t >= 0}``; adjacency of extreme rays is
decided combinatorially from their sets of tight constraints, so every step
is exact.
"""

import hashlib
import itertools
import logging
from dataclasses import dataclass, field
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from sqlalchemy.orm import Session

from pecert.core.config import numeric
from pecert.core.errors import DomainError, InfeasibleError, UnboundedError
from pecert.core.io import (
    atomic_write_json,
    fingerprint,
    format_rational,
    parse_rational,
    read_json,
)
from pecert.engine.scenario import NoSignallingChart, Scenario
from pecert.schemas.polytope import CutProvenance, HalfspaceRecord, PolytopeFile

logger = logging.getLogger(__name__)

Vector = Tuple[Fraction, ...]


def _vec(values: Iterable[Any]) -> Vector:
    return tuple(Fraction(v) for v in values)


def _dot(a: Sequence[Fraction], b: Sequence[Fraction]) -> Fraction:
    total = Fraction(0)
    for x, y in zip(a, b):
        if x and y:
            total += x * y
    return total


@dataclass(frozen=True)
class Halfspace:
    """``normal . x <= bound``."""

    normal: Vector
    bound: Fraction

    def __post_init__(self) -> None:
        object.__setattr__(self, "normal", _vec(self.normal))
        object.__setattr__(self, "bound", Fraction(self.bound))
        if not any(self.normal):
            raise DomainError("halfspace normal must be nonzero")

    @property
    def dim(self) -> int:
        return len(self.normal)

    def slack(self, x: Sequence[Fraction]) -> Fraction:
        return self.bound - _dot(self.normal, x)

    def contains(self, x: Sequence[Fraction]) -> bool:
        return self.slack(x) >= 0

    def canonical(self) -> Tuple[Vector, Fraction]:
        """Representative of the positive-scaling class (max |normal| = 1)."""
        scale = max(abs(a) for a in self.normal)
        return tuple(a / scale for a in self.normal), self.bound / scale

    def to_record(self) -> HalfspaceRecord:
        return HalfspaceRecord(
            normal=[format_rational(a) for a in self.normal],
            bound=format_rational(self.bound),
        )

    @classmethod
    def from_record(cls, record: HalfspaceRecord) -> "Halfspace":
        return cls(tuple(parse_rational(a) for a in record.normal), parse_rational(record.bound))


@dataclass(frozen=True)
class HPolytope:
    ambient_dim: int
    inequalities: Tuple[Halfspace, ...]
    label: str = ""
    chart_id: str = ""

    def __post_init__(self) -> None:
        seen = set()
        unique = []
        for h in self.inequalities:
            if h.dim != self.ambient_dim:
                raise DomainError(
                    f"halfspace of dimension {h.dim} in a {self.ambient_dim}-dimensional polytope"
                )
            key = h.canonical()
            if key not in seen:
                seen.add(key)
                unique.append(h)
        object.__setattr__(self, "inequalities", tuple(unique))

    def with_halfspace(self, cut: Halfspace, label: Optional[str] = None) -> "HPolytope":
        return HPolytope(
            self.ambient_dim, self.inequalities + (cut,), label or self.label, self.chart_id
        )

    def contains(self, x: Sequence[Fraction]) -> bool:
        return all(h.contains(x) for h in self.inequalities)

    def text(self) -> str:
        return "\n".join(
            ",".join(format_rational(a) for a in h.normal) + "<=" + format_rational(h.bound)
            for h in self.inequalities
        )

    def cache_key(self) -> str:
        return hashlib.sha256(f"{self.chart_id}\n{self.text()}".encode()).hexdigest()


@dataclass(frozen=True)
class VPolytope:
    """Vertex list, sorted lexicographically, with the H-representation it
    was computed from (when known) and the provenance of applied cuts."""

    ambient_dim: int
    vertices: Tuple[Vector, ...]
    label: str = ""
    chart_id: str = ""
    source: Optional[HPolytope] = None
    cuts: Tuple[CutProvenance, ...] = field(default=())

    def __post_init__(self) -> None:
        verts = sorted(set(_vec(v) for v in self.vertices))
        if any(len(v) != self.ambient_dim for v in verts):
            raise DomainError("vertex dimension does not match the ambient dimension")
        object.__setattr__(self, "vertices", tuple(verts))

    def __len__(self) -> int:
        return len(self.vertices)

    def as_float(self) -> np.ndarray:
        return np.array([[float(x) for x in v] for v in self.vertices], dtype=float)

    @property
    def fingerprint(self) -> str:
        return fingerprint(self.vertices, [c.model_dump_json() for c in self.cuts])

    def full_vertices(self, scenario: Scenario, exact: bool = False) -> np.ndarray:
        """Vertices as full behavior vectors (rows)."""
        if self.chart_id.startswith("ns-"):
            chart = NoSignallingChart(scenario)
            rows = [chart.to_full(np.array(v, dtype=object)) for v in self.vertices]
        else:
            rows = [np.array(v, dtype=object) for v in self.vertices]
        if exact:
            return np.array(rows, dtype=object)
        return np.array([[float(x) for x in r] for r in rows], dtype=float)


@dataclass(frozen=True)
class SVSource:
    """Santha-Vazirani source with bias ``delta``."""

    delta: Fraction

    def __post_init__(self) -> None:
        object.__setattr__(self, "delta", Fraction(self.delta))
        if not 0 <= self.delta < Fraction(1, 2):
            raise DomainError("SV bias delta must lie in [0, 1/2)")


class SVConvention(str, Enum):
    # Each bit's probability ranges over [1/2 - delta, 1/2 + delta].
    box = "box"
    # Vertices 1/2 (1 +/- delta), the narrower reading of the product theorem.
    theorem = "theorem"


# --- H-representations -------------------------------------------------------


def ns_polytope(scenario: Scenario) -> HPolytope:
    """No-signalling polytope in chart coordinates: one positivity facet per
    full-vector entry."""
    chart = NoSignallingChart(scenario)
    ineqs = [
        Halfspace(_vec(-chart.A[i]), Fraction(int(chart.a0[i])))
        for i in range(scenario.size)
    ]
    return HPolytope(chart.dim, tuple(ineqs), label="NS", chart_id=chart.id)


def halfspace_from_functional(
    scenario: Scenario, functional: Sequence[Any], bound: Any
) -> Halfspace:
    """Convert ``b . full <= bound`` into chart coordinates (exact)."""
    chart = NoSignallingChart(scenario)
    h, eta = chart.functional_to_chart(np.array(_vec(functional), dtype=object), Fraction(bound))
    return Halfspace(_vec(h), Fraction(eta))


def polytope_from_halfspaces(
    scenario: Scenario, functionals: Iterable[Tuple[Sequence[Any], Any]], label: str = ""
) -> HPolytope:
    """NS positivity facets plus Bell halfspaces given in full coordinates."""
    base = ns_polytope(scenario)
    extra = tuple(halfspace_from_functional(scenario, b, beta) for b, beta in functionals)
    return HPolytope(base.ambient_dim, base.inequalities + extra, label or "NS+", base.chart_id)


def box_polytope(dim: int, low: Any = 0, high: Any = 1) -> HPolytope:
    ineqs = []
    for i in range(dim):
        e = [Fraction(0)] * dim
        e[i] = Fraction(1)
        ineqs.append(Halfspace(tuple(e), Fraction(high)))
        ineqs.append(Halfspace(tuple(-a for a in e), -Fraction(low)))
    return HPolytope(dim, tuple(ineqs), label=f"box{dim}")


# --- double description ------------------------------------------------------


def _normalise_ray(r: List[Fraction]) -> Vector:
    t = r[-1]
    if t > 0:
        return tuple(x / t for x in r)
    scale = next(abs(x) for x in r if x)
    return tuple(x / scale for x in r)


def _initial_basis(rows: List[Vector]) -> Tuple[List[int], Optional[Vector]]:
    """Greedily pick linearly independent rows; on rank deficiency return a
    nonzero kernel vector of all rows."""
    dim = len(rows[0])
    basis: List[int] = []
    reduced: List[Tuple[int, List[Fraction]]] = []  # (pivot column, row)
    for i, row in enumerate(rows):
        r = list(row)
        for pivot, prow in reduced:
            if r[pivot]:
                factor = r[pivot] / prow[pivot]
                r = [a - factor * b for a, b in zip(r, prow)]
        pivot = next((j for j, a in enumerate(r) if a), None)
        if pivot is None:
            continue
        reduced.append((pivot, r))
        basis.append(i)
        if len(basis) == dim:
            return basis, None
    return basis, tuple(_nullspace_vector([list(r) for r in rows], dim))


def _nullspace_vector(rows: List[List[Fraction]], dim: int) -> List[Fraction]:
    m = [list(r) for r in rows]
    pivots: List[int] = []
    r = 0
    for col in range(dim):
        piv = next((i for i in range(r, len(m)) if m[i][col]), None)
        if piv is None:
            continue
        m[r], m[piv] = m[piv], m[r]
        inv = 1 / m[r][col]
        m[r] = [a * inv for a in m[r]]
        for i in range(len(m)):
            if i != r and m[i][col]:
                f = m[i][col]
                m[i] = [a - f * b for a, b in zip(m[i], m[r])]
        pivots.append(col)
        r += 1
    free = next(j for j in range(dim) if j not in pivots)
    x = [Fraction(0)] * dim
    x[free] = Fraction(1)
    for i, col in enumerate(pivots):
        x[col] = -m[i][free]
    return x


def _invert(matrix: List[Vector]) -> List[List[Fraction]]:
    n = len(matrix)
    aug = [list(row) + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(matrix)]
    for col in range(n):
        piv = next(i for i in range(col, n) if aug[i][col])
        aug[col], aug[piv] = aug[piv], aug[col]
        inv = 1 / aug[col][col]
        aug[col] = [a * inv for a in aug[col]]
        for i in range(n):
            if i != col and aug[i][col]:
                f = aug[i][col]
                aug[i] = [a - f * b for a, b in zip(aug[i], aug[col])]
    return [row[n:] for row in aug]


def _dd_step(
    rays: List[Vector], zeros: List[int], row: Vector, bit: int, dim: int
) -> Tuple[List[Vector], List[int]]:
    """Intersect the cone spanned by ``rays`` with ``row . r <= 0``.

    ``zeros[i]`` is the bitmask of constraints tight at ``rays[i]``; ``bit``
    is the mask assigned to the new constraint.
    """
    values = [_dot(row, r) for r in rays]
    plus = [i for i, s in enumerate(values) if s > 0]
    minus = [i for i, s in enumerate(values) if s < 0]
    if not plus:
        return rays, [z | bit if values[i] == 0 else z for i, z in enumerate(zeros)]
    new_rays: List[Vector] = []
    new_zeros: List[int] = []
    for i, (r, z) in enumerate(zip(rays, zeros)):
        if values[i] <= 0:
            new_rays.append(r)
            new_zeros.append(z | bit if values[i] == 0 else z)
    need = dim - 2
    for p in plus:
        for n in minus:
            common = zeros[p] & zeros[n]
            if common.bit_count() < need:
                continue
            adjacent = True
            for k, zk in enumerate(zeros):
                if k != p and k != n and zk & common == common:
                    adjacent = False
                    break
            if not adjacent:
                continue
            sp, sn = values[p], values[n]
            combined = [sp * a - sn * b for a, b in zip(rays[n], rays[p])]
            new_rays.append(_normalise_ray(combined))
            new_zeros.append(common | bit)
    return new_rays, new_zeros


def _rays_to_vertices(rays: List[Vector], dim: int) -> List[Vector]:
    vertices = [r[:-1] for r in rays if r[-1] > 0]
    recession = [r[:-1] for r in rays if r[-1] == 0]
    if not vertices:
        raise InfeasibleError("polytope is empty")
    if recession:
        raise UnboundedError("polyhedron is unbounded", ray=recession[0])
    return vertices


def _enumerate_dd(P: HPolytope) -> List[Vector]:
    d = P.ambient_dim
    rows: List[Vector] = [tuple(h.normal) + (-h.bound,) for h in P.inequalities]
    rows.append(tuple([Fraction(0)] * d) + (Fraction(-1),))
    if not P.inequalities:
        ray = (Fraction(1),) + (Fraction(0),) * (d - 1)
        raise UnboundedError("polyhedron without inequalities", ray=ray)
    basis, kernel = _initial_basis(rows)
    if kernel is not None:
        if kernel[-1] != 0:
            raise InfeasibleError("polytope is empty")
        raise UnboundedError("polyhedron contains a line", ray=kernel[:-1])
    inverse = _invert([rows[i] for i in basis])
    dim = d + 1
    rays: List[Vector] = []
    zeros: List[int] = []
    for j in range(dim):
        column = [-inverse[i][j] for i in range(dim)]
        rays.append(_normalise_ray(column))
        zeros.append(sum(1 << basis[i] for i in range(dim) if i != j))
    in_basis = set(basis)
    for i, row in enumerate(rows):
        if i in in_basis:
            continue
        rays, zeros = _dd_step(rays, zeros, row, 1 << i, dim)
        if not rays:
            raise InfeasibleError("polytope is empty")
    return _rays_to_vertices(rays, dim)


def _enumerate_cdd(P: HPolytope) -> List[Vector]:
    try:
        import cdd
    except ImportError as exc:  # pragma: no cover - optional dependency
        raise DomainError("the cdd backend needs the optional pycddlib package") from exc
    rows = [[h.bound] + [-a for a in h.normal] for h in P.inequalities]
    mat = cdd.Matrix(rows, number_type="fraction")
    mat.rep_type = cdd.RepType.INEQUALITY
    poly = cdd.Polyhedron(mat)
    gen = poly.get_generators()
    vertices: List[Vector] = []
    for i in range(gen.row_size):
        row = gen[i]
        if i in gen.lin_set or row[0] == 0:
            raise UnboundedError("polyhedron is unbounded", ray=_vec(row[1:]))
        vertices.append(_vec(row[1:]))
    if not vertices:
        raise InfeasibleError("polytope is empty")
    return vertices


def enumerate_vertices(P: HPolytope, backend: str = "auto") -> VPolytope:
    """Complete, duplicate-free vertex list of a bounded polytope.

    ``backend`` is ``"dd"`` (exact double description in this module),
    ``"cdd"`` (pycddlib, exact fractions) or ``"auto"``, which uses ``dd``
    up to ``numeric.DD_MAX_DIMENSION`` and ``cdd`` above when installed.
    """
    if backend == "auto":
        backend = "dd"
        if P.ambient_dim > numeric.DD_MAX_DIMENSION:
            try:
                import cdd  # noqa: F401

                backend = "cdd"
            except ImportError:
                logger.warning(
                    "pycddlib not installed; enumerating a %d-dimensional polytope "
                    "with the pure-Python double description",
                    P.ambient_dim,
                )
    if backend == "dd":
        vertices = _enumerate_dd(P)
    elif backend == "cdd":
        vertices = _enumerate_cdd(P)
    else:
        raise DomainError(f"unknown enumeration backend {backend!r}")
    logger.debug("enumerated %d vertices of %s (%s)", len(vertices), P.label, backend)
    return VPolytope(P.ambient_dim, tuple(vertices), P.label, P.chart_id, source=P)


def enumerate_vertices_cached(P: HPolytope, db: Session, backend: str = "auto") -> VPolytope:
    """``enumerate_vertices`` with a persistent cache keyed by the H-representation."""
    from pecert import crud

    key = P.cache_key()
    entry = crud.vertex_cache.get_by_key(db, key=key)
    if entry is not None:
        vertices = [
            tuple(parse_rational(x) for x in line.split(","))
            for line in entry.payload.splitlines()
            if line
        ]
        logger.info("vertex cache hit for %s (%d vertices)", P.label, len(vertices))
        return VPolytope(P.ambient_dim, tuple(vertices), P.label, P.chart_id, source=P)
    V = enumerate_vertices(P, backend)
    crud.vertex_cache.put(
        db,
        key=key,
        chart_id=P.chart_id,
        label=P.label,
        payload="\n".join(",".join(format_rational(x) for x in v) for v in V.vertices),
        vertex_count=len(V),
    )
    return V


def _tight_mask(P: HPolytope, v: Vector) -> int:
    mask = 0
    for i, h in enumerate(P.inequalities):
        if _dot(h.normal, v) == h.bound:
            mask |= 1 << i
    return mask


def add_halfspace(
    V: VPolytope, cut: Halfspace, provenance: Optional[CutProvenance] = None
) -> VPolytope:
    """Vertices of ``V`` intersected with ``cut``, computed incrementally.

    Satisfied vertices are kept; each edge between a violating and a
    satisfying vertex contributes its crossing point with the cut
    hyperplane. ``V.source`` supplies the tight sets used to decide edges.
    """
    if V.source is None:
        raise DomainError("incremental cuts need the polytope's H-representation")
    if cut.dim != V.ambient_dim:
        raise DomainError("cut dimension does not match the polytope")
    P = V.source
    d = V.ambient_dim
    rays = [tuple(v) + (Fraction(1),) for v in V.vertices]
    zeros = [_tight_mask(P, v) for v in V.vertices]
    row = tuple(cut.normal) + (-cut.bound,)
    rays, zeros = _dd_step(rays, zeros, row, 1 << len(P.inequalities), d + 1)
    vertices = [r[:-1] for r in rays if r[-1] > 0]
    if not vertices:
        raise InfeasibleError("cut leaves an empty intersection")
    cuts = V.cuts + ((provenance,) if provenance is not None else ())
    return VPolytope(
        d, tuple(vertices), V.label, V.chart_id, source=P.with_halfspace(cut), cuts=cuts
    )


def implied_by(V: VPolytope, cut: Halfspace) -> bool:
    """True when every vertex, hence the whole polytope, satisfies ``cut``."""
    return all(cut.contains(v) for v in V.vertices)


def _rank(vectors: List[List[Fraction]]) -> int:
    if not vectors:
        return 0
    m = [list(r) for r in vectors]
    rank = 0
    cols = len(m[0])
    for col in range(cols):
        piv = next((i for i in range(rank, len(m)) if m[i][col]), None)
        if piv is None:
            continue
        m[rank], m[piv] = m[piv], m[rank]
        for i in range(rank + 1, len(m)):
            if m[i][col]:
                f = m[i][col] / m[rank][col]
                m[i] = [a - f * b for a, b in zip(m[i], m[rank])]
        rank += 1
    return rank


def facets_of(P: HPolytope, V: VPolytope) -> HPolytope:
    """Inequalities of ``P`` whose tight vertices span a hyperplane."""
    d = V.ambient_dim
    facets = []
    for h in P.inequalities:
        tight = [v for v in V.vertices if _dot(h.normal, v) == h.bound]
        if len(tight) < d:
            continue
        base = tight[0]
        diffs = [[a - b for a, b in zip(v, base)] for v in tight[1:]]
        if _rank(diffs) == d - 1:
            facets.append(h)
    return HPolytope(P.ambient_dim, tuple(facets), P.label, P.chart_id)


# --- distances -----------------------------------------------------------------


def tv_distance(u: Sequence[Any], v: Sequence[Any], scenario: Scenario) -> float:
    """Averaged total variation distance ``1/2 sum_{c,z} |u - v| / |Z|``."""
    a = np.asarray([float(x) for x in np.asarray(u, dtype=object).flat])
    b = np.asarray([float(x) for x in np.asarray(v, dtype=object).flat])
    if a.shape != b.shape or a.size != scenario.size:
        raise DomainError("tv_distance needs two behavior vectors of the scenario's size")
    return float(0.5 * np.abs(a - b).sum() / scenario.num_inputs)


# --- SV sources and joint polytopes -------------------------------------------


def sv_polytope(src: SVSource, convention: SVConvention = SVConvention.box) -> VPolytope:
    """Vertices of the single-bit SV polytope over (mu(0), mu(1))."""
    spread = 2 * src.delta if convention == SVConvention.box else src.delta
    vertices = [
        tuple(Fraction(1, 2) * (1 + (-1) ** (k + x) * spread) for x in (0, 1)) for k in (0, 1)
    ]
    return VPolytope(2, tuple(vertices), label=f"SV(delta={src.delta})", chart_id="sv1")


def sv2_polytope(src: SVSource, convention: SVConvention = SVConvention.box) -> VPolytope:
    """Product vertices u_kk'(x, y) = v_k(x) v_k'(y) ordered as xy = 00, 01, 10, 11."""
    single = sv_polytope(src, convention).vertices
    vertices = [
        tuple(vk[x] * vl[y] for x in (0, 1) for y in (0, 1))
        for vk, vl in itertools.product(single, repeat=2)
    ]
    return VPolytope(4, tuple(vertices), label=f"SV2(delta={src.delta})", chart_id="sv2")


def joint_product_vertices(
    condV: VPolytope, inputV: VPolytope, scenario: Scenario
) -> VPolytope:
    """Joint vertices u(c, z) = v_i(c|z) v'_j(z) for all vertex pairs."""
    if inputV.ambient_dim != scenario.num_inputs:
        raise DomainError("input polytope dimension must equal |Z|")
    cond = condV.full_vertices(scenario, exact=True)
    if cond.shape[1] != scenario.size:
        raise DomainError("conditional vertices do not match the scenario")
    k = scenario.num_outputs
    products = []
    for v in cond:
        for w in inputV.vertices:
            products.append(tuple(v[i] * w[i // k] for i in range(scenario.size)))
    return VPolytope(
        scenario.size,
        tuple(products),
        label=f"{condV.label}x{inputV.label}",
        chart_id=f"joint-{scenario.id}",
    )


# --- persistence ---------------------------------------------------------------


def polytope_to_file(V: VPolytope, extra: Optional[Dict[str, Any]] = None) -> PolytopeFile:
    source = V.source
    return PolytopeFile(
        chart=V.chart_id,
        ambient_dim=V.ambient_dim,
        label=V.label,
        inequalities=[h.to_record() for h in source.inequalities] if source else [],
        vertices=[[format_rational(x) for x in v] for v in V.vertices],
        cuts=list(V.cuts),
        fingerprint=V.fingerprint,
        extra=extra or {},
    )


def polytope_from_file(doc: PolytopeFile) -> VPolytope:
    source = None
    if doc.inequalities:
        source = HPolytope(
            doc.ambient_dim,
            tuple(Halfspace.from_record(r) for r in doc.inequalities),
            doc.label,
            doc.chart,
        )
    vertices = tuple(tuple(parse_rational(x) for x in v) for v in doc.vertices)
    return VPolytope(
        doc.ambient_dim, vertices, doc.label, doc.chart, source=source, cuts=tuple(doc.cuts)
    )


def save_polytope(
    path: Union[str, Path], V: VPolytope, extra: Optional[Dict[str, Any]] = None
) -> None:
    atomic_write_json(path, polytope_to_file(V, extra).model_dump(mode="json"))


def load_polytope(path: Union[str, Path]) -> VPolytope:
    return polytope_from_file(PolytopeFile.model_validate(read_json(path, "polytope file")))
