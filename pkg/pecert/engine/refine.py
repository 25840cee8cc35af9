"""Outer-polytope refinement of the quantum set.

Both algorithms start from a polytope containing the relaxation and
repeatedly cut off a supra-quantum point with a quantum Bell inequality
``b . mu <= beta``, ``beta`` being a certified NPA bound:

* ``nearv`` cuts one of the non-quantum vertices nearest to the typical
  behavior, chosen at random with inverse-distance weights;
* ``maxgp`` cuts the non-quantum components of an optimal guessing
  strategy for the certified output.
"""

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Dict, List, Optional, Sequence, Set, Tuple, Union

import numpy as np
from scipy.optimize import linprog

from pecert.core.config import numeric, settings
from pecert.core.errors import InfeasibleError, SolverError, SoundnessError
from pecert.core.io import format_rational
from pecert.core.rng import SeedSplitter
from pecert.engine.behaviors import ConditionalBehavior, JointBehavior
from pecert.engine.polytope import (
    Halfspace,
    HPolytope,
    VPolytope,
    add_halfspace,
    enumerate_vertices,
    halfspace_from_functional,
    implied_by,
    tv_distance,
)
from pecert.engine.quantum.moments import MomentStructure
from pecert.engine.quantum.npa import Membership, max_linear, membership, structure_for
from pecert.engine.rational import rationalize_vector, round_up
from pecert.engine.scenario import NoSignallingChart, OutputMap, Scenario
from pecert.schemas.polytope import CutProvenance
from pecert.schemas.run import IterationRecord, Metric, RefinementConfig, SelectionRule, ZPolicy

logger = logging.getLogger(__name__)

Vector = Tuple[Fraction, ...]


@dataclass(frozen=True, eq=False)
class CutRecord:
    """A quantum Bell inequality ``functional . mu <= bound`` (full
    coordinates) and where it came from."""

    functional: np.ndarray
    bound: Fraction
    halfspace: Halfspace
    quantum_bound: float
    algorithm: str
    iteration: int
    source: str
    inserted: bool = True

    def provenance(self, seed: Optional[int]) -> CutProvenance:
        return CutProvenance(
            algorithm=self.algorithm,
            iteration=self.iteration,
            seed=seed,
            source=self.source,
            quantum_bound=self.quantum_bound,
            inserted=self.inserted,
            functional=[format_rational(x) for x in self.functional],
            bound=format_rational(self.bound),
        )


@dataclass
class RefinementResult:
    polytope: VPolytope
    cuts: List[CutRecord] = field(default_factory=list)
    records: List[IterationRecord] = field(default_factory=list)
    quantum_vertices: int = 0


def _describe(values: Sequence) -> str:
    return "(" + ",".join(
        format_rational(v) if isinstance(v, Fraction) else f"{float(v):.6g}" for v in values
    ) + ")"


def make_cut(
    direction: np.ndarray,
    structure: MomentStructure,
    algorithm: str,
    iteration: int,
    source: str,
) -> Optional[CutRecord]:
    """Rationalise ``direction`` and bound it over the relaxation.

    Returns None for a vanishing direction.
    """
    direction = np.asarray(direction, dtype=float)
    scale = float(np.max(np.abs(direction)))
    if scale == 0 or not math.isfinite(scale):
        return None
    b = rationalize_vector(direction / scale, numeric.NORMAL_DENOMINATOR)
    if not any(b):
        return None
    qb = max_linear(b, structure)
    guarded = qb.bound + 1e-12 * (1.0 + abs(qb.bound))
    beta = round_up(guarded, numeric.BOUND_DENOMINATOR)
    halfspace = halfspace_from_functional(structure.scenario, b, beta)
    return CutRecord(b, beta, halfspace, qb.bound, algorithm, iteration, source)


class MembershipCache:
    """Per-run membership results keyed by exact vertex, evaluated in a
    thread pool."""

    def __init__(
        self,
        scenario: Scenario,
        structure: MomentStructure,
        cfg: RefinementConfig,
    ) -> None:
        self.chart = NoSignallingChart(scenario)
        self.structure = structure
        self.cfg = cfg
        self._results: Dict[Vector, Membership] = {}

    def _test(self, vertex: Vector) -> Membership:
        full = self.chart.to_full(np.array([float(x) for x in vertex]))
        return membership(full, self.structure, self.cfg.membership_tol, self.cfg.metric)

    def classify(self, vertices: Sequence[Vector]) -> List[Membership]:
        missing = [v for v in vertices if v not in self._results]
        if missing:
            with ThreadPoolExecutor(max_workers=settings.THREADS) as pool:
                for v, result in zip(missing, pool.map(self._test, missing)):
                    self._results[v] = result
        return [self._results[v] for v in vertices]


def _distance(u: np.ndarray, v: np.ndarray, scenario: Scenario, metric: Metric) -> float:
    if metric == Metric.tv:
        return tv_distance(u, v, scenario)
    return float(np.linalg.norm(np.asarray(u, dtype=float) - np.asarray(v, dtype=float)))


def _check_survivors(
    V: VPolytope,
    statuses: Sequence[Membership],
    cut: CutRecord,
    scenario: Scenario,
) -> None:
    """Quantum vertices may only be cut within their membership tolerance."""
    chart = NoSignallingChart(scenario)
    coeff = np.array([float(x) for x in cut.functional])
    reach = float(np.max(np.abs(coeff))) * 2 * scenario.num_inputs
    for vertex, status in zip(V.vertices, statuses):
        if not status.inside or cut.halfspace.contains(vertex):
            continue
        full = chart.to_full(np.array([float(x) for x in vertex]))
        violation = float(coeff @ full) - float(cut.bound)
        if violation > reach * status.distance + numeric.PEF_VERIFY_SLACK:
            raise SoundnessError(
                f"cut from iteration {cut.iteration} removes quantum vertex "
                f"{_describe(vertex)} (violation {violation:.3g})"
            )
        logger.debug("cut trims a boundary vertex by %.3g", violation)


def _apply_cut(
    V: VPolytope,
    cut: CutRecord,
    statuses: Sequence[Membership],
    seed: int,
    scenario: Scenario,
) -> Tuple[VPolytope, CutRecord]:
    _check_survivors(V, statuses, cut, scenario)
    if implied_by(V, cut.halfspace):
        logger.info("cut %d is implied by the current polytope; recorded only", cut.iteration)
        return V, replace(cut, inserted=False)
    return add_halfspace(V, cut.halfspace, cut.provenance(seed)), cut


def _initial(P_in: HPolytope, V_in: Optional[VPolytope]) -> VPolytope:
    if V_in is not None:
        return V_in
    return enumerate_vertices(P_in)


def nearv(
    p: ConditionalBehavior,
    P_in: HPolytope,
    cfg: RefinementConfig,
    structure: Optional[MomentStructure] = None,
    V_in: Optional[VPolytope] = None,
) -> RefinementResult:
    """Refine ``P_in`` by cutting non-quantum vertices near ``p``."""
    scenario = p.scenario
    structure = structure or structure_for(scenario, cfg.level)
    rng = SeedSplitter(cfg.seed).stream("nearv")
    cache = MembershipCache(scenario, structure, cfg)
    target = p.as_float()
    V = _initial(P_in, V_in)
    result = RefinementResult(V)
    unseparated: Set[Vector] = set()

    for it in range(cfg.iterations):
        statuses = cache.classify(V.vertices)
        outside = [i for i, s in enumerate(statuses) if not s.inside]
        candidates = [i for i in outside if V.vertices[i] not in unseparated]
        result.quantum_vertices = len(V) - len(outside)
        if not outside:
            logger.info("nearv: every vertex is quantum after %d iterations", it)
            break
        if not candidates:
            logger.warning("nearv: no remaining vertex can be separated after %d iterations", it)
            break
        full = V.full_vertices(scenario)
        ranked = sorted(
            (_distance(full[i], target, scenario, cfg.metric), V.vertices[i], i)
            for i in candidates
        )
        near = ranked[: cfg.nearest]
        dists = np.array([d for d, _, _ in near])
        if cfg.selection == SelectionRule.uniform:
            weights = np.full(len(near), 1.0 / len(near))
        elif np.any(dists == 0):
            weights = (dists == 0).astype(float) / np.count_nonzero(dists == 0)
        else:
            weights = (1.0 / dists) / np.sum(1.0 / dists)
        pick = int(rng.choice(len(near), p=weights))
        _, vertex, index = near[pick]
        status = statuses[index]
        assert status.nearest is not None
        cut = make_cut(full[index] - status.nearest, structure, "nearv", it, _describe(vertex))
        before = len(V)
        if cut is None:
            logger.warning("nearv: vanishing cut direction at iteration %d", it)
            break
        if cut.halfspace.contains(vertex):
            logger.warning(
                "nearv %d: rounded cut does not separate %s; skipped", it, _describe(vertex)
            )
            unseparated.add(vertex)
            continue
        V, cut = _apply_cut(V, cut, statuses, cfg.seed, scenario)
        result.cuts.append(cut)
        result.records.append(
            IterationRecord(
                iteration=it,
                algorithm="nearv",
                chosen=_describe(vertex),
                functional=[format_rational(x) for x in cut.functional],
                bound=format_rational(cut.bound),
                quantum_bound=cut.quantum_bound,
                inserted=cut.inserted,
                vertices_before=before,
                vertices_after=len(V),
                quantum_vertices=result.quantum_vertices,
            )
        )
        logger.info(
            "nearv %d: distance %.4g, %d -> %d vertices", it, near[pick][0], before, len(V)
        )
    result.polytope = V
    return result


# --- guessing probability ------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Strategy:
    weight: float
    guess: Union[int, Tuple[int, ...]]
    behavior: np.ndarray


@dataclass(frozen=True, eq=False)
class GuessingResult:
    value: float
    strategies: List[Strategy]
    z: Optional[int]


def _guess_objective(
    scenario: Scenario, dmap: OutputMap, assignment: Dict[int, int], weights: Dict[int, float]
) -> np.ndarray:
    table = dmap.table
    obj = np.zeros(scenario.size)
    for z, d in assignment.items():
        for c in range(scenario.num_outputs):
            if table[c] == d:
                obj[scenario.index(c, z)] += weights[z]
    return obj


def _pieces(
    scenario: Scenario, dmap: OutputMap, z: Optional[int], p_z: np.ndarray
) -> List[Tuple[Union[int, Tuple[int, ...]], np.ndarray]]:
    if z is not None:
        return [
            (d, _guess_objective(scenario, dmap, {z: d}, {z: 1.0}))
            for d in range(dmap.num_values)
        ]
    count = dmap.num_values**scenario.num_inputs
    if count > 4096:
        raise InfeasibleError(f"averaged guessing needs {count} guess functions; limit is 4096")
    weights = {zz: float(p_z[zz]) for zz in range(scenario.num_inputs)}
    return [
        (g, _guess_objective(scenario, dmap, dict(enumerate(g)), weights))
        for g in itertools.product(range(dmap.num_values), repeat=scenario.num_inputs)
    ]


def _solve_lp(c: np.ndarray, A_ub, b_ub, A_eq, b_eq, bounds, what: str) -> np.ndarray:
    res = linprog(c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq, bounds=bounds, method="highs")
    if res.status == 2:
        raise InfeasibleError(f"{what}: the behavior is not in the allowed set")
    if res.status != 0:
        raise SolverError(f"{what}: {res.message}", "numerical-limit")
    return np.asarray(res.x, dtype=float)


def _guess_over_halfspaces(
    target: np.ndarray, S: HPolytope, pieces, scenario: Scenario
) -> GuessingResult:
    chart = NoSignallingChart(scenario)
    A = chart.A.astype(float)
    a0 = chart.a0.astype(float)
    H = np.array([[float(x) for x in h.normal] for h in S.inequalities])
    eta = np.array([float(h.bound) for h in S.inequalities])
    dim, k = chart.dim, len(pieces)
    width = dim + 1  # (x, t) per piece
    nvar = k * width
    c = np.zeros(nvar)
    A_ub = np.zeros((k * len(eta), nvar))
    A_eq = np.zeros((dim + 1, nvar))
    for j, (_, obj) in enumerate(pieces):
        sl = slice(j * width, j * width + dim)
        c[sl] = -(obj @ A)
        c[j * width + dim] = -(obj @ a0)
        rows = slice(j * len(eta), (j + 1) * len(eta))
        A_ub[rows, sl] = H
        A_ub[rows, j * width + dim] = -eta
        A_eq[:dim, sl] = np.eye(dim)
        A_eq[dim, j * width + dim] = 1.0
    b_eq = np.concatenate([chart.from_full(target), [1.0]])
    bounds = [(None, None)] * dim + [(0, None)]
    x = _solve_lp(c, A_ub, np.zeros(A_ub.shape[0]), A_eq, b_eq, bounds * k, "guessing LP")
    strategies = []
    for j, (label, _) in enumerate(pieces):
        t = x[j * width + dim]
        if t <= 0:
            continue
        g = x[j * width : j * width + dim] / t
        strategies.append(Strategy(float(t), label, np.clip(A @ g + a0, 0.0, None)))
    return GuessingResult(float(-(c @ x)), strategies, None)


def _guess_over_vertices(target: np.ndarray, vertices: np.ndarray, pieces) -> GuessingResult:
    nv, k = vertices.shape[0], len(pieces)
    c = np.concatenate([-(vertices @ obj) for _, obj in pieces])
    A_eq = np.vstack([np.hstack([vertices.T] * k), np.ones((1, nv * k))])
    b_eq = np.concatenate([target, [1.0]])
    x = _solve_lp(c, None, None, A_eq, b_eq, [(0, None)] * (nv * k), "vertex guessing LP")
    strategies = []
    for j, (label, _) in enumerate(pieces):
        w = x[j * nv : (j + 1) * nv]
        total = float(w.sum())
        if total <= 0:
            continue
        strategies.append(Strategy(total, label, (w @ vertices) / total))
    return GuessingResult(float(-(c @ x)), strategies, None)


def guessing_strategies(
    p: Union[ConditionalBehavior, JointBehavior],
    z: Optional[int],
    S: Union[HPolytope, VPolytope],
    dmap: OutputMap,
    p_z: Optional[np.ndarray] = None,
) -> GuessingResult:
    """Optimal decomposition of ``p`` into sub-normalised members of ``S``.

    With ``z`` given, one piece per guess d maximises ``sum_d mu_d(d|z)``.
    With ``z=None`` pieces are guess functions g: Z -> D and the objective
    is ``sum_z p(z) mu_g(g(z)|z)``.
    """
    scenario = p.scenario
    if isinstance(p, JointBehavior):
        p_z = p.marginal_float() if p_z is None else p_z
        p = p.conditional()
    if p_z is None:
        p_z = np.full(scenario.num_inputs, 1.0 / scenario.num_inputs)
    target = p.as_float()
    pieces = _pieces(scenario, dmap, z, np.asarray(p_z, dtype=float))
    if isinstance(S, HPolytope):
        result = _guess_over_halfspaces(target, S, pieces, scenario)
    else:
        result = _guess_over_vertices(target, S.full_vertices(scenario), pieces)
    return GuessingResult(result.value, result.strategies, z)


def _choose_z(
    cfg: RefinementConfig,
    rng: np.random.Generator,
    p_z: np.ndarray,
    guess: Callable[[Optional[int]], GuessingResult],
) -> Tuple[Optional[int], GuessingResult]:
    if cfg.z_policy == ZPolicy.averaged:
        return None, guess(None)
    if cfg.z_policy == ZPolicy.fixed:
        return cfg.fixed_z, guess(cfg.fixed_z)
    if cfg.z_policy == ZPolicy.max_guess:
        results = [guess(z) for z in range(len(p_z))]
        best = int(np.argmax([r.value for r in results]))
        return best, results[best]
    z = int(rng.choice(len(p_z), p=p_z / p_z.sum()))
    return z, guess(z)


def maxgp(
    p: ConditionalBehavior,
    p_z: Sequence[float],
    P_in: HPolytope,
    cfg: RefinementConfig,
    dmap: OutputMap,
    structure: Optional[MomentStructure] = None,
    V_in: Optional[VPolytope] = None,
) -> RefinementResult:
    """Refine ``P_in`` by cutting supra-quantum guessing strategies."""
    scenario = p.scenario
    structure = structure or structure_for(scenario, cfg.level)
    rng = SeedSplitter(cfg.seed).stream("maxgp")
    weights = np.asarray([float(x) for x in p_z], dtype=float)
    if cfg.z_policy == ZPolicy.fixed and not 0 <= cfg.fixed_z < scenario.num_inputs:
        raise InfeasibleError(f"fixed z={cfg.fixed_z} outside the scenario")
    cache = MembershipCache(scenario, structure, cfg)
    V = _initial(P_in, V_in)
    result = RefinementResult(V)

    for it in range(cfg.iterations):
        H = V.source if V.source is not None else P_in

        def guess(z: Optional[int]) -> GuessingResult:
            return guessing_strategies(p, z, H, dmap, weights)

        z, guessing = _choose_z(cfg, rng, weights, guess)
        before = len(V)
        inserted = 0
        for strategy in guessing.strategies:
            if strategy.weight < cfg.min_weight:
                continue
            status = membership(strategy.behavior, structure, cfg.membership_tol, cfg.metric)
            if status.inside:
                continue
            assert status.nearest is not None
            cut = make_cut(
                strategy.behavior - status.nearest,
                structure,
                "maxgp",
                it,
                f"guess={strategy.guess} weight={strategy.weight:.6g}",
            )
            if cut is None:
                continue
            normal = np.array([float(x) for x in cut.functional])
            if float(normal @ strategy.behavior) <= float(cut.bound):
                logger.warning("maxgp %d: rounded cut does not separate %s", it, cut.source)
                continue
            statuses = cache.classify(V.vertices)
            V, cut = _apply_cut(V, cut, statuses, cfg.seed, scenario)
            result.cuts.append(cut)
            inserted += int(cut.inserted)
            result.records.append(
                IterationRecord(
                    iteration=it,
                    algorithm="maxgp",
                    chosen=cut.source,
                    z=z,
                    guessing_probability=guessing.value,
                    functional=[format_rational(x) for x in cut.functional],
                    bound=format_rational(cut.bound),
                    quantum_bound=cut.quantum_bound,
                    inserted=cut.inserted,
                    vertices_before=before,
                    vertices_after=len(V),
                )
            )
        logger.info(
            "maxgp %d: z=%s P_guess=%.6f, %d cuts, %d -> %d vertices",
            it,
            z,
            guessing.value,
            inserted,
            before,
            len(V),
        )
        if not inserted and cfg.z_policy in (ZPolicy.fixed, ZPolicy.averaged):
            break
    result.polytope = V
    result.quantum_vertices = sum(s.inside for s in cache.classify(V.vertices))
    return result
