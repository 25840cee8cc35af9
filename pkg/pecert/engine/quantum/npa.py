"""Quantum-set operations on top of the NPA relaxation."""

import functools
import logging
import math
from dataclasses import dataclass
from typing import Any, List, Optional, Tuple, Union

import cvxpy as cp
import numpy as np

from pecert.core.config import numeric
from pecert.core.errors import DomainError, SolverError
from pecert.engine.behaviors import ConditionalBehavior, JointBehavior, uniform_inputs
from pecert.engine.quantum.moments import MomentStructure, build_moment_structure
from pecert.engine.quantum.sdp import (
    NUMERICAL_LIMIT,
    OPTIMAL,
    ConicSolution,
    SdpProblem,
    run_solver,
    solve_sdp,
)
from pecert.engine.rational import to_float
from pecert.engine.scenario import NoSignallingChart, OutputMap, Scenario
from pecert.schemas.run import Metric

logger = logging.getLogger(__name__)

VectorLike = Union[np.ndarray, ConditionalBehavior]


@functools.lru_cache(maxsize=8)
def structure_for(scenario: Scenario, level: int) -> MomentStructure:
    """Shared, immutable moment structure per (scenario, level)."""
    return build_moment_structure(scenario, level)


def _full_vector(v: Any, scenario: Scenario) -> np.ndarray:
    if isinstance(v, (ConditionalBehavior, JointBehavior)):
        arr = v.as_float()
    else:
        arr = np.asarray(v)
        arr = to_float(arr) if arr.dtype == object else arr.astype(float)
    if arr.shape != (scenario.size,):
        raise DomainError(f"expected a vector of length {scenario.size}")
    return arr


def _moment_constraints(structure: MomentStructure, m: cp.Variable, normalised: bool) -> List[Any]:
    s = structure.side
    flat = structure.basis().reshape(structure.num_moments, -1)
    X = cp.Variable((s, s), symmetric=True)
    constraints = [
        X == cp.reshape(flat.T @ m, (s, s), order="C"),
        X >> 0,
        structure.T @ m >= 0,
    ]
    if normalised:
        constraints.append(m[0] == 1)
    return constraints


def moment_problem(structure: MomentStructure, functional: Any, label: str = "") -> SdpProblem:
    """``max b . (T m)`` over the normalised relaxation, as an SdpProblem."""
    b = _full_vector(functional, structure.scenario)
    n = structure.num_moments
    e0 = np.zeros((1, n))
    e0[0, 0] = 1.0
    return SdpProblem.build(
        objective=structure.T.T @ b,
        blocks=structure.basis(),
        eq_matrix=e0,
        eq_rhs=np.ones(1),
        ineq_matrix=-structure.T,
        ineq_rhs=np.zeros(structure.scenario.size),
        # every moment is a correlator of unitaries, or a probability combination
        var_bound=np.ones(n),
        label=label,
    )


@dataclass(frozen=True, eq=False)
class QuantumBound:
    value: float
    bound: float
    behavior: np.ndarray
    solution: ConicSolution

    @property
    def status(self) -> str:
        return self.solution.status


def max_linear(
    functional: Any, structure: MomentStructure, solver: Optional[str] = None
) -> QuantumBound:
    """Certified upper bound of ``b . mu`` over the relaxation, with the optimiser."""
    problem = moment_problem(structure, functional, label=f"max_linear/L{structure.level}")
    sol = solve_sdp(problem, solver)
    if not math.isfinite(sol.certified_bound):
        raise SolverError("no finite certified bound for the Bell functional", NUMERICAL_LIMIT)
    if sol.status != OPTIMAL:
        logger.warning(
            "quantum bound at numerical limit: solver %.10g, certified %.10g",
            sol.value,
            sol.certified_bound,
        )
    return QuantumBound(
        value=sol.value,
        bound=sol.certified_bound,
        behavior=structure.behavior(sol.x),
        solution=sol,
    )


@dataclass(frozen=True, eq=False)
class NearestPoint:
    q: np.ndarray
    distance: float
    status: str


def nearest_quantum(
    v: VectorLike,
    structure: MomentStructure,
    metric: Metric = Metric.tv,
    solver: Optional[str] = None,
) -> NearestPoint:
    """Closest point of the relaxation to ``v``.

    ``tv`` minimises the averaged L1 distance ``1/2 sum |v - q| / |Z|``;
    ``l2`` the Euclidean norm.
    """
    scenario = structure.scenario
    target = _full_vector(v, scenario)
    m = cp.Variable(structure.num_moments)
    q = structure.T @ m
    if metric == Metric.tv:
        objective = 0.5 * cp.norm1(q - target) / scenario.num_inputs
    else:
        objective = cp.norm(q - target, 2)
    prog = cp.Problem(cp.Minimize(objective), _moment_constraints(structure, m, True))
    status = run_solver(prog, solver or numeric.CONIC_SOLVER, "nearest quantum point")
    point = np.clip(structure.behavior(m.value), 0.0, None)
    return NearestPoint(q=point, distance=max(0.0, float(prog.value)), status=status)


@dataclass(frozen=True, eq=False)
class Membership:
    inside: bool
    distance: float
    nearest: Optional[np.ndarray] = None
    functional: Optional[np.ndarray] = None
    status: str = OPTIMAL


def membership(
    mu: VectorLike,
    structure: MomentStructure,
    tol: Optional[float] = None,
    metric: Metric = Metric.tv,
    solver: Optional[str] = None,
) -> Membership:
    """Inside iff the distance to the relaxation is at most ``tol``.

    Solver failures count as inside. Outside results carry the separating
    direction ``b = mu - q``.
    """
    tol = numeric.MEMBERSHIP_TOL if tol is None else tol
    target = _full_vector(mu, structure.scenario)
    try:
        point = nearest_quantum(target, structure, metric, solver)
    except SolverError as exc:
        logger.warning("membership test failed (%s); classified as inside", exc.detail)
        return Membership(inside=True, distance=0.0, status=NUMERICAL_LIMIT)
    if point.distance <= tol:
        return Membership(True, point.distance, point.q, None, point.status)
    return Membership(False, point.distance, point.q, target - point.q, point.status)


def random_quantum_behavior(
    scenario: Scenario, rng: np.random.Generator, label: str = "random-quantum"
) -> ConditionalBehavior:
    """Born-rule behavior of a Haar-random pure state on one qubit per party,
    measured with random +/-1 qubit observables."""
    scenario.require_supported()
    n = scenario.parties
    dim = 2**n
    psi = rng.normal(size=dim) + 1j * rng.normal(size=dim)
    psi /= np.linalg.norm(psi)
    paulis = (
        np.array([[0, 1], [1, 0]], dtype=complex),
        np.array([[0, -1j], [1j, 0]], dtype=complex),
        np.array([[1, 0], [0, -1]], dtype=complex),
    )
    eye = np.eye(2, dtype=complex)
    projectors = []
    for p in range(n):
        per_input = []
        for _x in range(scenario.inputs_per_party[p]):
            axis = rng.normal(size=3)
            axis /= np.linalg.norm(axis)
            obs = sum(a * s for a, s in zip(axis, paulis))
            per_input.append(((eye + obs) / 2, (eye - obs) / 2))
        projectors.append(per_input)
    probs = np.empty(scenario.size)
    for c, z in scenario.cells():
        outs = scenario.decode_outputs(c)
        ins = scenario.decode_inputs(z)
        op = projectors[0][ins[0]][outs[0]]
        for p in range(1, n):
            op = np.kron(op, projectors[p][ins[p]][outs[p]])
        probs[scenario.index(c, z)] = float(np.real(np.vdot(psi, op @ psi)))
    probs = np.clip(probs, 0.0, None)
    k = scenario.num_outputs
    probs = probs / np.repeat(probs.reshape(-1, k).sum(axis=1), k)
    return ConditionalBehavior(scenario, probs, label=label)


def guess_functional(scenario: Scenario, dmap: OutputMap, d: int, z: int) -> np.ndarray:
    """Coefficients of ``mu(d | z)``."""
    b = np.zeros(scenario.size)
    table = dmap.table
    for c in range(scenario.num_outputs):
        if table[c] == d:
            b[scenario.index(c, z)] = 1.0
    return b


@dataclass(frozen=True, eq=False)
class NpaGuessing:
    """Guessing probability over the relaxation and its dual estimator.

    ``B`` is the joint estimator (``E_p(B) = sum_{c,z} p(c,z) B(c,z)``);
    ``B_conditional = B * p(z)`` acts on conditional behaviors.
    ``certified_value`` is ``E_p(B)`` after the dual point was shifted to be
    certifiably feasible.
    """

    value: float
    certified_value: float
    B: np.ndarray
    B_conditional: np.ndarray
    shift: float
    status: str


def guessing_probability_npa(
    p: Union[ConditionalBehavior, JointBehavior],
    dmap: OutputMap,
    structure: MomentStructure,
    certify: bool = True,
    solver: Optional[str] = None,
) -> NpaGuessing:
    """max over sub-normalised relaxation pieces of ``sum_k mu_k(d_k | z_k)``.

    One piece per (d, z); the pieces must add up to ``p(C|Z)``. The dual
    variables of that equality give B with ``sum mu B >= max_{d,z} mu(d|z)``
    on the relaxation.
    """
    scenario = structure.scenario
    if isinstance(p, JointBehavior):
        p_z = p.marginal_float()
        p_cond = p.conditional().as_float()
    else:
        p_z = to_float(uniform_inputs(scenario))
        p_cond = p.as_float()
    chart = NoSignallingChart(scenario)
    L = chart.L.astype(float)
    LT = L @ structure.T
    num_d, num_z = dmap.num_values, scenario.num_inputs

    pieces = [(d, z) for z in range(num_z) for d in range(num_d)]
    variables = [cp.Variable(structure.num_moments) for _ in pieces]
    constraints: List[Any] = []
    objective = 0
    for (d, z), m in zip(pieces, variables):
        constraints += _moment_constraints(structure, m, normalised=False)
        objective = objective + guess_functional(scenario, dmap, d, z) @ (structure.T @ m)
    chart_eq = sum(LT @ m for m in variables) == L @ p_cond
    norm_eq = sum(m[0] for m in variables) == 1
    constraints += [chart_eq, norm_eq]
    prog = cp.Problem(cp.Maximize(objective), constraints)
    status = run_solver(prog, solver or numeric.CONIC_SOLVER, "NPA guessing probability")
    value = float(prog.value)

    nu = np.asarray(chart_eq.dual_value, dtype=float).reshape(-1)
    nu0 = float(np.asarray(norm_eq.dual_value).reshape(-1)[0])
    B_cond = L.T @ nu + nu0 / num_z
    # cvxpy's sign convention for equality duals depends on the problem sense
    if abs(-(p_cond @ B_cond) - value) < abs(p_cond @ B_cond - value):
        B_cond = -B_cond

    shift = 0.0
    if certify:
        worst = math.inf
        for d, z in pieces:
            excess = max_linear(guess_functional(scenario, dmap, d, z) - B_cond, structure, solver)
            worst = min(worst, -excess.bound)
        if worst < 0:
            shift = -worst
            B_cond = B_cond + shift / num_z
            logger.debug("shifted the guessing dual by %.3g to certify feasibility", shift)
    B = B_cond / np.repeat(p_z, scenario.num_outputs)
    return NpaGuessing(
        value=value,
        certified_value=float(p_cond @ B_cond),
        B=B,
        B_conditional=B_cond,
        shift=shift,
        status=status,
    )


def level_bounds(functional: Any, scenario: Scenario) -> Tuple[float, float]:
    """Certified bounds at levels 1 and 2, for monotonicity checks."""
    return (
        max_linear(functional, structure_for(scenario, 1)).bound,
        max_linear(functional, structure_for(scenario, 2)).bound,
    )
