"""Probability estimation factors (PEFs) and entropy certificates.

A PEF with power ``beta`` is a nonnegative ``F(c, z)`` with

    E_mu[ F(C, Z) mu(D|Z)^beta ] <= 1

for every allowed joint behavior ``mu``. Because the left-hand side is
linear in ``mu`` it suffices to check the extreme points of the allowed
polytope. Rates are in bits (log base 2).
"""

import itertools
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import cvxpy as cp
import numpy as np

from pecert.core.config import numeric, settings
from pecert.core.errors import DomainError, InfeasibleError, PecertError, SolverError
from pecert.engine.behaviors import ConditionalBehavior, JointBehavior, TrialLog
from pecert.engine.polytope import VPolytope
from pecert.engine.quantum.sdp import OPTIMAL, run_solver
from pecert.engine.rational import to_float
from pecert.engine.scenario import OutputMap, Scenario
from pecert.schemas.run import GridSpec

logger = logging.getLogger(__name__)

Vertices = Union[np.ndarray, VPolytope, Sequence[Sequence[float]]]


@dataclass(frozen=True, eq=False)
class Pef:
    values: np.ndarray
    beta: float
    dmap: OutputMap

    def __post_init__(self) -> None:
        values = np.asarray(self.values, dtype=float).reshape(-1)
        if values.shape != (self.scenario.size,):
            raise DomainError(f"PEF needs {self.scenario.size} values")
        if np.any(values < 0) or not np.all(np.isfinite(values)):
            raise DomainError("PEF values must be finite and nonnegative")
        if not self.beta > 0:
            raise DomainError("PEF power beta must be positive")
        values = values.copy()
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @property
    def scenario(self) -> Scenario:
        return self.dmap.scenario

    def log_values(self) -> np.ndarray:
        """log2 F, with F floored at the optimisation floor."""
        return np.log2(np.maximum(self.values, numeric.PEF_FLOOR))

    def rate(self, p: JointBehavior) -> float:
        """``t' = E_p[log2 F] / beta``; cells with p = 0 contribute nothing."""
        probs = p.as_float()
        mask = probs > 0
        return math.fsum(probs[mask] * self.log_values()[mask]) / self.beta

    def with_beta(self, beta: float) -> "Pef":
        return Pef(self.values, beta, self.dmap)


def joint_constraint_vertices(
    vertices: Vertices, p_z: Sequence[float], scenario: Scenario
) -> np.ndarray:
    """Joint vertices ``v(c|z) p(z)`` from conditional ones."""
    cond = _as_rows(vertices, scenario)
    weights = np.repeat(np.asarray([float(x) for x in p_z]), scenario.num_outputs)
    if weights.shape != (scenario.size,):
        raise DomainError("input distribution has the wrong length")
    return cond * weights


def _as_rows(vertices: Vertices, scenario: Scenario) -> np.ndarray:
    if isinstance(vertices, VPolytope):
        return vertices.full_vertices(scenario)
    rows = np.asarray(vertices)
    if rows.dtype == object:
        rows = np.array([to_float(r) for r in rows])
    rows = np.asarray(rows, dtype=float)
    if rows.ndim != 2 or rows.shape[1] != scenario.size:
        raise DomainError(f"vertices must be rows of length {scenario.size}")
    if rows.shape[0] == 0:
        raise DomainError("vertex list is empty")
    return rows


def _joint_rows(
    vertices: Vertices, scenario: Scenario, p_z: Optional[Sequence[float]]
) -> np.ndarray:
    """Joint vertex rows; conditional input (a VPolytope over an NS chart or
    rows whose contexts each sum to 1) needs ``p_z``."""
    if isinstance(vertices, VPolytope) and not vertices.chart_id.startswith("joint-"):
        if p_z is None:
            raise DomainError("conditional vertices need an input distribution")
        return joint_constraint_vertices(vertices, p_z, scenario)
    if p_z is not None:
        return joint_constraint_vertices(vertices, p_z, scenario)
    return _as_rows(vertices, scenario)


def constraint_matrix(joint: np.ndarray, dmap: OutputMap, beta: float) -> np.ndarray:
    """``K[k, (c,z)] = mu_k(c,z) mu_k(d(c)|z)^beta`` with ``0^beta = 0``."""
    scenario = dmap.scenario
    k = scenario.num_outputs
    table = dmap.table
    K = np.zeros_like(joint)
    for z in range(scenario.num_inputs):
        block = joint[:, z * k : (z + 1) * k]
        p_zk = block.sum(axis=1)
        for d in range(dmap.num_values):
            cols = np.flatnonzero(table == d)
            mass = block[:, cols].sum(axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                cond = np.where(p_zk > 0, mass / np.where(p_zk > 0, p_zk, 1.0), 0.0)
            factor = np.where(cond > 0, np.power(np.clip(cond, 0.0, 1.0), beta), 0.0)
            for c in cols:
                K[:, z * k + c] = block[:, c] * factor
    return K


@dataclass(frozen=True)
class PefCheck:
    valid: bool
    worst_index: int
    worst_value: float
    margin: float


def verify_pef(
    F: Pef,
    vertices: Vertices,
    p_z: Optional[Sequence[float]] = None,
    slack: float = numeric.PEF_VERIFY_SLACK,
) -> PefCheck:
    """Check ``E_mu[F mu(D|Z)^beta] <= 1 + slack`` on every vertex."""
    joint = _joint_rows(vertices, F.scenario, p_z)
    K = constraint_matrix(joint, F.dmap, F.beta)
    values = [math.fsum(row * F.values) for row in K]
    worst = int(np.argmax(values))
    margin = 1.0 + slack - values[worst]
    return PefCheck(margin >= 0, worst, values[worst], margin)


def optimize_pef(
    p: JointBehavior,
    vertices: Vertices,
    dmap: OutputMap,
    beta: float,
    p_z: Optional[Sequence[float]] = None,
    floor: float = numeric.PEF_FLOOR,
    solver: Optional[str] = None,
) -> Pef:
    """Maximise ``sum p log F`` subject to the vertex constraints.

    The solver output is scaled down until the constraints hold in
    compensated summation with a relative margin, so the returned F is a
    PEF on ``vertices`` independently of solver accuracy.
    """
    if not beta > 0:
        raise DomainError("beta must be positive")
    scenario = dmap.scenario
    joint = _joint_rows(vertices, scenario, p_z)
    K = constraint_matrix(joint, dmap, beta)
    probs = p.as_float()
    support = probs > 0

    values = None
    for attempt in range(3):
        F = cp.Variable(scenario.size)
        objective = cp.Maximize(probs[support] @ cp.log(F[support]))
        prog = cp.Problem(objective, [K @ F <= 1, F >= floor])
        try:
            status = run_solver(prog, solver or numeric.CONIC_SOLVER, f"PEF at beta={beta:g}")
        except InfeasibleError:
            floor /= 1e3
            logger.warning("PEF floor infeasible; retrying with floor %.3g", floor)
            continue
        if status != OPTIMAL:
            logger.warning("PEF optimisation at beta=%g stopped at its numerical limit", beta)
        values = np.maximum(np.asarray(F.value, dtype=float), floor)
        break
    if values is None:
        raise InfeasibleError(f"no feasible PEF at beta={beta:g}")

    worst = max(math.fsum(row * values) for row in K)
    if worst > 1.0:
        values = values / (worst * (1.0 + numeric.PEF_SCALE_MARGIN))
        logger.debug("scaled PEF at beta=%g by 1/%.12g", beta, worst)
    return Pef(values, beta, dmap)


@dataclass(frozen=True)
class EntropyCertificate:
    """``total = n t' - log2(1/kappa)/beta - log2(1/(epsilon - kappa)) - delta_t``."""

    n: int
    rate: float
    beta: float
    kappa: float
    epsilon: float
    delta_t: float
    total: float
    fingerprint: str = ""
    p_acc: str = "p_Acc"

    @property
    def reported(self) -> float:
        return max(0.0, self.total)

    def recompute(self) -> float:
        return _total(self.rate, self.beta, self.kappa, self.epsilon, self.n, self.delta_t)


def _total(rate: float, beta: float, kappa: float, epsilon: float, n: int, delta_t: float) -> float:
    return n * rate - (-math.log2(kappa)) / beta - (-math.log2(epsilon - kappa)) - delta_t


def entropy_bound(
    rate: float,
    beta: float,
    kappa: float,
    epsilon: float,
    n: int,
    delta_t: float = 0.0,
    fingerprint: str = "",
) -> EntropyCertificate:
    if not 0 < kappa < epsilon:
        raise DomainError("need 0 < kappa < epsilon")
    if not epsilon < 1:
        raise DomainError("epsilon must be below 1")
    if not beta > 0:
        raise DomainError("beta must be positive")
    if n < 1:
        raise DomainError("n must be at least 1")
    total = _total(rate, beta, kappa, epsilon, n, delta_t)
    return EntropyCertificate(n, rate, beta, kappa, epsilon, delta_t, total, fingerprint)


@dataclass
class GridResult:
    pef: Pef
    kappa: float
    certificate: EntropyCertificate
    table: List[Tuple[float, float, float]] = field(default_factory=list)


def _optimize_betas(
    p: JointBehavior,
    vertices: Vertices,
    dmap: OutputMap,
    betas: Sequence[float],
    p_z: Optional[Sequence[float]],
) -> Dict[float, Pef]:
    scenario = dmap.scenario
    joint = _joint_rows(vertices, scenario, p_z)

    def run(beta: float) -> Optional[Pef]:
        try:
            return optimize_pef(p, joint, dmap, beta)
        except (SolverError, InfeasibleError) as exc:
            logger.warning("grid point beta=%g skipped: %s", beta, exc.detail)
            return None

    with ThreadPoolExecutor(max_workers=settings.THREADS) as pool:
        results = list(pool.map(run, betas))
    pefs = {beta: F for beta, F in zip(betas, results) if F is not None}
    if not pefs:
        raise InfeasibleError("every grid point is infeasible")
    return pefs


def _best(
    p: JointBehavior,
    pefs: Dict[float, Pef],
    grid: GridSpec,
    n: int,
    fingerprint: str,
) -> GridResult:
    best: Optional[GridResult] = None
    table = []
    for beta, F in pefs.items():
        rate = F.rate(p)
        for kappa in grid.kappas():
            cert = entropy_bound(rate, beta, kappa, grid.epsilon, n, grid.delta_t, fingerprint)
            table.append((beta, kappa, cert.total))
            if best is None or cert.total > best.certificate.total:
                best = GridResult(F, kappa, cert)
    assert best is not None
    best.table = table
    return best


def grid_search(
    p: JointBehavior,
    vertices: Vertices,
    dmap: OutputMap,
    grid: GridSpec,
    p_z: Optional[Sequence[float]] = None,
    fingerprint: str = "",
) -> GridResult:
    """Best (F, beta, kappa) for ``grid.n`` rounds."""
    pefs = _optimize_betas(p, vertices, dmap, grid.betas, p_z)
    return _best(p, pefs, grid, grid.n, fingerprint)


def n_sweep(
    p: JointBehavior,
    vertices: Vertices,
    dmap: OutputMap,
    grid: GridSpec,
    ns: Sequence[int],
    p_z: Optional[Sequence[float]] = None,
    fingerprint: str = "",
) -> List[GridResult]:
    """One grid search per n, reusing the per-beta PEFs."""
    pefs = _optimize_betas(p, vertices, dmap, grid.betas, p_z)
    return [_best(p, pefs, grid, int(n), fingerprint) for n in ns]


def witness_value(
    F: Pef, observed: Union[TrialLog, JointBehavior], n: Optional[int] = None
) -> float:
    """``W = sum_i log2 F(c_i, z_i) / beta`` for a trial log, or
    ``n sum p_obs log2 F / beta`` for observed frequencies. F is floored."""
    logs = F.log_values()
    if isinstance(observed, TrialLog):
        counts = observed.cell_counts()
        return math.fsum(counts * logs) / F.beta
    if n is None:
        raise DomainError("witness_value on frequencies needs n")
    probs = observed.as_float()
    mask = probs > 0
    return n * math.fsum(probs[mask] * logs[mask]) / F.beta


def witness_threshold(F: Pef, p: JointBehavior, n: int, delta_t: float = 0.0) -> float:
    """Acceptance threshold ``E_p[W] - delta_t`` on the typical behavior."""
    return n * F.rate(p) - delta_t


@dataclass(frozen=True)
class ProtocolOutcome:
    W: Optional[float]
    threshold: Optional[float]
    accept: bool
    certificate: Optional[EntropyCertificate]


def simulate_protocol(
    p: JointBehavior,
    F: Pef,
    n: int,
    seed: Union[int, np.random.Generator],
    kappa: float,
    epsilon: float,
    delta_t: float = 0.0,
    fingerprint: str = "",
) -> ProtocolOutcome:
    """Run ``n`` IID rounds from ``p``, evaluate the witness and decide."""
    if n <= 0:
        return ProtocolOutcome(None, None, False, None)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    weights = np.clip(p.as_float(), 0.0, None)
    counts = rng.multinomial(n, weights / weights.sum())
    W = math.fsum(counts * F.log_values()) / F.beta
    threshold = witness_threshold(F, p, n, delta_t)
    accept = W >= threshold
    certificate = None
    if accept:
        certificate = entropy_bound(F.rate(p), F.beta, kappa, epsilon, n, delta_t, fingerprint)
    return ProtocolOutcome(W, threshold, accept, certificate)


def conditional_entropy(
    mu: Union[ConditionalBehavior, JointBehavior, np.ndarray],
    dmap: OutputMap,
    p_z: Optional[Sequence[float]] = None,
) -> float:
    """Shannon entropy H(D|Z) in bits."""
    scenario = dmap.scenario
    if isinstance(mu, JointBehavior):
        joint = mu.as_float()
    else:
        cond = mu.as_float() if isinstance(mu, ConditionalBehavior) else np.asarray(mu, float)
        weights = p_z if p_z is not None else np.full(scenario.num_inputs, 1 / scenario.num_inputs)
        joint = joint_constraint_vertices(cond[None, :], weights, scenario)[0]
    k = scenario.num_outputs
    table = dmap.table
    total = 0.0
    for z in range(scenario.num_inputs):
        block = joint[z * k : (z + 1) * k]
        pz = block.sum()
        if pz <= 0:
            continue
        for d in range(dmap.num_values):
            q = block[table == d].sum() / pz
            if q > 0:
                total -= pz * q * math.log2(q)
    return total


def product_pef_check(
    F: Pef,
    allowed: Sequence[np.ndarray],
    rounds: int,
    choice: Callable[[Tuple[int, ...]], int],
) -> float:
    """Brute-force ``E[prod_i F(c_i,z_i) mu(D_seq|Z_seq)^beta]`` over all
    length-``rounds`` sequences.

    Round ``i`` follows the joint behavior ``allowed[choice(z_1..z_{i-1})]``,
    so the behavior may depend on the past inputs only.
    """
    scenario = F.scenario
    k = scenario.num_outputs
    table = F.dmap.table
    behaviors = [np.asarray(a, dtype=float) for a in allowed]
    cells = range(scenario.size)
    prob: Dict[Tuple[int, ...], float] = {}
    for seq in itertools.product(cells, repeat=rounds):
        zs = tuple(cell // k for cell in seq)
        pr = 1.0
        for i, cell in enumerate(seq):
            pr *= behaviors[choice(zs[:i])][cell]
            if pr == 0:
                break
        prob[seq] = pr
    dz: Dict[Tuple[Tuple[int, ...], Tuple[int, ...]], float] = {}
    zonly: Dict[Tuple[int, ...], float] = {}
    for seq, pr in prob.items():
        zs = tuple(cell // k for cell in seq)
        ds = tuple(int(table[cell % k]) for cell in seq)
        dz[(ds, zs)] = dz.get((ds, zs), 0.0) + pr
        zonly[zs] = zonly.get(zs, 0.0) + pr
    terms = []
    for seq, pr in prob.items():
        if pr == 0:
            continue
        zs = tuple(cell // k for cell in seq)
        ds = tuple(int(table[cell % k]) for cell in seq)
        T = math.prod(F.values[cell] for cell in seq)
        terms.append(pr * T * (dz[(ds, zs)] / zonly[zs]) ** F.beta)
    return math.fsum(terms)


def certificate_consistent(cert: EntropyCertificate, tol: float = 1e-9) -> bool:
    """The stored total recomputes from the stored fields."""
    try:
        return abs(cert.recompute() - cert.total) <= tol * max(1.0, abs(cert.total))
    except (ValueError, PecertError):
        return False
