"""Small dense semidefinite programs with certified upper bounds.

Problems have the form::

    maximise    c . x
    subject to  sum_i x_i F_i  PSD
                A_eq x  = b_eq
                G x    <= h
                |x_i|  <= u_i          (used only for certification)

Primal and dual are both solved with cvxpy. The dual point is then repaired
(Z projected onto the PSD cone, lambda clipped at zero) and turned into a
rigorous upper bound ``s . b_eq + lambda . h + sum_i u_i |r_i|`` where ``r``
is the residual of the dual equality. That bound holds for every feasible x
regardless of solver accuracy.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Optional, Union

import cvxpy as cp
import numpy as np

from pecert.core.config import numeric
from pecert.core.errors import DomainError, InfeasibleError, SolverError, UnboundedError
from pecert.core.io import atomic_write_text

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
NUMERICAL_LIMIT = "numerical-limit"


@dataclass(frozen=True, eq=False)
class SdpProblem:
    objective: np.ndarray
    blocks: np.ndarray
    eq_matrix: np.ndarray
    eq_rhs: np.ndarray
    ineq_matrix: np.ndarray
    ineq_rhs: np.ndarray
    var_bound: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        n = self.objective.shape[0]
        if self.blocks.ndim != 3 or self.blocks.shape[0] != n:
            raise DomainError("blocks must have shape (n, side, side)")
        if self.blocks.shape[1] != self.blocks.shape[2]:
            raise DomainError("PSD blocks must be square")
        if not np.allclose(self.blocks, np.transpose(self.blocks, (0, 2, 1))):
            raise DomainError("PSD blocks must be symmetric")
        for name, mat, rhs in (
            ("equality", self.eq_matrix, self.eq_rhs),
            ("inequality", self.ineq_matrix, self.ineq_rhs),
        ):
            if mat.ndim != 2 or mat.shape[1] != n or mat.shape[0] != rhs.shape[0]:
                raise DomainError(f"{name} constraints do not match {n} variables")
        if self.var_bound.shape != (n,):
            raise DomainError("var_bound needs one entry per variable")

    @property
    def num_vars(self) -> int:
        return int(self.objective.shape[0])

    @property
    def side(self) -> int:
        return int(self.blocks.shape[1])

    def flat_blocks(self) -> np.ndarray:
        """Rows are variables, columns the row-major flattened matrix entries."""
        return self.blocks.reshape(self.num_vars, -1)

    @classmethod
    def build(
        cls,
        objective: np.ndarray,
        blocks: np.ndarray,
        eq_matrix: Optional[np.ndarray] = None,
        eq_rhs: Optional[np.ndarray] = None,
        ineq_matrix: Optional[np.ndarray] = None,
        ineq_rhs: Optional[np.ndarray] = None,
        var_bound: Optional[np.ndarray] = None,
        label: str = "",
    ) -> "SdpProblem":
        n = len(objective)
        empty = np.zeros((0, n))
        return cls(
            objective=np.asarray(objective, dtype=float),
            blocks=np.asarray(blocks, dtype=float),
            eq_matrix=empty if eq_matrix is None else np.asarray(eq_matrix, dtype=float),
            eq_rhs=np.zeros(0) if eq_rhs is None else np.asarray(eq_rhs, dtype=float),
            ineq_matrix=empty if ineq_matrix is None else np.asarray(ineq_matrix, dtype=float),
            ineq_rhs=np.zeros(0) if ineq_rhs is None else np.asarray(ineq_rhs, dtype=float),
            var_bound=(
                np.full(n, np.inf) if var_bound is None else np.asarray(var_bound, dtype=float)
            ),
            label=label,
        )


@dataclass(frozen=True, eq=False)
class DualCertificate:
    Z: np.ndarray
    ineq: np.ndarray
    eq: np.ndarray
    residual: np.ndarray


@dataclass(frozen=True, eq=False)
class ConicSolution:
    value: float
    dual_value: float
    certified_bound: float
    x: np.ndarray
    gram: np.ndarray
    dual: Optional[DualCertificate]
    status: str
    gap: float
    info: Dict[str, Any] = field(default_factory=dict)


def check_status(problem: cp.Problem, what: str) -> str:
    status = problem.status
    if status == cp.OPTIMAL:
        return OPTIMAL
    if status == cp.OPTIMAL_INACCURATE:
        logger.warning("%s solved inaccurately", what)
        return NUMERICAL_LIMIT
    if status in (cp.INFEASIBLE, cp.INFEASIBLE_INACCURATE):
        raise InfeasibleError(f"{what} is infeasible")
    if status in (cp.UNBOUNDED, cp.UNBOUNDED_INACCURATE):
        raise UnboundedError(f"{what} is unbounded", ray=())
    raise SolverError(f"{what} failed with status {status}", status or NUMERICAL_LIMIT)


def run_solver(problem: cp.Problem, solver: str, what: str) -> str:
    try:
        problem.solve(solver=solver)
    except cp.error.SolverError as exc:
        raise SolverError(f"{what}: {exc}", NUMERICAL_LIMIT) from exc
    return check_status(problem, what)


def _solve_primal(problem: SdpProblem, solver: str) -> tuple:
    n, s = problem.num_vars, problem.side
    x = cp.Variable(n)
    X = cp.Variable((s, s), symmetric=True)
    constraints = [X == cp.reshape(problem.flat_blocks().T @ x, (s, s), order="C"), X >> 0]
    if problem.eq_matrix.shape[0]:
        constraints.append(problem.eq_matrix @ x == problem.eq_rhs)
    if problem.ineq_matrix.shape[0]:
        constraints.append(problem.ineq_matrix @ x <= problem.ineq_rhs)
    prog = cp.Problem(cp.Maximize(problem.objective @ x), constraints)
    status = run_solver(prog, solver, f"primal SDP {problem.label}".strip())
    return float(prog.value), np.asarray(x.value, dtype=float), np.asarray(X.value), status


def _solve_dual(problem: SdpProblem, solver: str) -> tuple:
    s = problem.side
    Z = cp.Variable((s, s), PSD=True)
    n_ineq, n_eq = problem.ineq_matrix.shape[0], problem.eq_matrix.shape[0]
    lam = cp.Variable(n_ineq, nonneg=True) if n_ineq else None
    mu = cp.Variable(n_eq) if n_eq else None
    adjoint = problem.flat_blocks() @ cp.reshape(Z, (s * s,), order="C")
    stationarity = problem.objective + adjoint
    terms = []
    if lam is not None:
        stationarity = stationarity - problem.ineq_matrix.T @ lam
        terms.append(problem.ineq_rhs @ lam)
    if mu is not None:
        stationarity = stationarity - problem.eq_matrix.T @ mu
        terms.append(problem.eq_rhs @ mu)
    objective = cp.sum(cp.hstack(terms)) if terms else cp.Constant(0.0)
    prog = cp.Problem(cp.Minimize(objective), [stationarity == 0])
    status = run_solver(prog, solver, f"dual SDP {problem.label}".strip())
    lam_v = np.asarray(lam.value, dtype=float) if lam is not None else np.zeros(0)
    mu_v = np.asarray(mu.value, dtype=float) if mu is not None else np.zeros(0)
    return float(prog.value), np.asarray(Z.value, dtype=float), lam_v, mu_v, status


def certify_dual(problem: SdpProblem, Z: np.ndarray, lam: np.ndarray, mu: np.ndarray) -> tuple:
    """Repair a dual point and return ``(bound, certificate)``.

    The bound is infinite when the residual touches an unbounded variable.
    """
    Zs = 0.5 * (Z + Z.T)
    w, V = np.linalg.eigh(Zs)
    Zp = (V * np.clip(w, 0.0, None)) @ V.T
    lam = np.clip(lam, 0.0, None)
    residual = problem.objective + problem.flat_blocks() @ Zp.reshape(-1)
    if lam.size:
        residual = residual - problem.ineq_matrix.T @ lam
    if mu.size:
        residual = residual - problem.eq_matrix.T @ mu
    terms = list(problem.eq_rhs * mu) + list(problem.ineq_rhs * lam)
    slack = 0.0
    for r, u in zip(residual, problem.var_bound):
        if r == 0:
            continue
        if not math.isfinite(u):
            return math.inf, DualCertificate(Zp, lam, mu, residual)
        slack += abs(r) * u
    terms.append(slack)
    bound = math.fsum(terms)
    # float rounding in the sums above
    bound += 1e-12 * (1.0 + math.fsum(abs(t) for t in terms))
    return bound, DualCertificate(Zp, lam, mu, residual)


def solve_sdp(
    problem: SdpProblem, solver: Optional[str] = None, certify: bool = True
) -> ConicSolution:
    solver = solver or numeric.CONIC_SOLVER
    value, x, gram, status = _solve_primal(problem, solver)
    if not certify:
        return ConicSolution(value, value, math.inf, x, gram, None, status, 0.0)
    dual_value, Z, lam, mu, dual_status = _solve_dual(problem, solver)
    bound, cert = certify_dual(problem, Z, lam, mu)
    gap = abs(dual_value - value) / (1.0 + abs(value))
    if dual_status != OPTIMAL or gap > numeric.DUALITY_GAP_TOL or not math.isfinite(bound):
        status = NUMERICAL_LIMIT
        logger.warning(
            "SDP %s: gap %.3g, certified bound %s (primal %.12g)",
            problem.label,
            gap,
            bound,
            value,
        )
    logger.debug(
        "SDP %s: primal %.12g dual %.12g certified %.12g", problem.label, value, dual_value, bound
    )
    return ConicSolution(value, dual_value, bound, x, gram, cert, status, gap)


def dump_sdpa(problem: SdpProblem, path: Union[str, Path]) -> None:
    """Write the problem in SDPA sparse format.

    SDPA minimises, so the objective is negated. Block 1 is the moment
    matrix; block 2 is a diagonal (LP) block holding ``h - G x >= 0`` and
    each equality as a pair of opposite inequalities.
    """
    n = problem.num_vars
    lp_rows = [(problem.ineq_matrix[k], problem.ineq_rhs[k]) for k in range(problem.ineq_rhs.size)]
    for k in range(problem.eq_rhs.size):
        lp_rows.append((problem.eq_matrix[k], problem.eq_rhs[k]))
        lp_rows.append((-problem.eq_matrix[k], -problem.eq_rhs[k]))
    lines = [f'"pecert SDP {problem.label}"', str(n)]
    lines.append("2" if lp_rows else "1")
    lines.append(f"{problem.side} -{len(lp_rows)}" if lp_rows else str(problem.side))
    lines.append(" ".join(repr(float(-c)) for c in problem.objective))
    for k, (row, rhs) in enumerate(lp_rows, start=1):
        if rhs:
            lines.append(f"0 2 {k} {k} {-float(rhs)!r}")
    for i in range(n):
        block = problem.blocks[i]
        for r in range(problem.side):
            for c in range(r, problem.side):
                if block[r, c]:
                    lines.append(f"{i + 1} 1 {r + 1} {c + 1} {float(block[r, c])!r}")
        for k, (row, _rhs) in enumerate(lp_rows, start=1):
            if row[i]:
                lines.append(f"{i + 1} 2 {k} {k} {-float(row[i])!r}")
    atomic_write_text(path, "\n".join(lines) + "\n")
