"""Comparison bounds: min-entropy estimators with Azuma-Hoeffding, and the
non-signalling randomness-amplification bound for the MDL inequality."""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, Optional, Union

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.optimize import minimize_scalar

from pecert.core.config import numeric
from pecert.core.errors import DomainError
from pecert.engine.behaviors import ConditionalBehavior, JointBehavior
from pecert.engine.quantum.moments import MomentStructure
from pecert.engine.quantum.npa import NpaGuessing, guessing_probability_npa, max_linear
from pecert.engine.scenario import OutputMap

logger = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class DualEstimator:
    """Estimator ``B`` with ``E_mu(B) >= max_{d,z} mu(d|z)`` on the relaxation.

    ``q_max``/``q_min`` bound ``E_mu(B)`` over the relaxation at the fixed
    input distribution; ``gamma`` bounds ``|B(c,z) - E_mu(B)|``.
    """

    B: np.ndarray
    q_max: float
    q_min: float
    gamma: float
    expected: float
    guessing: NpaGuessing

    @property
    def rate(self) -> float:
        """``t = -log2 E_p(B)``."""
        return -math.log2(self.expected)


def azuma_estimator(
    p: Union[JointBehavior, ConditionalBehavior],
    dmap: OutputMap,
    structure: MomentStructure,
    solver: Optional[str] = None,
) -> DualEstimator:
    guess = guessing_probability_npa(p, dmap, structure, certify=True, solver=solver)
    q_max = max_linear(guess.B_conditional, structure, solver).bound
    q_min = -max_linear(-guess.B_conditional, structure, solver).bound
    B = guess.B
    gamma = float(max(np.max(B - q_min), np.max(q_max - B), 0.0))
    logger.info(
        "Azuma estimator: E_p(B)=%.10g, range [%.6g, %.6g], gamma=%.6g",
        guess.certified_value,
        q_min,
        q_max,
        gamma,
    )
    return DualEstimator(B, q_max, q_min, gamma, guess.certified_value, guess)


@dataclass(frozen=True)
class BaselineBound:
    method: str
    n: int
    total: float
    rate: float
    penalty: float
    params: Dict[str, float] = field(default_factory=dict)

    @property
    def reported(self) -> float:
        return max(0.0, self.total)


def azuma_bound(
    est: DualEstimator,
    n: int,
    kappa: float,
    epsilon: float,
    t: Optional[float] = None,
) -> BaselineBound:
    """``n t - gamma sqrt(2 n ln(1/kappa)) - log2(1/(epsilon - kappa))``."""
    if not 0 < kappa < epsilon < 1:
        raise DomainError("need 0 < kappa < epsilon < 1")
    if n < 1:
        raise DomainError("n must be at least 1")
    rate = est.rate if t is None else t
    penalty = est.gamma * math.sqrt(2 * n * -math.log(kappa))
    total = n * rate - penalty + math.log2(epsilon - kappa)
    return BaselineBound(
        "azuma", n, total, rate, penalty, {"kappa": kappa, "epsilon": epsilon, "gamma": est.gamma}
    )


class RaParams(BaseModel):
    """Randomness-amplification baseline parameters.

    Good rounds are bounded by ``gamma = 1 - h_exp/(1/4 - delta^2)^2``, the
    per-round guarantee at the observed MDL value.
    """

    model_config = ConfigDict(frozen=True)

    h_exp: float
    delta: float = Field(..., ge=0, lt=0.5)
    n: int = Field(..., ge=1)
    epsilon: float = Field(..., gt=0, lt=1)
    eps_prime_fraction: float = Field(0.5, gt=0, lt=1)
    grid_points: int = Field(numeric.RA_GRID_POINTS, ge=2)

    @model_validator(mode="after")
    def h_below_maximum(self) -> "RaParams":
        if self.h_exp > 1 / 16:
            raise ValueError("h_exp cannot exceed 1/16")
        return self

    @property
    def eps_az_budget(self) -> float:
        return self.epsilon * (1 - self.eps_prime_fraction)

    @property
    def log2_gamma(self) -> float:
        gamma = 1 - self.h_exp / (0.25 - self.delta**2) ** 2
        return math.log2(gamma) if gamma > 0 else -math.inf


def _ra_value(params: RaParams, s: float, k: float = 0.0) -> float:
    """``-log2(gamma^{alpha(k) n} + 2 eps_Az(s))``."""
    n, h = params.n, params.h_exp
    alpha = (h - s - k) / (1 / 16 - k)
    exponent = alpha * n * params.log2_gamma if alpha > 0 else 0.0
    log2_two_eps = 2 - n * s * s / (2 * math.log(2))
    return -float(np.logaddexp2(exponent, log2_two_eps))


def ra_ns_bound(params: RaParams) -> BaselineBound:
    """``max_{k, s} -log2(gamma^{alpha(k) n} + 2 eps_Az(s)) + log2 epsilon``.

    ``eps_Az(s) = 2 exp(-n s^2/2)`` must fit in the Azuma share of epsilon;
    ``alpha(k) = (h_exp - s - k)/(1/16 - k)`` for ``k`` in ``[0, h_exp - s]``.
    With ``h_exp <= 1/16`` alpha decreases in ``k``, so ``k = 0``. The
    deviation ``s`` is scanned on a grid and then refined on the bracket
    around the best grid point.
    """
    n, h = params.n, params.h_exp
    zero = BaselineBound("ra-ns", n, 0.0, 0.0, 0.0, {"delta": params.delta, "h_exp": h})
    s_min = math.sqrt(2 * math.log(2 / params.eps_az_budget) / n)
    if h - s_min <= 0:
        logger.info("RA-NS: h_exp=%.6g below the Azuma deviation %.6g; bound 0", h, s_min)
        return zero

    grid = np.linspace(s_min, h, params.grid_points, endpoint=False)
    values = [_ra_value(params, float(s)) for s in grid]
    i = int(np.argmax(values))
    lo = float(grid[max(i - 1, 0)])
    hi = float(grid[i + 1]) if i + 1 < len(grid) else h
    res = minimize_scalar(
        lambda s: -_ra_value(params, s),
        bounds=(lo, hi),
        method="bounded",
        options={"xatol": 1e-12 * h},
    )
    best, best_s = values[i], float(grid[i])
    if res.success and -res.fun > best:
        best, best_s = float(-res.fun), float(res.x)
    total = best + math.log2(params.epsilon)
    return BaselineBound(
        "ra-ns",
        n,
        total,
        total / n,
        -math.log2(params.epsilon),
        {"delta": params.delta, "h_exp": h, "k": 0.0, "s_az": best_s},
    )
