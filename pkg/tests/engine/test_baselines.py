import math
from dataclasses import replace

import numpy as np
import pytest
from pydantic import ValidationError

from pecert.core.errors import DomainError
from pecert.engine.baselines import (
    DualEstimator,
    RaParams,
    azuma_bound,
    azuma_estimator,
    ra_ns_bound,
)
from pecert.engine.behaviors import make_tilted_chsh
from pecert.engine.quantum.moments import MomentStructure
from pecert.engine.scenario import OutputMap
from tests.utils.utils import quantum_samples

EPS = 2.0**-64


@pytest.fixture(scope="module")
def estimator(level1: MomentStructure, dmap_ab: OutputMap) -> DualEstimator:
    return azuma_estimator(make_tilted_chsh(1, 0.05), dmap_ab, level1)


def test_estimator_range(estimator: DualEstimator) -> None:
    assert estimator.q_min <= estimator.expected <= estimator.q_max + 1e-9
    assert 0.25 <= estimator.expected <= 1.0 + 1e-6
    assert estimator.gamma >= 0
    assert estimator.rate == pytest.approx(-math.log2(estimator.expected))


def test_azuma_penalty_scales_as_sqrt_n(estimator: DualEstimator) -> None:
    one = azuma_bound(estimator, 10**6, EPS / 2, EPS)
    two = azuma_bound(estimator, 2 * 10**6, EPS / 2, EPS)
    assert two.penalty / one.penalty == pytest.approx(math.sqrt(2))


def test_azuma_without_spread(estimator: DualEstimator) -> None:
    """gamma = 0 leaves n t + log2(epsilon - kappa)"""
    flat = replace(estimator, gamma=0.0)
    bound = azuma_bound(flat, 1000, EPS / 2, EPS, t=0.1)
    assert bound.penalty == 0.0
    assert bound.total == pytest.approx(100.0 + math.log2(EPS / 2))


def test_azuma_is_deterministic(estimator: DualEstimator) -> None:
    a = azuma_bound(estimator, 10**8, EPS / 4, EPS)
    b = azuma_bound(estimator, 10**8, EPS / 4, EPS)
    assert a == b
    assert a.reported == max(0.0, a.total)


def test_azuma_rejects_kappa(estimator: DualEstimator) -> None:
    with pytest.raises(DomainError):
        azuma_bound(estimator, 10, EPS, EPS)
    with pytest.raises(DomainError):
        azuma_bound(estimator, 0, EPS / 2, EPS)


def _ra(h: float, **kwargs) -> float:
    params = RaParams(h_exp=h, delta=0.1, n=10**8, epsilon=EPS, **kwargs)
    return ra_ns_bound(params).total


def test_ra_ns_zero_violation() -> None:
    assert _ra(0.0) == 0.0


def test_ra_ns_monotone_in_violation() -> None:
    totals = [_ra(h, grid_points=60) for h in (0.0, 0.01, 0.03, 0.06)]
    assert totals == sorted(totals)
    assert totals[-1] > 0


def test_ra_ns_rejects_large_violation() -> None:
    with pytest.raises(ValidationError):
        RaParams(h_exp=0.07, delta=0.1, n=10, epsilon=EPS)


def test_ra_ns_budget() -> None:
    params = RaParams(h_exp=0.01, delta=0.1, n=100, epsilon=0.5)
    assert params.eps_az_budget == 0.25


def test_ra_ns_gamma_from_observed_value() -> None:
    params = RaParams(h_exp=0.04, delta=0.05, n=10**8, epsilon=2.0**-32)
    assert params.log2_gamma == pytest.approx(math.log2(1 - 0.04 / (0.25 - 0.05**2) ** 2))


def test_ra_ns_hand_computed() -> None:
    """The optimum sits within one bit of the crossing of the two terms.

    With ``k = 0`` the terms are ``2^{-c(h-s)}`` and ``2^{2 - B s^2}``;
    at their crossing ``s*`` both equal ``2^{e*}``, so the maximum of
    ``-log2`` of the sum lies in ``[-e* - 1, -e*]``.
    """
    h, delta, n, eps = 0.04, 0.05, 10**8, 2.0**-32
    c = -16 * n * math.log2(1 - h / (0.25 - delta**2) ** 2)
    B = n / (2 * math.log(2))
    s_star = (-c + math.sqrt(c * c + 4 * B * (c * h + 2))) / (2 * B)
    e_star = 2 - B * s_star**2
    bound = ra_ns_bound(RaParams(h_exp=h, delta=delta, n=n, epsilon=eps))
    assert -e_star - 1 + math.log2(eps) - 1e-6 <= bound.total
    assert bound.total <= -e_star + math.log2(eps) + 1e-6
    assert bound.total == pytest.approx(1.151e5, rel=1e-2)
    assert bound.params["k"] == 0.0


def test_ra_ns_stable_under_grid() -> None:
    coarse = _ra(0.03, grid_points=20)
    fine = _ra(0.03, grid_points=400)
    assert coarse == pytest.approx(fine, abs=1e-2)


def test_estimator_closes_guessing_gap(
    estimator: DualEstimator, level1: MomentStructure
) -> None:
    """E_p(B) from the dual matches the primal guessing value, and B stays in range"""
    assert estimator.expected >= estimator.guessing.value - 1e-7
    assert estimator.expected == pytest.approx(estimator.guessing.value, abs=1e-5)
    p_z = np.full(4, 0.25)
    joint = make_tilted_chsh(1, 0.05).to_joint(p_z)
    assert float(joint.as_float() @ estimator.B) == pytest.approx(estimator.expected, abs=1e-9)
    for q in quantum_samples(level1.scenario, 20, seed=4):
        value = float(q.to_joint(p_z).as_float() @ estimator.B)
        assert estimator.q_min - 1e-6 <= value <= estimator.q_max + 1e-6
