from enum import Enum
from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from pecert.core.config import numeric


class Metric(str, Enum):
    tv = "tv"  # averaged L1: 1/2 sum |u - v| / |Z|
    l2 = "l2"


class ZPolicy(str, Enum):
    random = "random"
    max_guess = "max-guess"
    fixed = "fixed"
    averaged = "averaged"


class SelectionRule(str, Enum):
    inverse_distance = "inverse-distance"
    uniform = "uniform"


class RefinementConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    iterations: int = Field(10, ge=0, description="I, number of iterations")
    nearest: int = Field(10, ge=1, description="m, size of the nearest-vertex list")
    seed: int = Field(0, ge=0)
    level: int = Field(numeric.NPA_LEVEL, ge=1, le=2)
    metric: Metric = Metric.tv
    min_weight: float = Field(numeric.MIN_STRATEGY_WEIGHT, ge=0)
    membership_tol: float = Field(numeric.MEMBERSHIP_TOL, gt=0)
    selection: SelectionRule = SelectionRule.inverse_distance
    z_policy: ZPolicy = ZPolicy.random
    fixed_z: int = Field(0, ge=0)


def _default_betas() -> List[float]:
    ratio = (numeric.BETA_MAX / numeric.BETA_MIN) ** (1 / (numeric.BETA_POINTS - 1))
    return [numeric.BETA_MIN * ratio**i for i in range(numeric.BETA_POINTS)]


class GridSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    betas: List[float] = Field(
        default_factory=_default_betas, description="log-spaced power candidates"
    )
    kappa_fractions: List[float] = Field(
        default_factory=lambda: list(numeric.KAPPA_FRACTIONS),
        description="kappa candidates as fractions of epsilon",
    )
    epsilon: float = 2.0**-128
    n: int = Field(1, ge=1)
    delta_t: float = 0.0

    @field_validator("betas")
    @classmethod
    def betas_positive(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError("the beta grid is empty")
        if any(b <= 0 for b in v):
            raise ValueError("all beta candidates must be positive")
        return v

    @field_validator("kappa_fractions")
    @classmethod
    def kappas_inside(cls, v: List[float]) -> List[float]:
        if not v:
            raise ValueError("the kappa grid is empty")
        if any(not 0 < k < 1 for k in v):
            raise ValueError("kappa fractions must lie in (0, 1)")
        return v

    @field_validator("epsilon")
    @classmethod
    def epsilon_valid(cls, v: float) -> float:
        if not 0 < v < 1:
            raise ValueError("epsilon must lie in (0, 1)")
        return v

    def kappas(self) -> List[float]:
        return [f * self.epsilon for f in self.kappa_fractions]


class BehaviorSource(BaseModel):
    generator: Optional[str] = Field(
        None, description="tilted-chsh, mermin, hardy or uniform"
    )
    params: Dict[str, float] = Field(default_factory=dict)
    path: Optional[str] = None

    @model_validator(mode="after")
    def exactly_one_source(self) -> "BehaviorSource":
        if (self.generator is None) == (self.path is None):
            raise ValueError("give exactly one of generator or path")
        return self


class RunConfig(BaseModel):
    """Schema-validated run configuration; defaults are written out in full."""

    scenario: str = "2-2-2"
    behavior: Optional[BehaviorSource] = None
    algorithm: Optional[str] = Field(None, description="nearv or maxgp")
    refinement: RefinementConfig = Field(default_factory=RefinementConfig)
    input_polytope: str = Field("ns", description="ns, ns-chsh or ns-lifted-chsh")
    grid: GridSpec = Field(default_factory=GridSpec)
    output_map: str = "AB"
    sv_bias: Optional[str] = None
    sv_convention: str = "box"
    method: str = "pe"
    eps_mix: float = 1e-6
    outputs: Dict[str, str] = Field(default_factory=dict)
    cache_db: Optional[str] = None
    seed: int = Field(0, ge=0)

    @field_validator("algorithm")
    @classmethod
    def algorithm_known(cls, v: Optional[str]) -> Optional[str]:
        if v is not None and v not in ("nearv", "maxgp"):
            raise ValueError("algorithm must be nearv or maxgp")
        return v

    @field_validator("method")
    @classmethod
    def method_known(cls, v: str) -> str:
        if v not in ("pe", "azuma", "ra-ns", "eat"):
            raise ValueError("method must be pe, azuma, ra-ns or eat")
        return v

    @field_validator("sv_convention")
    @classmethod
    def convention_known(cls, v: str) -> str:
        if v not in ("box", "theorem"):
            raise ValueError("sv_convention must be box or theorem")
        return v


class IterationRecord(BaseModel):
    iteration: int
    algorithm: str
    chosen: str = Field("", description="Chosen vertex or strategy, as text")
    z: Optional[int] = None
    guessing_probability: Optional[float] = None
    functional: List[str] = Field(default_factory=list)
    bound: Optional[str] = None
    quantum_bound: Optional[float] = None
    inserted: bool = False
    vertices_before: int
    vertices_after: int
    quantum_vertices: int = 0


class RunRecord(BaseModel):
    command: str
    config: Dict[str, Any]
    iterations: List[IterationRecord] = Field(default_factory=list)
    outputs: Dict[str, str] = Field(default_factory=dict)
    wall_time: float = 0.0
