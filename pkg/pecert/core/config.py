import os
from typing import Tuple

from pydantic import BaseModel, ConfigDict, Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    PROJECT_NAME: str = "pecert"

    # Worker threads used for concurrent membership tests, PEF grid points
    # and n-sweeps. This is the only setting read from the environment
    # (PECERT_THREADS); everything numerical lives in NumericDefaults below
    # or in the run configuration.
    THREADS: int = Field(default_factory=lambda: os.cpu_count() or 1, ge=1)

    model_config = SettingsConfigDict(env_prefix="PECERT_", case_sensitive=True)


class NumericDefaults(BaseModel):
    """Tolerances and defaults shared by the engine modules."""

    model_config = ConfigDict(frozen=True)

    # Float-mode normalisation tolerance for behaviors.
    NORMALIZATION_TOL: float = 1e-12

    # A behavior is quantum (inside the NPA relaxation) when its averaged
    # L1 distance to the relaxation is at most this value. Ties go "inside".
    MEMBERSHIP_TOL: float = 1e-7

    # Default NPA hierarchy level.
    NPA_LEVEL: int = 2

    # cvxpy backend used for every conic program.
    CONIC_SOLVER: str = "CLARABEL"

    # Accepted relative duality gap before a solution is flagged as
    # numerical-limit. The certified bound is valid either way.
    DUALITY_GAP_TOL: float = 1e-7

    # Rationalisation of solver output. Cut normals use the smaller
    # denominator, cut bounds and probabilities the larger one.
    NORMAL_DENOMINATOR: int = 10**6
    BOUND_DENOMINATOR: int = 10**9

    # PEF optimisation floor on F and the slack used when verifying
    # E[F mu(D|Z)^beta] <= 1 on vertex lists.
    PEF_FLOOR: float = 1e-12
    PEF_VERIFY_SLACK: float = 1e-9
    # Relative margin applied when a solver PEF is scaled into the
    # certified-feasible region.
    PEF_SCALE_MARGIN: float = 1e-9

    # MaxGP ignores strategies whose weight is below this floor.
    MIN_STRATEGY_WEIGHT: float = 1e-9

    # Default (beta, kappa) grid.
    BETA_MIN: float = 1e-4
    BETA_MAX: float = 1.0
    BETA_POINTS: int = 41
    KAPPA_FRACTIONS: Tuple[float, ...] = (0.5, 0.25, 0.1)

    # Randomness-amplification baseline grids (k and s_Az).
    RA_GRID_POINTS: int = 200

    # Chart dimension up to which the pure-Python double description is the
    # default enumeration backend.
    DD_MAX_DIMENSION: int = 12


settings = Settings()
numeric = NumericDefaults()
