from typing import Any, Dict, List, Optional

from pydantic import BaseModel, Field


class HalfspaceRecord(BaseModel):
    normal: List[str] = Field(..., description="Exact rationals as 'num/den'")
    bound: str


class CutProvenance(BaseModel):
    """Where a cut came from, enough to replay it."""

    algorithm: str
    iteration: int
    seed: Optional[int] = None
    source: str = Field("", description="Generating vertex or strategy, as text")
    quantum_bound: Optional[float] = None
    inserted: bool = True
    functional: List[str] = Field(
        default_factory=list, description="Bell functional in full coordinates"
    )
    bound: Optional[str] = None


class PolytopeFile(BaseModel):
    format: str = "pecert-polytope/1"
    chart: str = Field(..., description="Coordinate chart id, e.g. 'ns-2-2-2'")
    ambient_dim: int
    label: str = ""
    inequalities: List[HalfspaceRecord] = Field(default_factory=list)
    vertices: List[List[str]] = Field(default_factory=list)
    cuts: List[CutProvenance] = Field(default_factory=list)
    fingerprint: str = ""
    extra: Dict[str, Any] = Field(default_factory=dict)
