from typing import Any, Dict, List, Optional

from pydantic import BaseModel, ConfigDict, Field


class CertificateFile(BaseModel):
    """Everything needed to re-verify an entropy certificate independently."""

    model_config = ConfigDict(protected_namespaces=())

    format: str = "pecert-certificate/1"
    method: str = Field(..., description="pe, azuma or ra-ns")
    scenario: str
    output_map: str
    n: int
    rate: float = Field(..., description="t' in bits per round")
    beta: Optional[float] = None
    kappa: Optional[float] = None
    epsilon: float
    delta_t: float = 0.0
    total_bits: float
    reported_bits: float = Field(..., description="total_bits clamped at 0")
    p_acc: str = "p_Acc"
    pef: Optional[List[float]] = None
    typical_behavior: Optional[List[float]] = Field(
        None, description="joint p(c, z) the rate is evaluated on"
    )
    input_marginal: Optional[List[float]] = None
    sv_bias: Optional[str] = None
    polytope_fingerprint: str = ""
    config: Dict[str, Any] = Field(default_factory=dict)
    extra: Dict[str, Any] = Field(default_factory=dict)


class ResultRow(BaseModel):
    n: int
    method: str
    polytope_fingerprint: str
    rate: float
    total_bits: float
    beta: Optional[float] = None
    kappa: Optional[float] = None
    wall_time: float = 0.0

    @classmethod
    def columns(cls) -> List[str]:
        return list(cls.model_fields)
