from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, Field, field_validator


class BehaviorEntry(BaseModel):
    outputs: List[int]
    inputs: List[int]
    p: Union[str, float] = Field(
        ..., description="Probability: 'num/den' in rational mode, a float otherwise"
    )


class BehaviorFile(BaseModel):
    """On-disk behavior: scenario header plus one entry per (c, z) cell."""

    format: Literal["pecert-behavior/1"] = "pecert-behavior/1"
    scenario: str = Field(..., description="Scenario id, e.g. '2-2-2'")
    kind: Literal["conditional", "joint"]
    number_mode: Literal["rational", "float"]
    label: str = ""
    entries: List[BehaviorEntry]
    input_marginal: Optional[List[Union[str, float]]] = None
    provenance: Dict[str, Any] = Field(default_factory=dict)

    @field_validator("entries")
    @classmethod
    def entries_nonempty(cls, v: List[BehaviorEntry]) -> List[BehaviorEntry]:
        if not v:
            raise ValueError("a behavior file needs at least one entry")
        return v


class TableFixture(BaseModel):
    """Tabular conditional behavior (rows = joint outputs, columns = inputs)."""

    format: Literal["pecert-table/1"] = "pecert-table/1"
    scenario: str
    label: str = ""
    description: str = ""
    # Eigenvalue the recording convention assigns to outcome 0.
    outcome_zero_eigenvalue: Literal[1, -1] = 1
    rounds_per_setting: Optional[int] = None
    columns: List[str]
    rows: Dict[str, List[str]]

    @field_validator("columns")
    @classmethod
    def columns_binary(cls, v: List[str]) -> List[str]:
        if any(set(col) - {"0", "1"} for col in v):
            raise ValueError("column keys must be bit strings")
        return v
