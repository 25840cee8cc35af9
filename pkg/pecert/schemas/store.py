from typing import Optional

from pydantic import BaseModel, Field

from pecert.schemas.certificate import ResultRow


class VertexCacheCreate(BaseModel):
    id: str = Field(..., description="Cache key of the H-representation")
    chart_id: str
    label: Optional[str] = None
    vertex_count: int = Field(..., ge=0)
    payload: str


class ResultRecordCreate(ResultRow):
    certificate_path: Optional[str] = None
