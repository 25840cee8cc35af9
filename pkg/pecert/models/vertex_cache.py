from sqlalchemy import Column, DateTime, Integer, String, Text, func

from pecert.db.base_class import Base


class VertexCacheEntry(Base):
    __tablename__ = "vertex_cache"

    # SHA-256 of the chart id and H-representation text
    id = Column(String, primary_key=True, index=True)
    chart_id = Column(String, index=True, nullable=False)
    label = Column(String, nullable=True)
    vertex_count = Column(Integer, nullable=False)
    # one vertex per line, coordinates as "num/den" separated by commas
    payload = Column(Text, nullable=False)

    created_at = Column(DateTime(timezone=True), server_default=func.now())
