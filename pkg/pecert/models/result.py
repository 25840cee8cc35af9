import uuid

from sqlalchemy import Column, DateTime, Float, Integer, String, func

from pecert.db.base_class import Base


class ResultRecord(Base):
    __tablename__ = "results"

    id = Column(String, primary_key=True, index=True, default=lambda: str(uuid.uuid4()))
    n = Column(Integer, nullable=False)
    method = Column(String, index=True, nullable=False)  # "pe", "azuma", "ra-ns"
    polytope_fingerprint = Column(String, index=True, nullable=False)
    rate = Column(Float, nullable=False)
    total_bits = Column(Float, nullable=False)
    beta = Column(Float, nullable=True)
    kappa = Column(Float, nullable=True)
    wall_time = Column(Float, default=0.0, nullable=False)
    certificate_path = Column(String, nullable=True)

    created_at = Column(DateTime(timezone=True), server_default=func.now())
