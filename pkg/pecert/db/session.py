from typing import Optional

from sqlalchemy import create_engine
from sqlalchemy.orm import Session, sessionmaker
from sqlalchemy.pool import StaticPool

from pecert.db import base  # noqa: F401


def make_session(uri: Optional[str] = None) -> Session:
    """Open a session on ``uri`` (a SQLite path or SQLAlchemy URL) and create
    the tables if needed. ``None`` gives a private in-memory database."""
    if uri is None:
        engine = create_engine(
            "sqlite://",
            connect_args={"check_same_thread": False},
            poolclass=StaticPool,
        )
    else:
        url = uri if "://" in uri else f"sqlite:///{uri}"
        engine = create_engine(url, connect_args={"check_same_thread": False})
    base.Base.metadata.create_all(bind=engine)
    SessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)
    return SessionLocal()
