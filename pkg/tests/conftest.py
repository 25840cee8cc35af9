from typing import Generator

import pytest
from sqlalchemy import create_engine
from sqlalchemy.orm import Session, sessionmaker
from sqlalchemy.pool import StaticPool

from pecert.db.base import Base
from pecert.engine.polytope import VPolytope, enumerate_vertices, ns_polytope
from pecert.engine.quantum.moments import MomentStructure
from pecert.engine.quantum.npa import structure_for
from pecert.engine.scenario import NoSignallingChart, OutputMap, Scenario

# Use an in-memory SQLite database for testing
SQLALCHEMY_DATABASE_URL = "sqlite:///:memory:"

engine = create_engine(
    SQLALCHEMY_DATABASE_URL,
    connect_args={"check_same_thread": False},
    poolclass=StaticPool,
)
TestingSessionLocal = sessionmaker(autocommit=False, autoflush=False, bind=engine)


@pytest.fixture(scope="session")
def db() -> Generator[Session, None, None]:
    Base.metadata.create_all(bind=engine)
    session = TestingSessionLocal()
    yield session
    session.close()
    Base.metadata.drop_all(bind=engine)


@pytest.fixture(scope="session")
def bipartite() -> Scenario:
    return Scenario.bipartite()


@pytest.fixture(scope="session")
def tripartite() -> Scenario:
    return Scenario.tripartite()


@pytest.fixture(scope="session")
def chart(bipartite: Scenario) -> NoSignallingChart:
    return NoSignallingChart(bipartite)


@pytest.fixture(scope="session")
def dmap_ab(bipartite: Scenario) -> OutputMap:
    return OutputMap.from_spec(bipartite, "AB")


@pytest.fixture(scope="session")
def ns_vertices(bipartite: Scenario) -> VPolytope:
    """The 24 vertices of the bipartite no-signalling polytope."""
    return enumerate_vertices(ns_polytope(bipartite))


@pytest.fixture(scope="session")
def level1(bipartite: Scenario) -> MomentStructure:
    return structure_for(bipartite, 1)


@pytest.fixture(scope="session")
def level2(bipartite: Scenario) -> MomentStructure:
    return structure_for(bipartite, 2)
