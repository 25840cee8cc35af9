from .behavior import BehaviorEntry, BehaviorFile, TableFixture  # noqa: F401
from .certificate import CertificateFile, ResultRow  # noqa: F401
from .polytope import CutProvenance, HalfspaceRecord, PolytopeFile  # noqa: F401
from .run import (  # noqa: F401
    BehaviorSource,
    GridSpec,
    IterationRecord,
    Metric,
    RefinementConfig,
    RunConfig,
    RunRecord,
    SelectionRule,
    ZPolicy,
)
from .store import ResultRecordCreate, VertexCacheCreate  # noqa: F401
