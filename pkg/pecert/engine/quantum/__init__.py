from .moments import MomentStructure, build_moment_structure  # noqa: F401
from .npa import (  # noqa: F401
    Membership,
    NearestPoint,
    NpaGuessing,
    QuantumBound,
    guessing_probability_npa,
    max_linear,
    membership,
    nearest_quantum,
    random_quantum_behavior,
    structure_for,
)
from .sdp import ConicSolution, SdpProblem, dump_sdpa, solve_sdp  # noqa: F401
