"""Exception hierarchy.

Every error carries the process exit code the CLI reports for it and a
human readable ``detail``, in the same spirit as an HTTP status code and
detail message.
"""

from typing import Any, Optional, Sequence


class PecertError(Exception):
    exit_code: int = 1

    def __init__(self, detail: str) -> None:
        super().__init__(detail)
        self.detail = detail


class ConfigError(PecertError):
    """Bad configuration, bad file contents or bad operation arguments."""

    exit_code = 2


class DomainError(ConfigError, ValueError):
    """An argument lies outside the domain of an operation."""


class InfeasibleError(PecertError):
    """An optimisation or polytope operation has an empty feasible set."""

    exit_code = 3

    def __init__(self, detail: str, certificate: Optional[Any] = None) -> None:
        super().__init__(detail)
        self.certificate = certificate


class UnboundedError(InfeasibleError):
    """A polyhedron is unbounded; ``ray`` is a recession direction."""

    def __init__(self, detail: str, ray: Sequence[Any]) -> None:
        super().__init__(detail, certificate=tuple(ray))
        self.ray = tuple(ray)


class SolverError(PecertError):
    """A numerical solver failed or stopped at its numerical limit."""

    exit_code = 4

    def __init__(self, detail: str, status: Optional[str] = None) -> None:
        super().__init__(detail)
        self.status = status


class SoundnessError(PecertError):
    """An emitted cut removed a vertex certified to be quantum."""

    exit_code = 4


class VerificationError(PecertError):
    """A certificate failed independent re-verification."""

    exit_code = 1

    def __init__(self, detail: str, witness: Optional[Any] = None) -> None:
        super().__init__(detail)
        self.witness = witness
