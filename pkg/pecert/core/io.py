import hashlib
import json
import os
import tempfile
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterable, Sequence, Union

from pecert.core.errors import ConfigError

PathLike = Union[str, "os.PathLike[str]"]


def atomic_write_text(path: PathLike, text: str) -> None:
    """Write ``text`` to ``path`` via a temporary file and ``os.replace``."""
    target = Path(path)
    target.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{target.name}.", dir=target.parent)
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, target)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def atomic_write_json(path: PathLike, payload: Any) -> None:
    atomic_write_text(path, json.dumps(payload, indent=2, sort_keys=False) + "\n")


def format_rational(value: Fraction) -> str:
    """Format as ``"num/den"``, or ``"k"`` for integers."""
    value = Fraction(value)
    if value.denominator == 1:
        return str(value.numerator)
    return f"{value.numerator}/{value.denominator}"


def parse_rational(text: Union[str, int]) -> Fraction:
    """Parse ``"num/den"``, an integer or a finite decimal string exactly."""
    if isinstance(text, int):
        return Fraction(text)
    try:
        return Fraction(text.strip())
    except (ValueError, ZeroDivisionError) as exc:
        raise ValueError(f"not a rational number: {text!r}") from exc


def canonical_vector_text(vector: Sequence[Fraction]) -> str:
    return ",".join(format_rational(x) for x in vector)


def fingerprint(vertices: Iterable[Sequence[Fraction]], cuts: Iterable[str] = ()) -> str:
    """SHA-256 over the canonical text of a vertex list and its cut provenance.

    Vertices are sorted first, so the fingerprint identifies the set.
    """
    h = hashlib.sha256()
    for line in sorted(canonical_vector_text(v) for v in vertices):
        h.update(line.encode("ascii"))
        h.update(b"\n")
    h.update(b"--cuts--\n")
    for cut in cuts:
        h.update(cut.encode("utf-8"))
        h.update(b"\n")
    return h.hexdigest()


def read_json(path: PathLike, what: str = "file") -> Any:
    """Parse a JSON document; unreadable or malformed files are config errors."""
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read {what} {path}: {exc}") from exc
