from fractions import Fraction

import numpy as np
import pytest

from pecert.core.config import Settings, numeric
from pecert.core.errors import ConfigError, DomainError, InfeasibleError, SolverError
from pecert.core.io import (
    atomic_write_text,
    fingerprint,
    format_rational,
    parse_rational,
    read_json,
)
from pecert.core.rng import SeedSplitter, make_rng


def test_streams_are_reproducible() -> None:
    a = SeedSplitter(5).stream("nearv").random(4)
    b = SeedSplitter(5).stream("nearv").random(4)
    assert np.array_equal(a, b)


def test_streams_differ_by_name() -> None:
    splitter = SeedSplitter(5)
    assert not np.array_equal(
        splitter.stream("nearv").random(4), splitter.stream("maxgp").random(4)
    )


def test_stream_is_cached_and_fresh_is_not() -> None:
    splitter = SeedSplitter(1)
    first = splitter.stream("simulate").random()
    assert splitter.stream("simulate").random() != first
    assert splitter.fresh("simulate").random() == first
    assert make_rng(1, "simulate").random() == first


def test_negative_seed() -> None:
    with pytest.raises(ValueError):
        SeedSplitter(-1)


def test_rational_codec() -> None:
    assert format_rational(Fraction(3)) == "3"
    assert format_rational(Fraction(-2, 6)) == "-1/3"
    assert parse_rational("-1/3") == Fraction(-1, 3)
    assert parse_rational("0.125") == Fraction(1, 8)
    assert parse_rational(7) == 7
    with pytest.raises(ValueError):
        parse_rational("1/0")


def test_fingerprint_ignores_order() -> None:
    u = [Fraction(1, 2), Fraction(0)]
    v = [Fraction(0), Fraction(1)]
    assert fingerprint([u, v]) == fingerprint([v, u])
    assert fingerprint([u, v]) != fingerprint([u, v], cuts=["nearv-0"])


def test_atomic_write_creates_parents(tmp_path) -> None:
    path = tmp_path / "a" / "b" / "out.json"
    atomic_write_text(path, '{"x": 1}')
    assert read_json(path) == {"x": 1}
    assert [p.name for p in path.parent.iterdir()] == ["out.json"]


def test_read_json_errors(tmp_path) -> None:
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ConfigError):
        read_json(bad)
    with pytest.raises(ConfigError):
        read_json(tmp_path / "missing.json")


def test_exit_codes() -> None:
    assert ConfigError("x").exit_code == 2
    assert DomainError("x").exit_code == 2
    assert isinstance(DomainError("x"), ValueError)
    assert InfeasibleError("x").exit_code == 3
    assert SolverError("x", status="infeasible").exit_code == 4


def test_threads_from_environment(monkeypatch: pytest.MonkeyPatch) -> None:
    monkeypatch.setenv("PECERT_THREADS", "3")
    assert Settings().THREADS == 3


def test_numeric_defaults() -> None:
    assert numeric.NPA_LEVEL == 2
    assert numeric.MEMBERSHIP_TOL == 1e-7
    assert numeric.KAPPA_FRACTIONS == (0.5, 0.25, 0.1)
