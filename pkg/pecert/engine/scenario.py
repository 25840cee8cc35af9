"""Bell scenarios, certified-output maps and the no-signalling chart.

Index conventions used throughout the package:

* a joint outcome ``c`` and a joint input ``z`` are tuples with one entry per
  party; they are encoded as integers in mixed radix with the first party
  most significant (``(a, b) -> a * k_B + b``);
* a behavior vector has one coordinate per pair ``(c, z)`` at position
  ``z * |C| + c`` (context-major).
"""

import itertools
from fractions import Fraction
from typing import Dict, List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from pecert.core.errors import DomainError

PARTY_NAMES = "ABCDEFGH"


def _encode(digits: Sequence[int], radices: Sequence[int]) -> int:
    value = 0
    for digit, radix in zip(digits, radices):
        if not 0 <= digit < radix:
            raise DomainError(f"digit {digit} outside range 0..{radix - 1}")
        value = value * radix + digit
    return value


def _decode(value: int, radices: Sequence[int]) -> Tuple[int, ...]:
    digits = []
    for radix in reversed(radices):
        value, digit = divmod(value, radix)
        digits.append(digit)
    if value:
        raise DomainError("encoded index out of range")
    return tuple(reversed(digits))


class Scenario(BaseModel):
    """Party/input/output arities of a Bell scenario."""

    model_config = ConfigDict(frozen=True)

    parties: int = Field(..., ge=1)
    inputs_per_party: Tuple[int, ...]
    outputs_per_party: Tuple[int, ...]

    @field_validator("inputs_per_party", "outputs_per_party")
    @classmethod
    def arities_positive(cls, v: Tuple[int, ...]) -> Tuple[int, ...]:
        if any(k < 1 for k in v):
            raise ValueError("all arities must be >= 1")
        return v

    @model_validator(mode="after")
    def one_arity_per_party(self) -> "Scenario":
        if len(self.inputs_per_party) != self.parties:
            raise ValueError("inputs_per_party must list one arity per party")
        if len(self.outputs_per_party) != self.parties:
            raise ValueError("outputs_per_party must list one arity per party")
        return self

    @classmethod
    def bipartite(cls) -> "Scenario":
        return cls(parties=2, inputs_per_party=(2, 2), outputs_per_party=(2, 2))

    @classmethod
    def tripartite(cls) -> "Scenario":
        return cls(parties=3, inputs_per_party=(2, 2, 2), outputs_per_party=(2, 2, 2))

    @classmethod
    def from_id(cls, scenario_id: str) -> "Scenario":
        """Parse ``"parties-inputs-outputs"``, e.g. ``"2-2-2"``."""
        try:
            n, m, k = (int(part) for part in scenario_id.split("-"))
        except ValueError as exc:
            raise DomainError(f"bad scenario id {scenario_id!r}") from exc
        return cls(parties=n, inputs_per_party=(m,) * n, outputs_per_party=(k,) * n)

    @property
    def id(self) -> str:
        if len(set(self.inputs_per_party)) == 1 and len(set(self.outputs_per_party)) == 1:
            return f"{self.parties}-{self.inputs_per_party[0]}-{self.outputs_per_party[0]}"
        ins = ".".join(map(str, self.inputs_per_party))
        outs = ".".join(map(str, self.outputs_per_party))
        return f"{self.parties}-{ins}-{outs}"

    @property
    def is_supported(self) -> bool:
        return (
            self.parties in (2, 3)
            and all(m == 2 for m in self.inputs_per_party)
            and all(k == 2 for k in self.outputs_per_party)
        )

    def require_supported(self) -> None:
        if not self.is_supported:
            raise DomainError(
                f"unsupported scenario {self.id}; supported are 2-2-2 and 3-2-2"
            )

    @property
    def num_outputs(self) -> int:
        return int(np.prod(self.outputs_per_party))

    @property
    def num_inputs(self) -> int:
        return int(np.prod(self.inputs_per_party))

    @property
    def size(self) -> int:
        """Length |C|*|Z| of a behavior vector."""
        return self.num_outputs * self.num_inputs

    def encode_outputs(self, outputs: Sequence[int]) -> int:
        return _encode(outputs, self.outputs_per_party)

    def decode_outputs(self, c: int) -> Tuple[int, ...]:
        return _decode(c, self.outputs_per_party)

    def encode_inputs(self, inputs: Sequence[int]) -> int:
        return _encode(inputs, self.inputs_per_party)

    def decode_inputs(self, z: int) -> Tuple[int, ...]:
        return _decode(z, self.inputs_per_party)

    def index(self, c: int, z: int) -> int:
        if not (0 <= c < self.num_outputs and 0 <= z < self.num_inputs):
            raise DomainError(f"cell (c={c}, z={z}) outside scenario {self.id}")
        return z * self.num_outputs + c

    def cells(self) -> List[Tuple[int, int]]:
        """All ``(c, z)`` pairs in vector order."""
        return [(c, z) for z in range(self.num_inputs) for c in range(self.num_outputs)]


class OutputMap(BaseModel):
    """The certified output D as a function of the joint outcome C.

    ``parties`` lists the parties whose outcomes make up D, e.g. ``(0, 1)``
    for D = AB. The induced map ``d(c)`` is the mixed-radix encoding of the
    selected outcome digits.
    """

    model_config = ConfigDict(frozen=True)

    scenario: Scenario
    parties: Tuple[int, ...]

    @model_validator(mode="after")
    def parties_valid(self) -> "OutputMap":
        if not self.parties:
            raise ValueError("D must depend on at least one party")
        if len(set(self.parties)) != len(self.parties):
            raise ValueError("duplicate party in output map")
        if any(not 0 <= p < self.scenario.parties for p in self.parties):
            raise ValueError("output map refers to a party outside the scenario")
        return self

    @classmethod
    def from_spec(cls, scenario: Scenario, spec: str) -> "OutputMap":
        """Build from a party-letter string such as ``"AB"``."""
        try:
            parties = tuple(PARTY_NAMES.index(ch) for ch in spec.strip().upper())
        except ValueError as exc:
            raise DomainError(f"bad output map {spec!r}") from exc
        try:
            return cls(scenario=scenario, parties=parties)
        except ValueError as exc:
            raise DomainError(str(exc)) from exc

    @property
    def spec(self) -> str:
        return "".join(PARTY_NAMES[p] for p in self.parties)

    @property
    def num_values(self) -> int:
        """|D|."""
        return int(np.prod([self.scenario.outputs_per_party[p] for p in self.parties]))

    @property
    def table(self) -> np.ndarray:
        """``table[c]`` is ``d(c)``."""
        radices = [self.scenario.outputs_per_party[p] for p in self.parties]
        out = np.empty(self.scenario.num_outputs, dtype=np.int64)
        for c in range(self.scenario.num_outputs):
            digits = self.scenario.decode_outputs(c)
            out[c] = _encode([digits[p] for p in self.parties], radices)
        return out

    def __call__(self, c: int) -> int:
        return int(self.table[c])


class NoSignallingChart:
    """Minimal affine coordinates for no-signalling behaviors.

    For binary inputs and outputs, an NS behavior is fixed by the
    probabilities ``g[S, x_S] = P(all parties in S output 0 | x_S)`` over
    nonempty party subsets S. The full vector is recovered by
    inclusion-exclusion, ``full = A @ g + a0``, and ``from_full`` reads the
    coordinates back from the context where the parties outside S use
    input 0. ``from_full(to_full(g)) == g`` exactly.
    """

    def __init__(self, scenario: Scenario) -> None:
        scenario.require_supported()
        self.scenario = scenario
        n = scenario.parties
        coords: List[Tuple[Tuple[int, ...], Tuple[int, ...]]] = []
        for size in range(1, n + 1):
            for subset in itertools.combinations(range(n), size):
                for xs in itertools.product(range(2), repeat=size):
                    coords.append((subset, xs))
        self.coordinates = coords
        self._position: Dict[Tuple[Tuple[int, ...], Tuple[int, ...]], int] = {
            key: i for i, key in enumerate(coords)
        }
        self.dim = len(coords)

        size = scenario.size
        A = np.zeros((size, self.dim), dtype=np.int64)
        a0 = np.zeros(size, dtype=np.int64)
        L = np.zeros((self.dim, size), dtype=np.int64)
        for c, z in scenario.cells():
            row = scenario.index(c, z)
            outs = scenario.decode_outputs(c)
            ins = scenario.decode_inputs(z)
            zeros = {p for p in range(n) if outs[p] == 0}
            for size_s in range(0, n + 1):
                for subset in itertools.combinations(range(n), size_s):
                    if not zeros.issubset(subset):
                        continue
                    sign = -1 if (size_s - len(zeros)) % 2 else 1
                    if not subset:
                        a0[row] += sign
                    else:
                        key = (subset, tuple(ins[p] for p in subset))
                        A[row, self._position[key]] += sign
        for i, (subset, xs) in enumerate(coords):
            ins = [0] * n
            for p, x in zip(subset, xs):
                ins[p] = x
            z = scenario.encode_inputs(ins)
            for c in range(scenario.num_outputs):
                outs = scenario.decode_outputs(c)
                if all(outs[p] == 0 for p in subset):
                    L[i, scenario.index(c, z)] = 1
        self.A = A
        self.a0 = a0
        self.L = L

    @property
    def id(self) -> str:
        return f"ns-{self.scenario.id}"

    def label(self, i: int) -> str:
        subset, xs = self.coordinates[i]
        parties = "".join(PARTY_NAMES[p] for p in subset)
        return f"P_{parties}(0|{''.join(map(str, xs))})"

    def to_full(self, g: Sequence) -> np.ndarray:
        """Full behavior vector; exact when ``g`` holds Fractions."""
        g = np.asarray(g, dtype=object if _is_exact(g) else float)
        if g.shape != (self.dim,):
            raise DomainError(f"chart vector must have length {self.dim}")
        if g.dtype == object:
            return self.A.astype(object) @ g + self.a0.astype(object)
        return self.A @ g + self.a0

    def from_full(self, p: Sequence) -> np.ndarray:
        p = np.asarray(p, dtype=object if _is_exact(p) else float)
        if p.shape != (self.scenario.size,):
            raise DomainError(f"behavior vector must have length {self.scenario.size}")
        if p.dtype == object:
            return self.L.astype(object) @ p
        return self.L @ p

    def functional_to_chart(self, b: Sequence, bound: object) -> Tuple[np.ndarray, object]:
        """Rewrite ``b . full <= bound`` as ``h . g <= eta`` in chart coordinates."""
        b = np.asarray(b, dtype=object if _is_exact(b) else float)
        if b.shape != (self.scenario.size,):
            raise DomainError(f"functional must have length {self.scenario.size}")
        if b.dtype == object:
            h = self.A.T.astype(object) @ b
            eta = Fraction(bound) - (b @ self.a0.astype(object))  # type: ignore[arg-type]
        else:
            h = self.A.T @ b
            eta = float(bound) - float(b @ self.a0)  # type: ignore[arg-type]
        return h, eta


def _is_exact(values: Sequence) -> bool:
    arr = np.asarray(values)
    if arr.dtype.kind in "iu":
        return True
    if arr.dtype == object:
        return all(isinstance(x, (Fraction, int, np.integer)) for x in arr.flat)
    return False
