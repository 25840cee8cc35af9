"""Behaviors, scenario generators, frequency estimation and regularisation."""

import csv
import io
import logging
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Optional, Sequence, Tuple, Union

import numpy as np
import sympy
from scipy.optimize import linprog

from pecert.core.config import numeric
from pecert.core.errors import ConfigError, DomainError, InfeasibleError, SolverError
from pecert.core.io import atomic_write_json, atomic_write_text, format_rational, read_json
from pecert.engine.rational import nearest, to_float
from pecert.engine.scenario import NoSignallingChart, Scenario
from pecert.schemas.behavior import BehaviorEntry, BehaviorFile, TableFixture

logger = logging.getLogger(__name__)

Weight = Union[float, Fraction]
# Table fixtures shipped with the package, by short name.
BUNDLED_TABLES: Dict[str, Path] = {
    "mermin": Path(__file__).resolve().parent.parent / "data" / "mermin_table.json",
}


def _as_array(values: Any) -> np.ndarray:
    arr = np.asarray(values)
    if arr.dtype == object:
        return np.array([Fraction(v) for v in arr.flat], dtype=object)
    return np.asarray(arr, dtype=float).reshape(-1)


def _frozen(arr: np.ndarray) -> np.ndarray:
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class ConditionalBehavior:
    """A behavior p(c|z) stored as a full vector in context-major order.

    ``probs`` is a float array, or an object array of Fractions in rational
    mode.
    """

    scenario: Scenario
    probs: np.ndarray
    ns_checked: bool = False
    label: str = ""

    def __post_init__(self) -> None:
        probs = _as_array(self.probs)
        if probs.shape != (self.scenario.size,):
            raise DomainError(
                f"behavior for scenario {self.scenario.id} needs "
                f"{self.scenario.size} entries, got {probs.size}"
            )
        object.__setattr__(self, "probs", _frozen(probs))
        tol = 0 if self.is_exact else numeric.NORMALIZATION_TOL
        if any(x < -tol or x > 1 + tol for x in probs):
            raise DomainError("probabilities must lie in [0, 1]")
        for z in range(self.scenario.num_inputs):
            total = sum(self.context(z)) if self.is_exact else float(np.sum(self.context(z)))
            if abs(total - 1) > tol:
                raise DomainError(f"context z={z} sums to {float(total)!r}, not 1")
        if self.ns_checked and not self.is_no_signalling():
            raise DomainError("behavior flagged ns_checked is signalling")

    @property
    def is_exact(self) -> bool:
        return self.probs.dtype == object

    def context(self, z: int) -> np.ndarray:
        k = self.scenario.num_outputs
        return self.probs[z * k : (z + 1) * k]

    def value(self, c: int, z: int) -> Any:
        return self.probs[self.scenario.index(c, z)]

    def as_float(self) -> np.ndarray:
        return to_float(self.probs) if self.is_exact else np.array(self.probs)

    def is_no_signalling(self, tol: float = 1e-12) -> bool:
        """Every party subset's marginal is independent of the other inputs."""
        chart = NoSignallingChart(self.scenario)
        rebuilt = chart.to_full(chart.from_full(self.probs))
        if self.is_exact:
            return bool(np.all(rebuilt == self.probs))
        return bool(np.max(np.abs(rebuilt - self.probs)) <= tol)

    def mix(self, other: "ConditionalBehavior", t: Weight) -> "ConditionalBehavior":
        """Return ``(1 - t) * self + t * other``."""
        if other.scenario != self.scenario:
            raise DomainError("cannot mix behaviors of different scenarios")
        probs = _mix_arrays(self.probs, other.probs, t)
        return ConditionalBehavior(self.scenario, probs, label=self.label)

    def to_joint(self, input_marginal: Sequence[Weight]) -> "JointBehavior":
        marginal = _as_array(input_marginal)
        if marginal.shape != (self.scenario.num_inputs,):
            raise DomainError("input marginal has the wrong length")
        k = self.scenario.num_outputs
        probs = self.probs * np.repeat(marginal, k)
        return JointBehavior(self.scenario, probs, marginal, label=self.label)


@dataclass(frozen=True, eq=False)
class JointBehavior:
    """A joint distribution p(c, z) together with its input marginal p(z)."""

    scenario: Scenario
    probs: np.ndarray
    input_marginal: np.ndarray
    label: str = ""

    def __post_init__(self) -> None:
        probs = _as_array(self.probs)
        marginal = _as_array(self.input_marginal)
        if probs.shape != (self.scenario.size,):
            raise DomainError(f"joint behavior needs {self.scenario.size} entries")
        if marginal.shape != (self.scenario.num_inputs,):
            raise DomainError(f"input marginal needs {self.scenario.num_inputs} entries")
        object.__setattr__(self, "probs", _frozen(probs))
        object.__setattr__(self, "input_marginal", _frozen(marginal))
        tol = 0 if self.is_exact else numeric.NORMALIZATION_TOL
        if any(x < -tol for x in probs):
            raise DomainError("probabilities must be non-negative")
        total = sum(probs) if self.is_exact else float(np.sum(probs))
        if abs(total - 1) > tol:
            raise DomainError("joint behavior does not sum to 1")
        k = self.scenario.num_outputs
        for z in range(self.scenario.num_inputs):
            block = probs[z * k : (z + 1) * k]
            block_sum = sum(block) if self.is_exact else float(np.sum(block))
            if abs(block_sum - marginal[z]) > tol:
                raise DomainError(f"entries of context z={z} do not sum to p(z)")
            if any(x > marginal[z] + tol for x in block):
                raise DomainError(f"entry exceeds p(z) in context z={z}")

    @property
    def is_exact(self) -> bool:
        return self.probs.dtype == object

    def as_float(self) -> np.ndarray:
        return to_float(self.probs) if self.is_exact else np.array(self.probs)

    def marginal_float(self) -> np.ndarray:
        m = self.input_marginal
        return to_float(m) if m.dtype == object else np.array(m)

    def conditional(self) -> ConditionalBehavior:
        """p(c|z); every input must have positive probability."""
        k = self.scenario.num_outputs
        if any(m == 0 for m in self.input_marginal):
            raise DomainError("conditional undefined for inputs with p(z) = 0")
        probs = self.probs / np.repeat(self.input_marginal, k)
        return ConditionalBehavior(self.scenario, probs, label=self.label)

    def mix(self, other: "JointBehavior", t: Weight) -> "JointBehavior":
        if other.scenario != self.scenario:
            raise DomainError("cannot mix behaviors of different scenarios")
        return JointBehavior(
            self.scenario,
            _mix_arrays(self.probs, other.probs, t),
            _mix_arrays(self.input_marginal, other.input_marginal, t),
            label=self.label,
        )


@dataclass(frozen=True, eq=False)
class TrialLog:
    """Ordered trial record; ``rounds[i] = (z_i, c_i)``."""

    scenario: Scenario
    rounds: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), dtype=np.int64))

    def __post_init__(self) -> None:
        rounds = np.asarray(self.rounds, dtype=np.int64).reshape(-1, 2)
        if rounds.size:
            if rounds[:, 0].min() < 0 or rounds[:, 0].max() >= self.scenario.num_inputs:
                raise DomainError("trial log input index out of range")
            if rounds[:, 1].min() < 0 or rounds[:, 1].max() >= self.scenario.num_outputs:
                raise DomainError("trial log output index out of range")
        object.__setattr__(self, "rounds", _frozen(rounds))

    @property
    def n(self) -> int:
        return int(self.rounds.shape[0])

    def cell_counts(self) -> np.ndarray:
        """Counts per behavior coordinate."""
        k = self.scenario.num_outputs
        idx = self.rounds[:, 0] * k + self.rounds[:, 1]
        return np.bincount(idx, minlength=self.scenario.size)


def _mix_arrays(a: np.ndarray, b: np.ndarray, t: Weight) -> np.ndarray:
    exact = a.dtype == object and b.dtype == object and isinstance(t, (int, Fraction))
    if exact:
        t = Fraction(t)
        return np.array([(1 - t) * x + t * y for x, y in zip(a, b)], dtype=object)
    tf = float(t)
    return (1 - tf) * to_float(a) + tf * to_float(b)


def uniform_behavior(scenario: Scenario, exact: bool = True) -> ConditionalBehavior:
    k = scenario.num_outputs
    if exact:
        probs = np.array([Fraction(1, k)] * scenario.size, dtype=object)
    else:
        probs = np.full(scenario.size, 1.0 / k)
    return ConditionalBehavior(scenario, probs, ns_checked=True, label="uniform")


def uniform_inputs(scenario: Scenario, exact: bool = True) -> np.ndarray:
    m = scenario.num_inputs
    if exact:
        return np.array([Fraction(1, m)] * m, dtype=object)
    return np.full(m, 1.0 / m)


def _check_weight(w: Weight, name: str = "w") -> None:
    if not 0 <= w <= 1:
        raise DomainError(f"{name} must lie in [0, 1], got {w}")


def behavior_from_correlators(
    scenario: Scenario, correlator: Dict[Tuple[Tuple[int, ...], Tuple[int, ...]], Any]
) -> np.ndarray:
    """Full vector from dichotomic correlators.

    ``correlator[(S, x_S)]`` is ``<prod_{p in S} O_p(x_p)>`` with outcome 0
    mapped to eigenvalue +1. Missing entries are zero. Exact when every
    correlator is rational.
    """
    n = scenario.parties
    exact = all(isinstance(v, (int, Fraction)) for v in correlator.values())
    one: Any = Fraction(1) if exact else 1.0
    probs = []
    for c, z in scenario.cells():
        outs = scenario.decode_outputs(c)
        ins = scenario.decode_inputs(z)
        total = one
        for (subset, xs), value in correlator.items():
            if tuple(ins[p] for p in subset) != tuple(xs):
                continue
            sign = (-1) ** sum(outs[p] for p in subset)
            total = total + sign * value
        probs.append(total / (2**n))
    return np.array(probs, dtype=object if exact else float)


def make_tilted_chsh(alpha: float, w: Weight) -> ConditionalBehavior:
    """Optimal tilted-CHSH behavior mixed with white noise of weight ``w``."""
    if alpha < 1:
        raise DomainError(f"alpha must be >= 1, got {alpha}")
    _check_weight(w)
    scenario = Scenario.bipartite()
    norm = float(np.sqrt(1.0 + alpha * alpha))
    corr: Dict[Tuple[Tuple[int, ...], Tuple[int, ...]], Any] = {}
    for y in (0, 1):
        corr[((0, 1), (0, y))] = alpha / norm
        corr[((0, 1), (1, y))] = (-1) ** y / norm
    ideal = behavior_from_correlators(scenario, corr)
    probs = (1 - float(w)) * ideal + float(w) * 0.25
    return ConditionalBehavior(
        scenario, probs, ns_checked=True, label=f"tilted-chsh(alpha={alpha},w={w})"
    )


def make_mermin_ghz(w: Weight) -> ConditionalBehavior:
    """GHZ state measured with sigma_x (input 0) and sigma_y (input 1).

    The three-party correlator is cos(pi (x+y+z) / 2); all one- and two-party
    correlators vanish. Rational when ``w`` is.
    """
    _check_weight(w)
    scenario = Scenario.tripartite()
    cos_table = (1, 0, -1, 0)
    corr: Dict[Tuple[Tuple[int, ...], Tuple[int, ...]], Any] = {}
    for x in (0, 1):
        for y in (0, 1):
            for z in (0, 1):
                corr[((0, 1, 2), (x, y, z))] = cos_table[(x + y + z) % 4]
    ideal = ConditionalBehavior(scenario, behavior_from_correlators(scenario, corr))
    noise = uniform_behavior(scenario, exact=True)
    mixed = ideal.mix(noise, w)
    return ConditionalBehavior(
        scenario, mixed.probs, ns_checked=True, label=f"mermin-ghz(w={w})"
    )


def hardy_conditional() -> np.ndarray:
    """Born-rule probabilities p(ab|xy) of the Hardy state and measurements.

    The angle satisfies cos^2(theta) = (sqrt(5) - 1) / 2. Amplitudes are
    evaluated symbolically so the three Hardy zeros are exact, then every
    probability is evaluated to 40 significant digits before rounding to
    float.
    """
    cos = sympy.sqrt((sympy.sqrt(5) - 1) / 2)
    sin = sympy.sqrt((3 - sympy.sqrt(5)) / 2)
    norm = sympy.sqrt(1 + cos**2)
    # |phi> = (cos (|01> + |10>) + sin |11>) / norm, indexed [alice][bob]
    state = [[0, cos / norm], [cos / norm, sin / norm]]
    bases = {
        0: ((sin, -cos), (cos, sin)),
        1: ((1, 0), (0, 1)),
    }
    scenario = Scenario.bipartite()
    probs = []
    for c, z in scenario.cells():
        a, b = scenario.decode_outputs(c)
        x, y = scenario.decode_inputs(z)
        u = bases[x][a]
        v = bases[y][b]
        amp = sum(u[i] * v[j] * state[i][j] for i in (0, 1) for j in (0, 1))
        amp = sympy.simplify(amp)
        prob = sympy.N(amp**2, 40)
        probs.append(0.0 if amp == 0 else float(prob))
    return np.array(probs, dtype=float)


def make_hardy(w: Weight, delta_unused_flag: Optional[Any] = None) -> JointBehavior:
    """Noisy Hardy joint behavior p(a, b, x, y) with uniform inputs.

    ``delta_unused_flag`` is accepted and ignored: the SV bias enters only
    through the MDL functional and the input polytope.
    """
    _check_weight(w)
    scenario = Scenario.bipartite()
    conditional = hardy_conditional()
    probs = (1 - float(w)) * conditional / 4 + float(w) / 16
    return JointBehavior(
        scenario, probs, uniform_inputs(scenario, exact=False), label=f"hardy(w={w})"
    )


def estimate_frequencies(log: TrialLog) -> JointBehavior:
    """Empirical joint frequencies, exact rationals summing to 1."""
    if log.n < 1:
        raise DomainError("cannot estimate frequencies from an empty trial log")
    counts = log.cell_counts()
    n = log.n
    probs = np.array([Fraction(int(k), n) for k in counts], dtype=object)
    k = log.scenario.num_outputs
    marginal = np.array(
        [
            Fraction(int(counts[z * k : (z + 1) * k].sum()), n)
            for z in range(log.scenario.num_inputs)
        ],
        dtype=object,
    )
    return JointBehavior(log.scenario, probs, marginal, label="frequencies")


def sample_trial_log(p: JointBehavior, n: int, rng: np.random.Generator) -> TrialLog:
    """Draw ``n`` IID rounds from ``p``."""
    if n < 0:
        raise DomainError("n must be non-negative")
    weights = p.as_float()
    weights = np.clip(weights, 0.0, None)
    weights = weights / weights.sum()
    idx = rng.choice(p.scenario.size, size=n, p=weights)
    k = p.scenario.num_outputs
    rounds = np.stack([idx // k, idx % k], axis=1) if n else np.zeros((0, 2), dtype=np.int64)
    return TrialLog(p.scenario, rounds)


def regularize(p: ConditionalBehavior, eps_mix: Weight) -> ConditionalBehavior:
    """TV-closest no-signalling behavior, mixed with uniform at ``eps_mix``.

    The projection is an LP over the NS chart. In rational mode the chart
    point is rationalised and any rounding-induced negativity is absorbed
    into the uniform mixture, so the result is exactly no-signalling.
    """
    _check_weight(eps_mix, "eps_mix")
    scenario = p.scenario
    chart = NoSignallingChart(scenario)
    if p.is_no_signalling():
        projected: np.ndarray = np.array(p.probs)
    else:
        g = _tv_projection(chart, p.as_float())
        if p.is_exact:
            projected = chart.to_full(
                np.array([nearest(v, numeric.BOUND_DENOMINATOR) for v in g], dtype=object)
            )
        else:
            projected = chart.to_full(g)

    uniform = uniform_behavior(scenario, exact=p.is_exact).probs
    eps: Weight = Fraction(str(eps_mix)) if p.is_exact else float(eps_mix)
    if p.is_exact:
        worst = min(projected)
        if worst < 0:
            # smallest extra noise weight that lifts the worst entry to zero
            k = Fraction(1, scenario.num_outputs)
            eps = max(eps, -worst / (k - worst))  # type: ignore[type-var]
            logger.debug("rationalised projection needed eps_mix=%s", eps)
    else:
        projected = np.clip(projected, 0.0, None)
    mixed = _mix_arrays(projected, uniform, eps) if eps else projected
    return ConditionalBehavior(scenario, mixed, ns_checked=True, label=p.label)


def _tv_projection(chart: NoSignallingChart, target: np.ndarray) -> np.ndarray:
    """argmin_g sum |A g + a0 - target| subject to A g + a0 >= 0."""
    size, dim = chart.A.shape
    A = chart.A.astype(float)
    a0 = chart.a0.astype(float)
    eye = np.eye(size)
    # variables [g, t]
    cost = np.concatenate([np.zeros(dim), np.ones(size)])
    A_ub = np.vstack(
        [
            np.hstack([A, -eye]),
            np.hstack([-A, -eye]),
            np.hstack([-A, np.zeros((size, size))]),
        ]
    )
    b_ub = np.concatenate([target - a0, a0 - target, a0])
    bounds = [(None, None)] * dim + [(0, None)] * size
    res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method="highs")
    if res.status == 2:
        raise InfeasibleError("no-signalling projection is infeasible")
    if res.status != 0:
        raise SolverError(f"no-signalling projection failed: {res.message}", "numerical-limit")
    return np.asarray(res.x[:dim], dtype=float)


def bell_value(
    p: Union[ConditionalBehavior, JointBehavior, np.ndarray],
    functional: Sequence[Any],
    offset: Any = 0,
) -> Any:
    """``b . mu + offset``; exact when both sides are rational."""
    probs = p.probs if isinstance(p, (ConditionalBehavior, JointBehavior)) else np.asarray(p)
    b = np.asarray(functional)
    if b.shape != probs.shape:
        raise DomainError(
            f"functional has {b.size} coefficients, behavior has {probs.size} entries"
        )
    if probs.dtype == object and b.dtype.kind in "iuO":
        return sum((Fraction(x) * Fraction(y) for x, y in zip(b, probs)), Fraction(0)) + offset
    floats = to_float(probs) if probs.dtype == object else probs
    return float(np.dot(b.astype(float), floats)) + float(offset)


# --- persistence -----------------------------------------------------------


def _encode_probability(value: Any, exact: bool) -> Union[str, float]:
    return format_rational(value) if exact else float(value)


def behavior_to_file(
    p: Union[ConditionalBehavior, JointBehavior], provenance: Optional[Dict[str, Any]] = None
) -> BehaviorFile:
    scenario = p.scenario
    entries = [
        BehaviorEntry(
            outputs=list(scenario.decode_outputs(c)),
            inputs=list(scenario.decode_inputs(z)),
            p=_encode_probability(p.probs[scenario.index(c, z)], p.is_exact),
        )
        for c, z in scenario.cells()
    ]
    marginal = None
    if isinstance(p, JointBehavior):
        exact = p.input_marginal.dtype == object
        marginal = [_encode_probability(v, exact) for v in p.input_marginal]
    return BehaviorFile(
        scenario=scenario.id,
        kind="joint" if isinstance(p, JointBehavior) else "conditional",
        number_mode="rational" if p.is_exact else "float",
        label=p.label,
        entries=entries,
        input_marginal=marginal,
        provenance=provenance or {},
    )


def behavior_from_file(doc: BehaviorFile) -> Union[ConditionalBehavior, JointBehavior]:
    scenario = Scenario.from_id(doc.scenario)
    exact = doc.number_mode == "rational"
    probs: list = [None] * scenario.size
    for entry in doc.entries:
        idx = scenario.index(
            scenario.encode_outputs(entry.outputs), scenario.encode_inputs(entry.inputs)
        )
        if probs[idx] is not None:
            raise ConfigError(f"duplicate behavior entry {entry.outputs}|{entry.inputs}")
        probs[idx] = Fraction(entry.p) if exact else float(entry.p)
    if any(v is None for v in probs):
        raise ConfigError("behavior file does not list every (c, z) cell")
    arr = np.array(probs, dtype=object if exact else float)
    if doc.kind == "joint":
        if doc.input_marginal is None:
            raise ConfigError("joint behavior file needs an input_marginal")
        marginal = np.array(
            [Fraction(v) if exact else float(v) for v in doc.input_marginal],
            dtype=object if exact else float,
        )
        return JointBehavior(scenario, arr, marginal, label=doc.label)
    return ConditionalBehavior(scenario, arr, label=doc.label)


def save_behavior(
    path: Union[str, Path],
    p: Union[ConditionalBehavior, JointBehavior],
    provenance: Optional[Dict[str, Any]] = None,
) -> None:
    atomic_write_json(path, behavior_to_file(p, provenance).model_dump(mode="json"))


def load_behavior(path: Union[str, Path]) -> Union[ConditionalBehavior, JointBehavior]:
    doc = BehaviorFile.model_validate(read_json(path, "behavior file"))
    return behavior_from_file(doc)


def save_trial_log(path: Union[str, Path], log: TrialLog) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["round", "z", "c"])
    for i, (z, c) in enumerate(log.rounds):
        writer.writerow([i, int(z), int(c)])
    atomic_write_text(path, buf.getvalue())


def load_trial_log(path: Union[str, Path], scenario: Scenario) -> TrialLog:
    try:
        fh = open(path, newline="", encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read trial log {path}: {exc}") from exc
    with fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != ["round", "z", "c"]:
            raise ConfigError("trial log header must be 'round,z,c'")
        rows = []
        for expected, row in enumerate(reader):
            try:
                if int(row["round"]) != expected:
                    raise ConfigError(f"trial log rounds out of order at {expected}")
                rows.append((int(row["z"]), int(row["c"])))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"malformed trial log row {expected}") from exc
    try:
        return TrialLog(scenario, np.array(rows, dtype=np.int64).reshape(-1, 2))
    except DomainError as exc:
        raise ConfigError(exc.detail) from exc


def load_table_behavior(path: Union[str, Path]) -> ConditionalBehavior:
    """Read a tabular fixture (rows = joint outputs, columns = joint inputs).

    Entries are decimal strings read exactly. A fixture recorded with
    outcome 0 meaning eigenvalue -1 is relabelled into the package
    convention (outcome 0 means +1) by complementing every party's outcome.
    """
    table = TableFixture.model_validate(read_json(path, "table fixture"))
    scenario = Scenario.from_id(table.scenario)
    probs = [Fraction(0)] * scenario.size
    flip = table.outcome_zero_eigenvalue == -1
    for row_key, values in table.rows.items():
        outs = [int(ch) for ch in row_key]
        if flip:
            outs = [1 - o for o in outs]
        c = scenario.encode_outputs(outs)
        if len(values) != len(table.columns):
            raise ConfigError(f"table row {row_key} has the wrong number of columns")
        for col_key, value in zip(table.columns, values):
            z = scenario.encode_inputs([int(ch) for ch in col_key])
            probs[scenario.index(c, z)] = Fraction(value)
    return ConditionalBehavior(
        scenario, np.array(probs, dtype=object), label=table.label or Path(path).stem
    )
