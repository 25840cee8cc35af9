"""Shared plumbing for the subcommands: configuration, sessions, inputs and
run records."""

import argparse
import csv
import io
import logging
from contextlib import contextmanager
from fractions import Fraction
from pathlib import Path
from typing import Any, Dict, Iterator, List, Optional, Tuple, Union

import numpy as np
from sqlalchemy.orm import Session

from pecert.core.errors import ConfigError
from pecert.core.io import atomic_write_json, atomic_write_text, read_json
from pecert.db.session import make_session
from pecert.engine.behaviors import (
    ConditionalBehavior,
    JointBehavior,
    bell_value,
    load_behavior,
    make_hardy,
    make_mermin_ghz,
    make_tilted_chsh,
    regularize,
    uniform_behavior,
    uniform_inputs,
)
from pecert.engine.functionals import (
    chsh_alpha_functional,
    chsh_family,
    lifted_chsh_family,
    mdl_functional,
    mermin_functional,
)
from pecert.engine.polytope import (
    HPolytope,
    VPolytope,
    enumerate_vertices,
    enumerate_vertices_cached,
    ns_polytope,
    polytope_from_halfspaces,
)
from pecert.engine.scenario import Scenario
from pecert.schemas.certificate import ResultRow
from pecert.schemas.run import BehaviorSource, RunConfig, RunRecord

logger = logging.getLogger(__name__)

Behavior = Union[ConditionalBehavior, JointBehavior]


@contextmanager
def get_db(uri: Optional[str]) -> Iterator[Optional[Session]]:
    """Session on the cache database, or None when no database was given."""
    if uri is None:
        yield None
        return
    db = make_session(uri)
    try:
        yield db
    finally:
        db.close()


def load_run_config(args: argparse.Namespace, overrides: Dict[str, Any]) -> RunConfig:
    """RunConfig from ``--config`` (if any) with non-None flag values on top."""
    base: Dict[str, Any] = {}
    if getattr(args, "config", None):
        base = read_json(args.config, "config")
    for key, value in overrides.items():
        if value is None:
            continue
        if isinstance(value, dict):
            nested = dict(base.get(key) or {})
            nested.update({k: v for k, v in value.items() if v is not None})
            base[key] = nested
        else:
            base[key] = value
    return RunConfig.model_validate(base)


def parse_params(items: Optional[List[str]]) -> Dict[str, float]:
    params: Dict[str, float] = {}
    for item in items or []:
        name, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"parameter {item!r} is not of the form name=value")
        try:
            params[name.strip()] = float(value)
        except ValueError as exc:
            raise ConfigError(f"parameter {name} is not a number") from exc
    return params


def parse_ns(text: str) -> List[int]:
    """``"1e4,1e6"`` or a log sweep ``"1e4:1e12:9"``."""
    try:
        if ":" in text:
            start, stop, points = text.split(":")
            values = np.logspace(np.log10(float(start)), np.log10(float(stop)), int(points))
            return sorted({int(round(v)) for v in values})
        return [int(float(v)) for v in text.split(",") if v.strip()]
    except ValueError as exc:
        raise ConfigError(f"cannot parse round counts {text!r}") from exc


def generate_behavior(source: BehaviorSource, scenario: Scenario) -> Behavior:
    params = source.params
    w = Fraction(str(params.get("w", 0)))
    if source.generator == "tilted-chsh":
        return make_tilted_chsh(params.get("alpha", 1.0), float(w))
    if source.generator == "mermin":
        return make_mermin_ghz(w)
    if source.generator == "hardy":
        return make_hardy(float(w))
    if source.generator == "uniform":
        return uniform_behavior(scenario)
    raise ConfigError(f"unknown generator {source.generator!r}")


def resolve_behavior(config: RunConfig) -> Behavior:
    if config.behavior is None:
        raise ConfigError("no behavior given; use --behavior or a config file")
    if config.behavior.path is not None:
        return load_behavior(config.behavior.path)
    return generate_behavior(config.behavior, Scenario.from_id(config.scenario))


def split_behavior(
    p: Behavior, eps_mix: Optional[float] = None
) -> Tuple[ConditionalBehavior, np.ndarray]:
    """Conditional behavior (regularised if asked) and the input distribution."""
    if isinstance(p, JointBehavior):
        cond, p_z = p.conditional(), p.marginal_float()
    else:
        cond, p_z = p, uniform_inputs(p.scenario, exact=False).astype(float)
    if eps_mix:
        cond = regularize(cond, eps_mix)
    return cond, np.asarray(p_z, dtype=float)


def input_polytope(name: str, scenario: Scenario) -> HPolytope:
    if name == "ns":
        return ns_polytope(scenario)
    if name == "ns-chsh":
        return polytope_from_halfspaces(scenario, chsh_family(scenario), "NS&CHSH")
    if name == "ns-lifted-chsh":
        return polytope_from_halfspaces(scenario, lifted_chsh_family(scenario), "NS&lifted-CHSH")
    raise ConfigError(f"unknown input polytope {name!r}")


def vertices_of(P: HPolytope, db: Optional[Session]) -> VPolytope:
    if db is None:
        return enumerate_vertices(P)
    return enumerate_vertices_cached(P, db)


def run_record_path(primary: Union[str, Path]) -> Path:
    primary = Path(primary)
    return primary.with_name(primary.name + ".run.json")


def write_run_record(primary: Union[str, Path], record: RunRecord) -> Path:
    path = run_record_path(primary)
    atomic_write_json(path, record.model_dump(mode="json"))
    logger.info("run record written to %s", path)
    return path


def write_result_rows(path: Union[str, Path], rows: List[ResultRow]) -> None:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=ResultRow.columns(), lineterminator="\n")
    writer.writeheader()
    for row in rows:
        writer.writerow(row.model_dump())
    atomic_write_text(path, buf.getvalue())


def bell_summary(p: Behavior, sv_bias: Optional[float] = None) -> Dict[str, float]:
    """Headline Bell values of ``p``: CHSH or Mermin, plus MDL on joint
    bipartite behaviors when an SV bias is given."""
    cond = p.conditional() if isinstance(p, JointBehavior) else p
    values: Dict[str, float] = {}
    if cond.scenario == Scenario.bipartite():
        values["chsh"] = float(bell_value(cond, chsh_alpha_functional(1)))
        if isinstance(p, JointBehavior) and sv_bias is not None:
            values["mdl"] = float(bell_value(p, mdl_functional(sv_bias)))
    elif cond.scenario == Scenario.tripartite():
        values["mermin"] = float(bell_value(cond, mermin_functional()))
    return values


def joint_float(cond: ConditionalBehavior, p_z: np.ndarray) -> JointBehavior:
    """``p(c, z) = p(c|z) p(z)`` in float mode."""
    floats = ConditionalBehavior(cond.scenario, cond.as_float(), label=cond.label)
    return floats.to_joint(np.asarray(p_z, dtype=float))
