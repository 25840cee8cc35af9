"""``pecert refine``: NearV or MaxGP refinement of an outer polytope."""

import argparse
import logging
import time
from typing import Any

from pecert.cli import deps
from pecert.core.errors import ConfigError
from pecert.engine.polytope import load_polytope, save_polytope
from pecert.engine.quantum.npa import structure_for
from pecert.engine.refine import maxgp, nearv
from pecert.engine.scenario import OutputMap
from pecert.schemas.run import RunRecord

logger = logging.getLogger(__name__)


def register(subparsers: Any) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("refine", help="Refine an outer polytope of the quantum set")
    parser.add_argument("--behavior", help="Typical behavior file")
    parser.add_argument("--algorithm", choices=["nearv", "maxgp"])
    parser.add_argument(
        "--input-polytope", choices=["ns", "ns-chsh", "ns-lifted-chsh"], help="Starting polytope"
    )
    parser.add_argument("--polytope", help="Continue from an existing polytope file")
    parser.add_argument("--iterations", type=int, help="Number of iterations I")
    parser.add_argument("--nearest", type=int, help="NearV nearest-vertex list size m")
    parser.add_argument("--level", type=int, choices=[1, 2], help="NPA level")
    parser.add_argument("--metric", choices=["tv", "l2"])
    parser.add_argument(
        "--z-policy",
        choices=["random", "max-guess", "fixed", "averaged"],
        help="MaxGP input choice",
    )
    parser.add_argument("--fixed-z", type=int)
    parser.add_argument("--output-map", help="Certified outputs, e.g. AB or A")
    parser.add_argument("--regularize", type=float, metavar="EPS", help="Regularise with eps_mix")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--cache-db", help="SQLite vertex cache")
    parser.add_argument("--out", required=True, help="Polytope file to write")
    return parser


def run(args: argparse.Namespace) -> int:
    start = time.perf_counter()
    config = deps.load_run_config(
        args,
        {
            "behavior": {"path": args.behavior} if args.behavior else None,
            "algorithm": args.algorithm,
            "input_polytope": args.input_polytope,
            "output_map": args.output_map,
            "eps_mix": args.regularize,
            "cache_db": args.cache_db,
            "refinement": {
                "iterations": args.iterations,
                "nearest": args.nearest,
                "level": args.level,
                "metric": args.metric,
                "z_policy": args.z_policy,
                "fixed_z": args.fixed_z,
                "seed": args.seed,
            },
        },
    )
    if config.algorithm is None:
        raise ConfigError("refine needs --algorithm")
    cond, p_z = deps.split_behavior(deps.resolve_behavior(config), args.regularize)
    scenario = cond.scenario
    cfg = config.refinement

    with deps.get_db(config.cache_db) as db:
        if args.polytope:
            V_in = load_polytope(args.polytope)
            if V_in.source is None:
                raise ConfigError(f"{args.polytope} carries no H-representation to refine")
            P_in = V_in.source
        else:
            P_in = deps.input_polytope(config.input_polytope, scenario)
            V_in = deps.vertices_of(P_in, db)

    structure = structure_for(scenario, cfg.level)
    if config.algorithm == "nearv":
        result = nearv(cond, P_in, cfg, structure, V_in)
    else:
        dmap = OutputMap.from_spec(scenario, config.output_map)
        result = maxgp(cond, p_z, P_in, cfg, dmap, structure, V_in)

    V = result.polytope
    save_polytope(
        args.out,
        V,
        extra={"algorithm": config.algorithm, "quantum_vertices": result.quantum_vertices},
    )
    deps.write_run_record(
        args.out,
        RunRecord(
            command="refine",
            config=config.model_dump(mode="json"),
            iterations=result.records,
            outputs={"polytope": str(args.out), "fingerprint": V.fingerprint},
            wall_time=time.perf_counter() - start,
        ),
    )
    print(f"{len(V)} vertices, {len(result.cuts)} cuts, fingerprint {V.fingerprint[:16]}")
    return 0
