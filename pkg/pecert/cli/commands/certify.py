"""``pecert certify``: entropy certificates and result rows over a sweep of n."""

import argparse
import logging
import time
from fractions import Fraction
from pathlib import Path
from typing import Any, List, Optional, Tuple

from sqlalchemy.orm import Session

from pecert import crud
from pecert.cli import deps
from pecert.core.errors import ConfigError
from pecert.core.io import atomic_write_json
from pecert.engine.baselines import RaParams, azuma_bound, azuma_estimator, ra_ns_bound
from pecert.engine.behaviors import JointBehavior, bell_value
from pecert.engine.functionals import mdl_functional
from pecert.engine.pef import n_sweep
from pecert.engine.polytope import (
    SVConvention,
    SVSource,
    joint_product_vertices,
    load_polytope,
    sv2_polytope,
)
from pecert.engine.quantum.npa import structure_for
from pecert.engine.scenario import OutputMap
from pecert.schemas.certificate import CertificateFile, ResultRow
from pecert.schemas.run import RunConfig, RunRecord
from pecert.schemas.store import ResultRecordCreate

logger = logging.getLogger(__name__)

Certified = List[Tuple[CertificateFile, ResultRow]]


def register(subparsers: Any) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("certify", help="Certify extractable entropy")
    parser.add_argument("--behavior", help="Typical behavior file")
    parser.add_argument("--method", choices=["pe", "azuma", "ra-ns", "eat"])
    parser.add_argument("--polytope", help="Allowed conditional behaviors (polytope file)")
    parser.add_argument(
        "--input-polytope",
        choices=["ns", "ns-chsh", "ns-lifted-chsh"],
        help="Enumerate this polytope when --polytope is not given",
    )
    parser.add_argument("--n", help="Round counts: '1e6,1e8' or a log sweep '1e4:1e12:9'")
    parser.add_argument("--epsilon", type=float, help="Security parameter")
    parser.add_argument("--delta-t", type=float, help="Acceptance threshold slack")
    parser.add_argument("--betas", help="Power grid: list or log sweep 'start:stop:points'")
    parser.add_argument("--output-map", help="Certified outputs, e.g. AB")
    parser.add_argument("--sv-bias", help="SV bias of the inputs (enables amplification mode)")
    parser.add_argument("--sv-convention", choices=["box", "theorem"])
    parser.add_argument("--level", type=int, choices=[1, 2], help="NPA level for azuma")
    parser.add_argument("--regularize", type=float, metavar="EPS", help="Regularise with eps_mix")
    parser.add_argument("--cache-db", help="SQLite vertex cache and result store")
    parser.add_argument("--out-dir", required=True, help="Directory for certificates and CSV")
    return parser


def _betas(text: Optional[str]) -> Optional[List[float]]:
    if text is None:
        return None
    if ":" in text:
        start, stop, points = text.split(":")
        n = int(points)
        ratio = (float(stop) / float(start)) ** (1 / max(n - 1, 1))
        return [float(start) * ratio**i for i in range(n)]
    return [float(b) for b in text.split(",") if b.strip()]


def _certify_pe(
    config: RunConfig,
    p: deps.Behavior,
    ns: List[int],
    args: argparse.Namespace,
    db: Optional[Session],
) -> Certified:
    cond, p_z = deps.split_behavior(p, args.regularize)
    scenario = cond.scenario
    joint = deps.joint_float(cond, p_z)
    dmap = OutputMap.from_spec(scenario, config.output_map)
    if args.polytope:
        V = load_polytope(args.polytope)
    else:
        V = deps.vertices_of(deps.input_polytope(config.input_polytope, scenario), db)

    if config.sv_bias is not None:
        inputs = sv2_polytope(
            SVSource(Fraction(config.sv_bias)), SVConvention(config.sv_convention)
        )
        vertices: Any = joint_product_vertices(V, inputs, scenario)
        results = n_sweep(joint, vertices, dmap, config.grid, ns, None, V.fingerprint)
        marginal = None
    else:
        results = n_sweep(joint, V, dmap, config.grid, ns, p_z, V.fingerprint)
        marginal = [float(x) for x in p_z]

    out: Certified = []
    for res in results:
        cert = res.certificate
        doc = CertificateFile(
            method="pe",
            scenario=scenario.id,
            output_map=dmap.spec,
            n=cert.n,
            rate=cert.rate,
            beta=cert.beta,
            kappa=cert.kappa,
            epsilon=cert.epsilon,
            delta_t=cert.delta_t,
            total_bits=cert.total,
            reported_bits=cert.reported,
            p_acc=cert.p_acc,
            pef=[float(x) for x in res.pef.values],
            typical_behavior=[float(x) for x in joint.as_float()],
            input_marginal=marginal,
            sv_bias=config.sv_bias,
            polytope_fingerprint=V.fingerprint,
            config=config.model_dump(mode="json"),
            extra={"sv_convention": config.sv_convention, "vertices": len(V)},
        )
        out.append((doc, _row(doc)))
    return out


def _certify_azuma(
    config: RunConfig, p: deps.Behavior, ns: List[int], args: argparse.Namespace
) -> Certified:
    cond, p_z = deps.split_behavior(p, args.regularize)
    joint = deps.joint_float(cond, p_z)
    dmap = OutputMap.from_spec(cond.scenario, config.output_map)
    level = config.refinement.level
    est = azuma_estimator(joint, dmap, structure_for(cond.scenario, level))
    out: Certified = []
    for n in ns:
        bound = max(
            (azuma_bound(est, n, kappa, config.grid.epsilon) for kappa in config.grid.kappas()),
            key=lambda b: b.total,
        )
        doc = CertificateFile(
            method="azuma",
            scenario=cond.scenario.id,
            output_map=dmap.spec,
            n=n,
            rate=bound.rate,
            kappa=bound.params["kappa"],
            epsilon=config.grid.epsilon,
            total_bits=bound.total,
            reported_bits=bound.reported,
            polytope_fingerprint=f"npa-level-{level}",
            config=config.model_dump(mode="json"),
            extra={
                "gamma": est.gamma,
                "penalty": bound.penalty,
                "estimator": [float(x) for x in est.B],
                "q_max": est.q_max,
                "q_min": est.q_min,
            },
        )
        out.append((doc, _row(doc)))
    return out


def _certify_ra_ns(config: RunConfig, p: deps.Behavior, ns: List[int]) -> Certified:
    if config.sv_bias is None:
        raise ConfigError("ra-ns needs --sv-bias")
    if not isinstance(p, JointBehavior):
        raise ConfigError("ra-ns needs a joint behavior p(a, b, x, y)")
    delta = float(Fraction(config.sv_bias))
    h_exp = float(bell_value(p, mdl_functional(delta)))
    logger.info("observed MDL value h_exp = %.10g at delta = %s", h_exp, config.sv_bias)
    out: Certified = []
    for n in ns:
        params = RaParams(h_exp=h_exp, delta=delta, n=n, epsilon=config.grid.epsilon)
        bound = ra_ns_bound(params)
        doc = CertificateFile(
            method="ra-ns",
            scenario=p.scenario.id,
            output_map="AB",
            n=n,
            rate=bound.rate,
            epsilon=config.grid.epsilon,
            total_bits=bound.total,
            reported_bits=bound.reported,
            sv_bias=config.sv_bias,
            config=config.model_dump(mode="json"),
            extra={"params": params.model_dump(), "optimum": bound.params},
        )
        out.append((doc, _row(doc)))
    return out


def _row(doc: CertificateFile) -> ResultRow:
    return ResultRow(
        n=doc.n,
        method=doc.method,
        polytope_fingerprint=doc.polytope_fingerprint,
        rate=doc.total_bits / doc.n,
        total_bits=doc.total_bits,
        beta=doc.beta,
        kappa=doc.kappa,
    )


def run(args: argparse.Namespace) -> int:
    start = time.perf_counter()
    config = deps.load_run_config(
        args,
        {
            "behavior": {"path": args.behavior} if args.behavior else None,
            "method": args.method,
            "input_polytope": args.input_polytope,
            "output_map": args.output_map,
            "sv_bias": args.sv_bias,
            "sv_convention": args.sv_convention,
            "cache_db": args.cache_db,
            "refinement": {"level": args.level},
            "grid": {
                "epsilon": args.epsilon,
                "delta_t": args.delta_t,
                "betas": _betas(args.betas),
            },
        },
    )
    if config.method == "eat":
        raise ConfigError("eat: not implemented (out of scope)")
    p = deps.resolve_behavior(config)
    ns = deps.parse_ns(args.n) if args.n else [config.grid.n]
    out_dir = Path(args.out_dir)

    with deps.get_db(config.cache_db) as db:
        if config.method == "pe":
            certified = _certify_pe(config, p, ns, args, db)
        elif config.method == "azuma":
            certified = _certify_azuma(config, p, ns, args)
        else:
            certified = _certify_ra_ns(config, p, ns)

        rows = []
        outputs = {}
        elapsed = time.perf_counter() - start
        for doc, row in certified:
            path = out_dir / f"certificate-{doc.method}-n{doc.n}.json"
            atomic_write_json(path, doc.model_dump(mode="json"))
            row = row.model_copy(update={"wall_time": elapsed})
            rows.append(row)
            outputs[f"n={doc.n}"] = str(path)
            if db is not None:
                crud.result.create(
                    db, obj_in=ResultRecordCreate(**row.model_dump(), certificate_path=str(path))
                )
            print(f"n={doc.n}: {doc.reported_bits:.6g} bits (raw {doc.total_bits:.6g})")

    csv_path = out_dir / "results.csv"
    deps.write_result_rows(csv_path, rows)
    outputs["results"] = str(csv_path)
    deps.write_run_record(
        csv_path,
        RunRecord(
            command="certify",
            config=config.model_dump(mode="json"),
            outputs=outputs,
            wall_time=time.perf_counter() - start,
        ),
    )
    return 0
