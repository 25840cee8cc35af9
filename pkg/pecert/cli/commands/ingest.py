"""``pecert ingest``: turn a trial log or a table fixture into a behavior file."""

import argparse
import logging
import time
from typing import Any

from pecert.cli import deps
from pecert.engine.behaviors import (
    BUNDLED_TABLES,
    JointBehavior,
    estimate_frequencies,
    load_table_behavior,
    load_trial_log,
    regularize,
    save_behavior,
)
from pecert.engine.scenario import Scenario
from pecert.schemas.run import RunRecord

logger = logging.getLogger(__name__)


def register(subparsers: Any) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("ingest", help="Convert recorded data into a behavior file")
    source = parser.add_mutually_exclusive_group(required=True)
    source.add_argument("--log", help="Trial log CSV (round,z,c)")
    source.add_argument("--table", help="Table fixture JSON, or a bundled name (mermin)")
    parser.add_argument("--scenario", default="2-2-2", help="Scenario id of a trial log")
    parser.add_argument("--regularize", type=float, metavar="EPS", help="Regularise with eps_mix")
    parser.add_argument("--sv-bias", type=float, help="Report the MDL value at this SV bias")
    parser.add_argument("--out", required=True, help="Behavior file to write")
    return parser


def run(args: argparse.Namespace) -> int:
    start = time.perf_counter()
    provenance: dict = {}
    if args.table:
        p: deps.Behavior = load_table_behavior(BUNDLED_TABLES.get(args.table, args.table))
        provenance["table"] = args.table
    else:
        log = load_trial_log(args.log, Scenario.from_id(args.scenario))
        p = estimate_frequencies(log)
        provenance.update({"log": args.log, "rounds": log.n})

    summary = deps.bell_summary(p, args.sv_bias)
    provenance["raw_bell_values"] = summary
    if args.regularize is not None:
        if isinstance(p, JointBehavior):
            cond = regularize(p.conditional(), args.regularize)
            p = cond.to_joint(p.input_marginal)
        else:
            p = regularize(p, args.regularize)
        provenance["eps_mix"] = args.regularize
        provenance["bell_values"] = deps.bell_summary(p, args.sv_bias)

    save_behavior(args.out, p, provenance)
    for name, value in summary.items():
        print(f"{name}: {value:.12g}")
    deps.write_run_record(
        args.out,
        RunRecord(
            command="ingest",
            config={k: v for k, v in vars(args).items() if k != "handler"},
            outputs={"behavior": str(args.out)},
            wall_time=time.perf_counter() - start,
        ),
    )
    return 0
