"""``pecert generate``: write a generated behavior file."""

import argparse
import logging
import time
from typing import Any

from pecert.cli import deps
from pecert.core.errors import ConfigError
from pecert.engine.behaviors import save_behavior
from pecert.engine.scenario import Scenario
from pecert.schemas.run import RunRecord

logger = logging.getLogger(__name__)


def register(subparsers: Any) -> argparse.ArgumentParser:
    parser = subparsers.add_parser("generate", help="Generate a behavior file")
    parser.add_argument(
        "--generator", choices=["tilted-chsh", "mermin", "hardy", "uniform"], help="Generator"
    )
    parser.add_argument(
        "--param", action="append", metavar="NAME=VALUE", help="Generator parameter (alpha, w)"
    )
    parser.add_argument("--scenario", help="Scenario id for the uniform generator")
    parser.add_argument("--sv-bias", type=float, help="Report the MDL value at this SV bias")
    parser.add_argument("--out", required=True, help="Behavior file to write")
    return parser


def run(args: argparse.Namespace) -> int:
    start = time.perf_counter()
    behavior = None
    if args.generator is not None:
        behavior = {"generator": args.generator, "params": deps.parse_params(args.param)}
    config = deps.load_run_config(args, {"behavior": behavior, "scenario": args.scenario})
    if config.behavior is None or config.behavior.generator is None:
        raise ConfigError("generate needs --generator")
    p = deps.generate_behavior(config.behavior, Scenario.from_id(config.scenario))
    summary = deps.bell_summary(p, args.sv_bias)
    provenance = {
        "generator": config.behavior.generator,
        "params": config.behavior.params,
        "bell_values": summary,
    }
    save_behavior(args.out, p, provenance)
    for name, value in summary.items():
        print(f"{name}: {value:.12g}")
    deps.write_run_record(
        args.out,
        RunRecord(
            command="generate",
            config=config.model_dump(mode="json"),
            outputs={"behavior": str(args.out)},
            wall_time=time.perf_counter() - start,
        ),
    )
    logger.info("wrote %s (%s)", args.out, p.label)
    return 0
