import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from pecert.__version__ import __version__
from pecert.cli.commands import certify, generate, ingest, refine, verify
from pecert.core.errors import ConfigError, PecertError

logger = logging.getLogger("pecert")

COMMANDS = (generate, refine, certify, verify, ingest)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pecert",
        description="Device-independent randomness certification with probability estimation.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging level (default INFO)",
    )
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        sub = command.register(subparsers)
        sub.add_argument("--config", help="Run configuration JSON")
        sub.set_defaults(handler=command.run)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level),
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        return int(args.handler(args) or 0)
    except ValidationError as exc:
        print(f"pecert: invalid configuration:\n{exc}", file=sys.stderr)
        return ConfigError.exit_code
    except PecertError as exc:
        print(f"pecert: {exc.detail}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
