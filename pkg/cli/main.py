# cli/main.py

import argparse
import logging
import sys
from typing import List, Optional

from pydantic import ValidationError

from core.config import SDI_LOG_LEVEL, TOOL_VERSION
from core.errors import ConfigError, FieldFileError
from core.log import configure_logging
from cli.commands import COMMANDS

logger = logging.getLogger("sdi")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sdi",
        description="Polynomial stochastic dynamical indicators for uncertain dynamical systems",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {TOOL_VERSION}")
    parser.add_argument("--log-level", default=SDI_LOG_LEVEL, dest="log_level")
    subparsers = parser.add_subparsers(dest="command", required=True)
    for command in COMMANDS:
        command.register(subparsers)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        configure_logging(args.log_level)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    try:
        return args.handler(args)
    except FieldFileError as exc:
        logger.error("Malformed field file: %s", exc)
        return EXIT_RUNTIME
    except (ConfigError, ValidationError) as exc:
        logger.error("Configuration error: %s", exc)
        return EXIT_CONFIG
    except ValueError as exc:
        logger.error("Invalid argument: %s", exc)
        return EXIT_CONFIG
    except OSError as exc:
        logger.error("I/O failure: %s", exc)
        return EXIT_RUNTIME
    except Exception:
        logger.exception("Run failed")
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
