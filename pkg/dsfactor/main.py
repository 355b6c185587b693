from __future__ import annotations

import argparse
import importlib
import logging
import sys
from typing import List, Optional

import numpy as np

from dsfactor.config import load_settings
from dsfactor.utils.errors import DSFactorError, ValidationError
from dsfactor.utils.log import setup_logging

COMMANDS = [
    "dsfactor.commands.plan",
    "dsfactor.commands.generate",
    "dsfactor.commands.factorize",
    "dsfactor.commands.reconstruct",
    "dsfactor.commands.matmul",
    "dsfactor.commands.bench",
    "dsfactor.commands.train",
]

FORMATS = """file formats:
  BSM  b"BSM1", rows u32 LE, cols u32 LE, rows*cols float32 LE row-major
  DSF  b"DSF1", m n b k s as u32 LE; per block: K*B float32 dictionary,
       M*S u16 atom indices (ascending per row), M*S float32 values
  CSV  RFC-4180 with a header row, '.' decimal separator

exit codes: 0 success, 1 validation, 2 I/O, 3 numeric failure"""

log = logging.getLogger(__name__)


class Parser(argparse.ArgumentParser):
    # usage errors are validation failures, not I/O (argparse would exit 2)
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(ValidationError.exit_code, f"{self.prog}: error: {message}\n")


def build_parser(settings) -> argparse.ArgumentParser:
    parser = Parser(
        prog="dsfactor",
        description="Dense-sparse block factorization of weight matrices.",
        epilog=FORMATS,
        formatter_class=argparse.RawDescriptionHelpFormatter,
    )
    parser.add_argument("--threads", type=int, default=settings.threads,
                        help="worker cap for block-parallel work, 0 = auto (env DSFACTOR_THREADS)")
    parser.add_argument("--log-level", default=settings.log_level,
                        help="logging level (env DSFACTOR_LOG_LEVEL)")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=Parser)
    for ext in COMMANDS:
        importlib.import_module(ext).setup(sub, settings)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    try:
        settings = load_settings()
    except DSFactorError as e:
        setup_logging()
        log.error("%s", e)
        return e.exit_code
    args = build_parser(settings).parse_args(argv)
    level = args.log_level.upper()
    if not isinstance(logging.getLevelName(level), int):
        setup_logging()
        log.error("unknown log level %r", args.log_level)
        return ValidationError.exit_code
    setup_logging(level)
    if args.threads < 0:
        log.error("--threads must be >= 0")
        return ValidationError.exit_code
    try:
        return args.handler(args) or 0
    except DSFactorError as e:
        log.error("%s", e)
        return e.exit_code
    except OSError as e:
        log.error("I/O failure: %s", e)
        return 2
    except (np.linalg.LinAlgError, FloatingPointError) as e:
        log.error("numeric failure: %s", e)
        return 3


if __name__ == "__main__":
    sys.exit(main())
