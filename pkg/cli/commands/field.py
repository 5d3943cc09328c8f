# cli/commands/field.py

import logging
import os

from cli.options import add_run_options, build_run_config
from core.storage import FIELD_PGM, write_field, write_pgm
from models.schemas import FieldFileHeader
from sdi.cartography import sweep
from sdi.systems import get_system

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    parser = subparsers.add_parser("field", help="Compute an indicator cartography over a 2-D grid")
    add_run_options(parser)
    parser.add_argument("--pgm", metavar="COLUMN", help="Column rendered to field.pgm (default: first column)")
    parser.add_argument("--no-pgm", action="store_true", dest="no_pgm")
    parser.set_defaults(handler=run)


def run(args) -> int:
    config = build_run_config(args)
    system = get_system(config.system)
    field = sweep(system, config.grid, config.box, config.indicators, config.indicator_config(), workers=args.workers)

    header = FieldFileHeader(
        seed=config.seed,
        workers=field.metadata["workers"],
        elapsed_seconds=field.metadata["elapsed_seconds"],
        columns=field.columns,
        config=config,
    )
    paths = write_field(field, header, config.output)
    if not args.no_pgm:
        column = args.pgm or field.columns[0]
        paths["pgm"] = write_pgm(field.column(column), os.path.join(config.output, FIELD_PGM))
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    return 0
