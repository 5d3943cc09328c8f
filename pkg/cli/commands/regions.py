# cli/commands/regions.py

import os

from core.config import SDI_OUTPUT_DIR
from core.errors import ConfigError
from core.storage import read_field, write_regions
from models.schemas import RegionPredicate
from sdi.cartography import extract_regions


def register(subparsers) -> None:
    parser = subparsers.add_parser("regions", help="Threshold a field into connected regions")
    parser.add_argument("field", metavar="FIELD", help="field.csv produced by the field command")
    parser.add_argument("--column", help="Column to threshold (default: first indicator column)")
    group = parser.add_mutually_exclusive_group(required=True)
    group.add_argument("--below", type=float)
    group.add_argument("--above", type=float)
    group.add_argument("--band", type=float, nargs=2, metavar=("LO", "HI"))
    parser.add_argument("--out", help="Output directory (default: next to FIELD)")
    parser.set_defaults(handler=run)


def _predicate(args) -> RegionPredicate:
    if args.band is not None:
        return RegionPredicate(kind="band", lo=args.band[0], hi=args.band[1])
    if args.below is not None:
        return RegionPredicate(kind="below", threshold=args.below)
    return RegionPredicate(kind="above", threshold=args.above)


def run(args) -> int:
    predicate = _predicate(args)
    field = read_field(args.field)
    if args.column and args.column not in field.columns:
        raise ConfigError(f"Column {args.column} not in field (available: {', '.join(field.columns)})")
    region = extract_regions(field, predicate, args.column)
    out_dir = args.out or os.path.dirname(os.path.abspath(args.field)) or SDI_OUTPUT_DIR
    paths = write_regions(region, field, out_dir)
    print(f"{int(region.mask.sum())} cell(s) in {len(region.components)} component(s)")
    for kind, path in paths.items():
        print(f"{kind}: {path}")
    return 0
