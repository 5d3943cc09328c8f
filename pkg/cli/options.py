# cli/options.py

import argparse
from typing import List, Optional, Tuple

from pydantic import ValidationError

from core.config import DEFAULT_GRID_SIZE, SDI_OUTPUT_DIR, SDI_WORKERS
from core.errors import ConfigError
from core.presets import get_preset, preset_names
from core.storage import load_run_config
from models.schemas import ALL_INDICATORS, GridAxis, GridSpec, RunConfig
from sdi.systems import SYSTEMS, get_system

# preset used when only --system is given
SYSTEM_PRESETS = {
    "pendulum": "pendulum",
    "double_gyre": "double_gyre",
    "cr3bp": "cr3bp_case1",
    "er3bp": "er3bp",
}


def parse_grid(text: str) -> Tuple[int, int]:
    try:
        width, height = (int(x) for x in text.lower().split("x"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"grid must look like WxH, got {text!r}")
    if width < 2 or height < 2:
        raise argparse.ArgumentTypeError("grid needs at least 2 cells per axis")
    return width, height


def add_run_options(parser: argparse.ArgumentParser) -> None:
    """Options shared by every command that builds a RunConfig."""
    source = parser.add_argument_group("configuration source")
    source.add_argument("--preset", choices=preset_names(), help="Named study configuration")
    source.add_argument("--config", metavar="FILE", help="JSON run configuration (a field.meta.json works too)")
    source.add_argument("--system", choices=sorted(SYSTEMS), help="System to analyse with its default box")

    run = parser.add_argument_group("overrides")
    run.add_argument("--grid", type=parse_grid, metavar="WxH")
    run.add_argument("--tf", type=float, help="Final time in system time units")
    run.add_argument("--degree", type=int)
    run.add_argument("--quad-n", type=int, dest="quad_n", help="Gauss abscissae per uncertain dimension")
    run.add_argument("--epsilon", type=float)
    run.add_argument("--seed", type=int)
    run.add_argument("--ic-uncertainty", type=float, dest="ic_uncertainty", metavar="EDGE",
                     help="Put the uncertainty on a square of this edge around each initial condition")
    run.add_argument("--alpha-variant", choices=["max_sqrt", "eig_sum"], dest="alpha_variant")
    run.add_argument("--indicator", action="append", choices=list(ALL_INDICATORS) + ["all"], dest="indicators")
    run.add_argument("--workers", type=int, default=SDI_WORKERS)
    run.add_argument("--out", help=f"Output directory (default {SDI_OUTPUT_DIR})")


def _base_config(args) -> RunConfig:
    chosen = [name for name in ("preset", "config", "system") if getattr(args, name, None)]
    if len(chosen) > 1:
        raise ConfigError(f"Use only one of --preset, --config, --system (got {', '.join(chosen)})")
    if args.config:
        return load_run_config(args.config)
    if args.preset:
        return get_preset(args.preset)
    if args.system in SYSTEM_PRESETS:
        return get_preset(SYSTEM_PRESETS[args.system])
    if args.system:
        system = get_system(args.system)
        axes = list(system.state_names[:2]) if system.n >= 2 else ["u", "v"]
        return RunConfig(
            system=system.name,
            box=system.box(),
            grid=GridSpec(
                axis1=GridAxis(name=axes[0], lo=-1.0, hi=1.0, count=DEFAULT_GRID_SIZE),
                axis2=GridAxis(name=axes[1], lo=-1.0, hi=1.0, count=DEFAULT_GRID_SIZE),
            ),
            t_f=args.tf or 10.0,
        )
    raise ConfigError("One of --preset, --config or --system is required")


def _selection(values: Optional[List[str]]) -> Optional[List[str]]:
    if not values:
        return None
    if "all" in values:
        return list(ALL_INDICATORS)
    return values


def build_run_config(args) -> RunConfig:
    """Base configuration with command-line overrides applied and re-validated."""
    config = _base_config(args)
    updates = {
        "t_f": args.tf,
        "degree": args.degree,
        "n_per_dim": args.quad_n,
        "epsilon": args.epsilon,
        "seed": args.seed,
        "ic_edge": args.ic_uncertainty,
        "alpha_variant": args.alpha_variant,
        "indicators": _selection(args.indicators),
        "output": args.out,
    }
    data = config.model_dump()
    data.update({k: v for k, v in updates.items() if v is not None})
    if args.ic_uncertainty is not None and not args.indicators:
        # SFTLE columns are undefined in IC mode
        data["indicators"] = [name for name in data["indicators"] if not name.startswith("sftle")] or ["alpha"]
    if args.grid:
        width, height = args.grid
        data["grid"]["axis1"]["count"] = width
        data["grid"]["axis2"]["count"] = height
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"Invalid configuration: {exc}")
