# cli/commands/ensemble.py

from cli.options import add_run_options, build_run_config
from core.errors import ConfigError
from core.storage import write_ensemble
from sdi.cartography import ensemble_study
from sdi.systems import get_system


def register(subparsers) -> None:
    parser = subparsers.add_parser("ensemble", help="Integrate a bundle of parameter realizations from one initial state")
    add_run_options(parser)
    parser.add_argument("--z0", type=float, nargs="+", required=True, help="Initial state")
    parser.add_argument("-n", type=int, default=10, dest="n_realizations", help="Number of random realizations")
    parser.add_argument("--sampling", choices=["random", "quadrature"], default="random")
    parser.set_defaults(handler=run)


def run(args) -> int:
    config = build_run_config(args)
    system = get_system(config.system)
    if len(args.z0) != system.n:
        raise ConfigError(f"{system.name} needs {system.n} initial state components, got {len(args.z0)}")
    if args.n_realizations < 1:
        raise ConfigError("-n must be at least 1")
    bundle = ensemble_study(system, args.z0, config.box, args.n_realizations, config.indicator_config(), args.sampling)
    path = write_ensemble(bundle, system.state_names, config.output)
    print(f"spread_max: {bundle.spread_max:.6g}")
    print(f"ensemble: {path}")
    return 0
