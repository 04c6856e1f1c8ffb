"""
sweep: grid over locality/region counts → CSV of loss and classification metrics
"""
from commands import EXIT_OK, CommandError, command_error
from commands.train import add_config_arguments, config_from_args
from services.training_service import sweep


def _counts(text: str):
    return [int(v) for v in text.split(",") if v.strip()]


def register(subparsers):
    p = subparsers.add_parser("sweep", help="grid over N_L x N_R")
    p.add_argument("--data", required=True, help="bundle directory")
    p.add_argument("--localities", type=_counts, default=[5, 10, 20], help="comma-separated N_L values")
    p.add_argument("--regions", type=_counts, default=[2, 4, 8], help="comma-separated N_R values")
    p.add_argument("--out", "-o", required=True, help="CSV path")
    add_config_arguments(p)
    p.set_defaults(handler=run)


def run(args) -> int:
    try:
        config, seed = config_from_args(args)
        sweep(args.data, config, args.localities, args.regions, seed, args.out)
    except CommandError:
        raise
    except Exception as e:
        raise command_error("sweep", e)
    return EXIT_OK
