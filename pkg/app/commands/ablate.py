"""
ablate: train every model variant on one bundle → CSV
"""
from commands import EXIT_OK, command_error
from commands.train import add_config_arguments, config_from_args
from models.config import VARIANTS
from services.training_service import ablate


def register(subparsers):
    p = subparsers.add_parser("ablate", help="compare model variants")
    p.add_argument("--data", required=True, help="bundle directory")
    p.add_argument("--out", "-o", required=True, help="CSV path")
    p.add_argument("--variants", type=lambda s: [v for v in s.split(",") if v], default=list(VARIANTS),
                   help="comma-separated subset of " + ",".join(VARIANTS))
    add_config_arguments(p)
    p.set_defaults(handler=run)


def run(args) -> int:
    try:
        unknown = sorted(set(args.variants) - set(VARIANTS))
        if unknown:
            raise ValueError(f"unknown variant(s) {unknown}")
        config, seed = config_from_args(args)
        ablate(args.data, config, seed, args.out, args.variants)
    except Exception as e:
        raise command_error("ablation", e)
    return EXIT_OK
