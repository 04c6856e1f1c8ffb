"""
train: config + data bundle → run directory
"""
from commands import EXIT_OK, CommandError, command_error
from models.config import VARIANTS, load_train_config
from services.training_service import train_run


def add_config_arguments(p):
    p.add_argument("--config", help="TrainConfig JSON file")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--lr", type=float)
    p.add_argument("--variant", choices=VARIANTS)


def config_from_args(args):
    config = load_train_config(args.config, {
        "epochs": args.epochs, "lr": args.lr, "seed": args.seed, "variant": args.variant,
    })
    return config, config.seed


def register(subparsers):
    p = subparsers.add_parser("train", help="train on a data bundle")
    p.add_argument("--data", required=True, help="bundle directory")
    p.add_argument("--out", "-o", required=True, help="run directory")
    add_config_arguments(p)
    p.add_argument("--quiet", action="store_true", help="hide the epoch progress bar")
    p.set_defaults(handler=run)


def run(args) -> int:
    try:
        config, seed = config_from_args(args)
        train_run(args.data, args.out, config, seed, verbose=not args.quiet)
    except CommandError:
        raise
    except Exception as e:
        raise command_error("training", e)
    return EXIT_OK
