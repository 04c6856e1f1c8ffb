"""
embed: trained run → embeddings CSV
"""
from commands import EXIT_OK, command_error
from services.training_service import embed_run


def register(subparsers):
    p = subparsers.add_parser("embed", help="export segment embeddings of a run")
    p.add_argument("--run", required=True, help="run directory")
    p.add_argument("--out", "-o", required=True, help="CSV path")
    p.add_argument("--stream", choices=("fused", "low", "high"), default="fused")
    p.add_argument("--data", help="bundle directory (defaults to the one recorded by the run)")
    p.set_defaults(handler=run)


def run(args) -> int:
    try:
        embed_run(args.run, args.out, args.stream, args.data)
    except Exception as e:
        raise command_error("embedding export", e)
    return EXIT_OK
