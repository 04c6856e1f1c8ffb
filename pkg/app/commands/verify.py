"""
verify: coarsening checks on built-in and random graphs; exit 1 on failure
"""
from commands import EXIT_FAILED, EXIT_OK, command_error
from services.verification_service import MIN_ENERGY_INSTANCES, run_verification
from utils.storage import write_json


def register(subparsers):
    p = subparsers.add_parser("verify", help="run the spectral coarsening checks")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=MIN_ENERGY_INSTANCES, help="random energy instances (min 100)")
    p.add_argument("--out", "-o", help="JSON path (stdout when omitted)")
    p.set_defaults(handler=run)


def run(args) -> int:
    try:
        report = run_verification(args.seed, args.trials)
        write_json(report.model_dump(mode="json"), args.out)
    except Exception as e:
        raise command_error("verification", e)
    return EXIT_OK if report.passed else EXIT_FAILED
