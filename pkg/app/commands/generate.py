"""
generate: synthetic grid city with planted localities/regions and trajectories
"""
from commands import EXIT_OK, CommandError, command_error
from models.config import GENERATOR_PRESETS, generator_config
from road_network import generate_synthetic, is_weakly_connected
from utils.storage import write_bundle


def register(subparsers):
    p = subparsers.add_parser("generate", help="write a synthetic data bundle")
    p.add_argument("--preset", choices=sorted(GENERATOR_PRESETS), default="grid10")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", "-o", required=True, help="bundle directory")
    p.add_argument("--width", type=int)
    p.add_argument("--height", type=int)
    p.add_argument("--regions", type=int)
    p.add_argument("--localities-per-region", type=int, dest="localities_per_region")
    p.add_argument("--trajectories", type=int)
    p.set_defaults(handler=run)


def run(args) -> int:
    try:
        cfg = generator_config(args.preset, {
            "width": args.width, "height": args.height, "regions": args.regions,
            "localities_per_region": args.localities_per_region, "trajectories": args.trajectories,
        })
        net, trajs, _, planted = generate_synthetic(cfg, args.seed)
        write_bundle(args.out, net, trajs, planted, cfg, args.seed)
    except CommandError:
        raise
    except Exception as e:
        raise command_error("generate", e)

    connected = "connected" if is_weakly_connected(net) else "not weakly connected"
    print(f"✓ {net.n_segments} segments ({connected}), {len(net.edges)} edges, "
          f"{len(trajs)} trajectories → {args.out}")
    return EXIT_OK
