"""
spectral: GFT, Dirichlet energy and edge-frequency report of a segment signal
"""
import numpy as np

from commands import EXIT_OK, command_error
from errors import ContractError
from graph_spectral import spectral_profile
from models.reports import SpectralReport
from utils.storage import read_bundle, read_embeddings, write_json

SIGNALS = ("flow", "lanes", "length")


def register(subparsers):
    p = subparsers.add_parser("spectral", help="spectral report of a signal over the network")
    p.add_argument("--data", required=True, help="bundle directory")
    p.add_argument("--signal", choices=SIGNALS, default="flow")
    p.add_argument("--embeddings", help="embeddings CSV; reports one column instead of --signal")
    p.add_argument("--column", type=int, default=0, help="embedding column with --embeddings")
    p.add_argument("--cut", type=int, help="low-band size k (default ⌈0.1·n⌉)")
    p.add_argument("--out", "-o", help="JSON path (stdout when omitted)")
    p.set_defaults(handler=run)


def _signal(args, net):
    if args.embeddings:
        ids, emb = read_embeddings(args.embeddings)
        if len(ids) != net.n_segments or not np.array_equal(ids, np.arange(net.n_segments)):
            raise ContractError(f"{args.embeddings}: rows do not match the {net.n_segments} segments")
        if not 0 <= args.column < emb.shape[1]:
            raise ContractError(f"column {args.column} outside the {emb.shape[1]} embedding columns")
        return f"e{args.column}", emb[:, args.column]
    if args.signal == "flow":
        flows = net.flows()
        if flows is None:
            raise ContractError("the network has no flow values; choose --signal lanes or length")
        return "flow", flows
    if args.signal == "lanes":
        return "lanes", np.array([s.lane_count for s in net.segments], dtype=np.float64)
    return "length", np.array([s.length_m for s in net.segments], dtype=np.float64)


def run(args) -> int:
    try:
        net = read_bundle(args.data).net
        name, values = _signal(args, net)
        report = SpectralReport.from_profile(name, spectral_profile(net, values, args.cut))
        write_json(report.model_dump(), args.out)
    except Exception as e:
        raise command_error("spectral report", e)
    return EXIT_OK
