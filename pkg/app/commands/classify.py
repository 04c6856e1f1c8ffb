"""
eval-classify: embeddings + segment labels → macro F1 / AUC report
"""
from commands import EXIT_OK, command_error
from errors import EvaluationError
from models.reports import MetricsReport
from services.training_service import bundle_labels, evaluate_embeddings
from utils.storage import read_bundle, read_embeddings, write_json


def register(subparsers):
    p = subparsers.add_parser("eval-classify", help="label classification over frozen embeddings")
    p.add_argument("--embeddings", required=True, help="embeddings CSV")
    p.add_argument("--data", required=True, help="bundle directory holding the labels")
    p.add_argument("--seed", type=int, default=0, help="split and classifier seed")
    p.add_argument("--out", "-o", help="JSON path (stdout when omitted)")
    p.set_defaults(handler=run)


def run(args) -> int:
    try:
        _, emb = read_embeddings(args.embeddings)
        labels = bundle_labels(read_bundle(args.data))
        if emb.shape[0] != len(labels):
            raise EvaluationError(f"{emb.shape[0]} embedding rows for {len(labels)} labelled segments")
        report = MetricsReport.from_result(evaluate_embeddings(emb, labels, args.seed))
        write_json(report.model_dump(by_alias=True), args.out)
    except Exception as e:
        raise command_error("classification", e)
    return EXIT_OK
