"""
Training service - train, embed, sweep and ablation runs over data bundles
"""
import csv
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from dotenv import load_dotenv

# Add scripts directory to path
sys.path.append(os.path.join(os.path.dirname(__file__), '..', '..', 'scripts'))
from errors import ConfigError, EvaluationError, HiFiNetError
from hifinet_model import VARIANTS, HiFiNet, TrainConfig
from label_eval import MetricsReport, classify_report
from road_network import split_indices
from training import LossTrace, prepare_training_data, train

from models.reports import RunSummary
from utils.storage import (
    DataBundle, load_model, read_bundle, read_summary, write_embeddings, write_run,
    CHECKPOINT_FILE,
)

load_dotenv()

SWEEP_COLUMNS = ("n_localities", "n_regions", "seed", "final_loss", "macro_f1", "macro_auc", "status")
ABLATE_COLUMNS = ("variant", "final_loss", "macro_f1", "macro_auc")


def worker_count() -> int:
    """HIFINET_THREADS caps sweep/ablate workers (default 1)"""
    raw = os.getenv("HIFINET_THREADS", "1")
    try:
        value = int(raw)
    except ValueError as e:
        raise ConfigError(f"HIFINET_THREADS must be an integer, got '{raw}'") from e
    if value < 1:
        raise ConfigError(f"HIFINET_THREADS must be at least 1, got {value}")
    return value


def bundle_labels(bundle: DataBundle) -> np.ndarray:
    """Segment labels from the network file, else the planted regions"""
    labels = bundle.net.labels()
    if labels is None and bundle.planted is not None:
        labels = bundle.planted.region
    if labels is None:
        raise EvaluationError("the data bundle has no segment labels and no planted regions")
    return np.asarray(labels, dtype=np.int64)


def evaluate_embeddings(emb: np.ndarray, labels: np.ndarray, seed: int) -> MetricsReport:
    return classify_report(emb, labels, split_indices(len(labels), seed), seed=seed)


@dataclass
class TrainResult:
    model: HiFiNet
    trace: LossTrace
    summary: RunSummary


def fit(bundle: DataBundle, config: TrainConfig, seed: int, data_label: str = "",
        verbose: bool = False) -> TrainResult:
    data = prepare_training_data(bundle.net, bundle.trajectories, config, seed)
    model, trace = train(config, data, seed, verbose=verbose)
    initial, final = trace.initial_total, trace.final_total
    summary = RunSummary(
        data=data_label,
        seed=seed,
        variant=config.variant,
        epochs=config.epochs,
        n_segments=bundle.net.n_segments,
        n_parameters=model.store.num_scalars(),
        initial_loss=initial,
        final_loss=final,
        loss_ratio=final / initial if initial else None,
    )
    return TrainResult(model=model, trace=trace, summary=summary)


def train_run(data_dir: str, out_dir: str, config: TrainConfig, seed: int, verbose: bool = True) -> RunSummary:
    """
    Train on a data bundle and write the run directory

    Args:
        data_dir: bundle directory (network.json, trajectories.jsonl)
        out_dir: run directory to create
        config: validated training config
        seed: initialisation and split seed

    Returns:
        Run summary (also written to summary.json)
    """
    print(f"📦 Loading data bundle: {data_dir}")
    bundle = read_bundle(data_dir)
    print(f"   {bundle.net.n_segments} segments, {len(bundle.net.edges)} edges, "
          f"{len(bundle.trajectories)} trajectories")

    print(f"🔬 Training variant '{config.variant}' for {config.epochs} epochs (seed {seed})")
    result = fit(bundle, config, seed, data_label=str(Path(data_dir).resolve()), verbose=verbose)

    write_run(out_dir, result.model, result.trace, result.summary.model_dump())
    if result.summary.final_loss is not None:
        print(f"✓ Loss {result.summary.initial_loss:.6g} → {result.summary.final_loss:.6g}")
    print(f"✓ Run written to {out_dir}")
    return result.summary


def embed_run(run_dir: str, out_path: str, stream: str = "fused", data_dir: Optional[str] = None) -> Tuple[int, int]:
    """
    Export frozen segment embeddings of a trained run

    Returns:
        (rows, embedding width) of the written CSV
    """
    data_dir = data_dir or read_summary(run_dir).get("data")
    if not data_dir:
        raise ConfigError(f"{run_dir}: summary.json does not record a data directory; pass --data")
    bundle = read_bundle(data_dir)
    model = load_model(Path(run_dir) / CHECKPOINT_FILE, bundle.net)
    emb = model.embeddings(stream)
    write_embeddings(emb, out_path)
    print(f"✓ Wrote {emb.shape[0]} x {emb.shape[1]} {stream} embeddings to {out_path}", file=sys.stderr)
    return emb.shape


def _map(task, items: Sequence, workers: int) -> List:
    if workers <= 1:
        return [task(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(task, items))


def sweep(data_dir: str, config: TrainConfig, localities: Sequence[int], regions: Sequence[int],
          seed: int, out_path: str) -> List[Dict]:
    """
    Grid over (N_L, N_R); each cell trains with its own derived seed and is
    scored by label classification. Invalid cells are kept with their reason.
    """
    bundle = read_bundle(data_dir)
    labels = bundle_labels(bundle)
    cells = [(n_l, n_r) for n_l in localities for n_r in regions]
    print(f"📊 Sweeping {len(cells)} cells with {worker_count()} worker(s)", file=sys.stderr)

    def run_cell(indexed):
        index, (n_l, n_r) = indexed
        cell_seed = seed + index
        row = {"n_localities": n_l, "n_regions": n_r, "seed": cell_seed,
               "final_loss": None, "macro_f1": None, "macro_auc": None, "status": "ok"}
        try:
            cell_config = TrainConfig.model_validate(
                {**config.model_dump(by_alias=True), "n_localities": n_l, "n_regions": n_r})
            result = fit(bundle, cell_config, cell_seed)
            metrics = evaluate_embeddings(result.model.embeddings(), labels, cell_seed)
            row.update(final_loss=result.summary.final_loss, macro_f1=metrics.macro_f1, macro_auc=metrics.macro_auc)
        except (HiFiNetError, ValueError) as e:
            row["status"] = f"skipped: {e}".replace("\n", " ")
        return row

    rows = _map(run_cell, list(enumerate(cells)), worker_count())
    _write_rows(out_path, SWEEP_COLUMNS, rows)
    print(f"✓ Sweep written to {out_path}", file=sys.stderr)
    return rows


def ablate(data_dir: str, config: TrainConfig, seed: int, out_path: str,
           variants: Sequence[str] = VARIANTS) -> List[Dict]:
    """Train every variant on one bundle; CSV variant,final_loss,macro_f1,macro_auc"""
    bundle = read_bundle(data_dir)
    labels = bundle_labels(bundle)

    def run_variant(variant):
        variant_config = config.model_copy(update={"variant": variant})
        result = fit(bundle, variant_config, seed)
        metrics = evaluate_embeddings(result.model.embeddings(), labels, seed)
        print(f"✓ {variant}: loss {result.summary.final_loss}, macro AUC {metrics.macro_auc:.4f}", file=sys.stderr)
        return {"variant": variant, "final_loss": result.summary.final_loss,
                "macro_f1": metrics.macro_f1, "macro_auc": metrics.macro_auc}

    rows = _map(run_variant, list(variants), worker_count())
    _write_rows(out_path, ABLATE_COLUMNS, rows)
    return rows


def _write_rows(path: str, columns: Sequence[str], rows: List[Dict]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.DictWriter(f, fieldnames=list(columns))
        writer.writeheader()
        for row in rows:
            writer.writerow({k: ("" if row[k] is None else (repr(row[k]) if isinstance(row[k], float) else row[k]))
                             for k in columns})
