"""
Run and data storage: data bundles, the binary checkpoint container,
embedding CSVs and JSON reports
"""
import csv
import json
import os
import struct
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Optional, Tuple, Union

import numpy as np
from pydantic import ValidationError

# Add scripts directory to path
sys.path.append(os.path.join(os.path.dirname(__file__), '..', '..', 'scripts'))
from errors import CheckpointError, ConfigError, NetworkLoadError
from hifinet_model import HiFiNet, TrainConfig
from road_network import (
    GeneratorConfig, PlantedPartition, RoadNetwork, TrajectorySet,
    load_network, load_trajectories, write_network, write_trajectories,
)
from training import LossTrace

PathLike = Union[str, Path]

CHECKPOINT_MAGIC = b"HFNCKPT\x00"
CHECKPOINT_VERSION = 1

NETWORK_FILE = "network.json"
TRAJECTORIES_FILE = "trajectories.jsonl"
PLANTED_FILE = "planted.json"
MANIFEST_FILE = "manifest.json"

CHECKPOINT_FILE = "checkpoint.hfn"
TRACE_FILE = "loss_trace.csv"
CONFIG_FILE = "config.json"
SUMMARY_FILE = "summary.json"


# ---------------------------------------------------------------------------
# JSON helpers
# ---------------------------------------------------------------------------

def write_json(payload, path: Optional[PathLike] = None) -> None:
    """Write payload to path, or to stdout as the only output when path is None"""
    text = json.dumps(payload, indent=2)
    if path is None:
        print(text)
        return
    with open(path, "w", encoding="utf-8") as f:
        f.write(text + "\n")


def read_json(path: PathLike) -> dict:
    try:
        with open(path, "r", encoding="utf-8") as f:
            return json.load(f)
    except FileNotFoundError as e:
        raise NetworkLoadError(f"file not found: {path}") from e
    except json.JSONDecodeError as e:
        raise NetworkLoadError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e


# ---------------------------------------------------------------------------
# Data bundle
# ---------------------------------------------------------------------------

@dataclass
class DataBundle:
    net: RoadNetwork
    trajectories: TrajectorySet
    planted: Optional[PlantedPartition] = None
    manifest: Optional[dict] = None


def write_bundle(directory: PathLike, net: RoadNetwork, trajs: TrajectorySet, planted: PlantedPartition,
                 generator: GeneratorConfig, seed: int) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    write_network(net, directory / NETWORK_FILE)
    write_trajectories(trajs, directory / TRAJECTORIES_FILE)
    write_json({
        "locality": planted.locality.tolist(),
        "region": planted.region.tolist(),
        "n_localities": planted.n_localities,
        "n_regions": planted.n_regions,
    }, directory / PLANTED_FILE)
    write_json({"seed": seed, "generator": generator.model_dump(), "n_segments": net.n_segments,
                "n_trajectories": len(trajs)}, directory / MANIFEST_FILE)
    return directory


def read_bundle(directory: PathLike) -> DataBundle:
    """
    Load a data directory; planted.json and manifest.json are optional

    Raises:
        NetworkLoadError: the directory or a required file is missing or malformed
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise NetworkLoadError(f"data directory not found: {directory}")
    if not (directory / NETWORK_FILE).exists():
        raise NetworkLoadError(f"{directory}: missing {NETWORK_FILE}")
    net = load_network(directory / NETWORK_FILE)

    trajs = TrajectorySet()
    if (directory / TRAJECTORIES_FILE).exists():
        trajs = load_trajectories(directory / TRAJECTORIES_FILE, net.n_segments)

    planted = None
    if (directory / PLANTED_FILE).exists():
        raw = read_json(directory / PLANTED_FILE)
        planted = PlantedPartition(
            locality=np.asarray(raw["locality"], dtype=np.int64),
            region=np.asarray(raw["region"], dtype=np.int64),
            n_localities=int(raw["n_localities"]),
            n_regions=int(raw["n_regions"]),
        )
        if len(planted.region) != net.n_segments:
            raise NetworkLoadError(
                f"{directory / PLANTED_FILE}: {len(planted.region)} entries for {net.n_segments} segments")

    manifest = read_json(directory / MANIFEST_FILE) if (directory / MANIFEST_FILE).exists() else None
    return DataBundle(net=net, trajectories=trajs, planted=planted, manifest=manifest)


# ---------------------------------------------------------------------------
# Checkpoint container
# ---------------------------------------------------------------------------

@dataclass
class Checkpoint:
    version: int
    seed: int
    config: TrainConfig
    params: Dict[str, np.ndarray]


def save_checkpoint(model: HiFiNet, path: PathLike) -> None:
    """
    Layout (little-endian): magic, u32 version, i64 seed, u32 length + config
    JSON, u32 parameter count, then per parameter u16 name length, name,
    u32 rows, u32 cols and rows·cols float64 values
    """
    config_bytes = model.config.model_dump_json(by_alias=True).encode("utf-8")
    names = model.store.names()
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        f.write(struct.pack("<Iq", CHECKPOINT_VERSION, model.seed))
        f.write(struct.pack("<I", len(config_bytes)))
        f.write(config_bytes)
        f.write(struct.pack("<I", len(names)))
        for name in names:
            value = model.store[name].value
            encoded = name.encode("utf-8")
            f.write(struct.pack("<H", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<II", *value.shape))
            f.write(np.ascontiguousarray(value, dtype="<f8").tobytes())


class _Reader:
    def __init__(self, data: bytes, path: PathLike):
        self.data, self.pos, self.path = data, 0, path

    def take(self, size: int) -> bytes:
        if self.pos + size > len(self.data):
            raise CheckpointError(f"{self.path}: truncated checkpoint at byte {self.pos}")
        chunk = self.data[self.pos:self.pos + size]
        self.pos += size
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def read_checkpoint(path: PathLike) -> Checkpoint:
    """
    Raises:
        CheckpointError: bad magic, unknown version, truncated data or an invalid config block
    """
    try:
        data = Path(path).read_bytes()
    except FileNotFoundError as e:
        raise CheckpointError(f"checkpoint not found: {path}") from e
    reader = _Reader(data, path)
    if reader.take(len(CHECKPOINT_MAGIC)) != CHECKPOINT_MAGIC:
        raise CheckpointError(f"{path}: not a checkpoint file")
    version, seed = reader.unpack("<Iq")
    if version != CHECKPOINT_VERSION:
        raise CheckpointError(f"{path}: checkpoint version {version}, expected {CHECKPOINT_VERSION}")
    (config_len,) = reader.unpack("<I")
    try:
        config = TrainConfig.model_validate_json(reader.take(config_len))
    except ValidationError as e:
        raise CheckpointError(f"{path}: config block is invalid: {e.error_count()} error(s)") from e

    (count,) = reader.unpack("<I")
    params = {}
    for _ in range(count):
        (name_len,) = reader.unpack("<H")
        name = reader.take(name_len).decode("utf-8")
        rows, cols = reader.unpack("<II")
        params[name] = np.frombuffer(reader.take(8 * rows * cols), dtype="<f8").reshape(rows, cols).astype(np.float64)
    if reader.pos != len(data):
        raise CheckpointError(f"{path}: {len(data) - reader.pos} trailing byte(s) after the last parameter")
    return Checkpoint(version=version, seed=seed, config=config, params=params)


def restore_model(checkpoint: Checkpoint, net: RoadNetwork) -> HiFiNet:
    """
    Rebuild the model for net and load every stored parameter

    Raises:
        CheckpointError: parameter names or shapes do not match the network/config
    """
    try:
        model = HiFiNet(checkpoint.config, net, checkpoint.seed)
    except ConfigError as e:
        raise CheckpointError(f"checkpoint does not fit this network: {e}") from e
    expected, stored = set(model.store.names()), set(checkpoint.params)
    if expected != stored:
        missing, extra = sorted(expected - stored), sorted(stored - expected)
        raise CheckpointError(f"checkpoint parameters differ: missing {missing}, unexpected {extra}")
    for name, value in checkpoint.params.items():
        node = model.store[name]
        if node.shape != value.shape:
            raise CheckpointError(f"parameter '{name}' is {value.shape} in the checkpoint, model expects {node.shape}")
        node.assign(value)
    return model


def load_model(path: PathLike, net: RoadNetwork) -> HiFiNet:
    return restore_model(read_checkpoint(path), net)


# ---------------------------------------------------------------------------
# Run directory
# ---------------------------------------------------------------------------

def write_run(directory: PathLike, model: HiFiNet, trace: LossTrace, summary: dict) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_checkpoint(model, directory / CHECKPOINT_FILE)
    trace.to_csv(directory / TRACE_FILE)
    write_json(model.config.model_dump(mode="json", by_alias=True), directory / CONFIG_FILE)
    write_json(summary, directory / SUMMARY_FILE)
    return directory


def read_summary(directory: PathLike) -> dict:
    return read_json(Path(directory) / SUMMARY_FILE)


# ---------------------------------------------------------------------------
# Embeddings CSV
# ---------------------------------------------------------------------------

def write_embeddings(emb: np.ndarray, path: PathLike) -> None:
    """Header segment_id,e0..e{d-1}; values with 17 significant digits"""
    emb = np.asarray(emb, dtype=np.float64)
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["segment_id"] + [f"e{j}" for j in range(emb.shape[1])])
        for i, row in enumerate(emb):
            writer.writerow([i] + [format(v, ".17g") for v in row])


def read_embeddings(path: PathLike) -> Tuple[np.ndarray, np.ndarray]:
    """
    Returns:
        (segment ids, N x d matrix)

    Raises:
        NetworkLoadError: missing file, bad header or a malformed row
    """
    try:
        with open(path, "r", newline="", encoding="utf-8") as f:
            rows = list(csv.reader(f))
    except FileNotFoundError as e:
        raise NetworkLoadError(f"embeddings file not found: {path}") from e
    if not rows or not rows[0] or rows[0][0] != "segment_id":
        raise NetworkLoadError(f"{path}: expected a header starting with segment_id")
    width = len(rows[0]) - 1
    ids, values = [], []
    for line_no, row in enumerate(rows[1:], 2):
        if len(row) != width + 1:
            raise NetworkLoadError(f"{path}: line {line_no}: expected {width + 1} fields, got {len(row)}")
        try:
            ids.append(int(row[0]))
            values.append([float(v) for v in row[1:]])
        except ValueError as e:
            raise NetworkLoadError(f"{path}: line {line_no}: {e}") from e
    return np.asarray(ids, dtype=np.int64), np.asarray(values, dtype=np.float64).reshape(len(ids), width)
