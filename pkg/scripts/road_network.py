"""
Road network data model: loading/writing, synthetic generation with a planted
segment → locality → region hierarchy, trajectories and OD matrices
"""
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple, Union

import networkx as nx
import numpy as np
from pydantic import BaseModel, Field, ValidationError, field_validator

from errors import ConfigError, ContractError, NetworkLoadError

PathLike = Union[str, Path]

# generated coordinates start here (degrees); spacing per grid cell
ORIGIN_LON = 116.30
ORIGIN_LAT = 39.90
CELL_DEGREES = 0.002


@dataclass(frozen=True)
class SegmentAttr:
    id: int
    lane_count: int
    length_m: float
    lon: float
    lat: float
    label: Optional[int] = None
    flow: Optional[float] = None


@dataclass(frozen=True, eq=False)
class RoadNetwork:
    """Directed segment graph; adjacency[i, j] = 1 means s_i → s_j"""
    segments: Tuple[SegmentAttr, ...]
    adjacency: np.ndarray
    dropped_self_loops: int = 0

    def __post_init__(self):
        n = len(self.segments)
        if self.adjacency.shape != (n, n):
            raise ContractError(f"adjacency is {self.adjacency.shape}, expected ({n}, {n})")
        for position, seg in enumerate(self.segments):
            if seg.id != position:
                raise ContractError(f"segment at position {position} has id {seg.id}")
        self.adjacency.flags.writeable = False

    @property
    def n_segments(self) -> int:
        return len(self.segments)

    @property
    def edges(self) -> List[Tuple[int, int]]:
        rows, cols = np.nonzero(self.adjacency)
        return list(zip(rows.tolist(), cols.tolist()))

    def labels(self) -> Optional[np.ndarray]:
        if any(seg.label is None for seg in self.segments):
            return None
        return np.array([seg.label for seg in self.segments], dtype=np.int64)

    def flows(self) -> Optional[np.ndarray]:
        if any(seg.flow is None for seg in self.segments):
            return None
        return np.array([seg.flow for seg in self.segments], dtype=np.float64)

    def coordinates(self) -> np.ndarray:
        return np.array([[seg.lon, seg.lat] for seg in self.segments], dtype=np.float64)

    def same_structure(self, other: "RoadNetwork") -> bool:
        return self.segments == other.segments and np.array_equal(self.adjacency, other.adjacency)


@dataclass(frozen=True)
class TrajectorySet:
    trajectories: Tuple[Tuple[int, ...], ...] = ()

    def __len__(self) -> int:
        return len(self.trajectories)

    def __iter__(self):
        return iter(self.trajectories)


@dataclass(frozen=True)
class PlantedPartition:
    """Ground-truth locality and region of every generated segment"""
    locality: np.ndarray
    region: np.ndarray
    n_localities: int
    n_regions: int


# ---------------------------------------------------------------------------
# File schema
# ---------------------------------------------------------------------------

class SegmentRecord(BaseModel):
    id: int
    lanes: int = Field(ge=1)
    length_m: float = Field(gt=0)
    lon: float
    lat: float
    label: Optional[int] = None
    flow: Optional[float] = Field(default=None, ge=0)


class NetworkFile(BaseModel):
    segments: List[SegmentRecord]
    edges: List[Tuple[int, int]] = []

    @field_validator("segments")
    @classmethod
    def ids_are_positions(cls, segments):
        for position, seg in enumerate(segments):
            if seg.id != position:
                raise ValueError(f"segment at position {position} has id {seg.id}; ids must be 0-based positions")
        return segments


def _format_validation_error(err: ValidationError) -> str:
    parts = []
    for item in err.errors():
        location = ".".join(str(p) for p in item["loc"])
        parts.append(f"{location}: {item['msg']}")
    return "; ".join(parts)


def load_network(path: PathLike) -> RoadNetwork:
    """
    Load a road network JSON file

    Args:
        path: file in the {"segments": [...], "edges": [[i, j], ...]} format

    Returns:
        Validated network; self-loops dropped (counted), duplicate edges merged

    Raises:
        NetworkLoadError: malformed JSON, schema violation or out-of-range index
    """
    path = Path(path)
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f)
    except json.JSONDecodeError as e:
        raise NetworkLoadError(f"{path}: invalid JSON at line {e.lineno}, column {e.colno}: {e.msg}") from e
    except OSError as e:
        raise NetworkLoadError(f"{path}: {e}") from e

    try:
        parsed = NetworkFile.model_validate(raw)
    except ValidationError as e:
        raise NetworkLoadError(f"{path}: {_format_validation_error(e)}") from e

    n = len(parsed.segments)
    adjacency = np.zeros((n, n), dtype=np.float64)
    self_loops = 0
    for k, (src, dst) in enumerate(parsed.edges):
        for index in (src, dst):
            if not 0 <= index < n:
                raise NetworkLoadError(f"{path}: edges[{k}] references index {index}, but there are {n} segments")
        if src == dst:
            self_loops += 1
            continue
        adjacency[src, dst] = 1.0

    if self_loops:
        print(f"⚠️  Dropped {self_loops} self-loop(s) while loading {path.name}")

    segments = tuple(
        SegmentAttr(id=s.id, lane_count=s.lanes, length_m=s.length_m, lon=s.lon, lat=s.lat,
                    label=s.label, flow=s.flow)
        for s in parsed.segments
    )
    return RoadNetwork(segments=segments, adjacency=adjacency, dropped_self_loops=self_loops)


def write_network(net: RoadNetwork, path: PathLike) -> None:
    payload = {
        "segments": [
            {"id": s.id, "lanes": s.lane_count, "length_m": s.length_m, "lon": s.lon, "lat": s.lat,
             "label": s.label, "flow": s.flow}
            for s in net.segments
        ],
        "edges": [[i, j] for i, j in net.edges],
    }
    with open(path, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=1)


def load_trajectories(path: PathLike, n_segments: Optional[int] = None) -> TrajectorySet:
    """Read a JSON-lines file, one array of segment ids per line"""
    path = Path(path)
    trajectories = []
    with open(path, "r", encoding="utf-8") as f:
        for line_no, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                ids = json.loads(line)
            except json.JSONDecodeError as e:
                raise NetworkLoadError(f"{path}: line {line_no}: invalid JSON: {e.msg}") from e
            if not isinstance(ids, list) or not all(isinstance(i, int) for i in ids):
                raise NetworkLoadError(f"{path}: line {line_no}: expected an array of integer segment ids")
            if len(ids) < 2:
                raise NetworkLoadError(f"{path}: line {line_no}: trajectory needs at least 2 segments")
            if n_segments is not None and any(not 0 <= i < n_segments for i in ids):
                raise NetworkLoadError(f"{path}: line {line_no}: segment id outside [0, {n_segments})")
            trajectories.append(tuple(ids))
    return TrajectorySet(tuple(trajectories))


def write_trajectories(trajs: TrajectorySet, path: PathLike) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for traj in trajs:
            f.write(json.dumps(list(traj)) + "\n")


def is_weakly_connected(net: RoadNetwork) -> bool:
    graph = nx.DiGraph()
    graph.add_nodes_from(range(net.n_segments))
    graph.add_edges_from(net.edges)
    return net.n_segments > 0 and nx.is_weakly_connected(graph)


# ---------------------------------------------------------------------------
# Synthetic generator
# ---------------------------------------------------------------------------

class GeneratorConfig(BaseModel):
    """Synthetic city: a grid of segments split into regions and localities"""
    width: int = Field(default=10, ge=1)
    height: int = Field(default=10, ge=1)
    regions: int = Field(default=4, ge=1)
    localities_per_region: int = Field(default=1, ge=1)
    trajectories: int = Field(default=200, ge=0)
    min_length: int = Field(default=4, ge=2)
    max_length: int = Field(default=12, ge=2)
    p_stay: float = Field(default=0.8, ge=0, le=1)
    p_oneway: float = Field(default=0.15, ge=0, le=1)

    model_config = {"extra": "forbid"}


GENERATOR_PRESETS: Dict[str, GeneratorConfig] = {
    "grid2": GeneratorConfig(width=2, height=2, regions=1, localities_per_region=1, trajectories=10),
    "grid10": GeneratorConfig(width=10, height=10, regions=4, localities_per_region=3, trajectories=300),
    "grid20": GeneratorConfig(width=20, height=20, regions=9, localities_per_region=4, trajectories=1000),
}


def _block_factors(count: int) -> Tuple[int, int]:
    """Split count into rows x cols with rows ≤ cols and rows as close to √count as possible"""
    rows = int(math.isqrt(count))
    while count % rows:
        rows -= 1
    return rows, count // rows


def _block_index(x: np.ndarray, y: np.ndarray, width: int, height: int, count: int) -> np.ndarray:
    block_rows, block_cols = _block_factors(count)
    return (y * block_rows // height) * block_cols + (x * block_cols // width)


def _validate_generator(cfg: GeneratorConfig) -> None:
    n = cfg.width * cfg.height
    if cfg.regions > n:
        raise ConfigError(f"{cfg.regions} regions requested for only {n} segments")
    if cfg.regions * cfg.localities_per_region > n:
        raise ConfigError(
            f"{cfg.regions * cfg.localities_per_region} localities requested for only {n} segments")
    if cfg.min_length > cfg.max_length:
        raise ConfigError(f"min_length {cfg.min_length} exceeds max_length {cfg.max_length}")


def generate_synthetic(cfg: GeneratorConfig, seed: int
                       ) -> Tuple[RoadNetwork, TrajectorySet, np.ndarray, PlantedPartition]:
    """
    Build a grid city with a planted hierarchy.

    Each grid cell is one segment, linked to its 4-neighbours in both
    directions except for a random set of one-way links. Central segments get
    more lanes and a noisier flow signal; the flow is a smooth field plus noise
    whose spread grows toward the centre.

    Returns:
        (network, trajectories, region labels, planted partition)

    Raises:
        ConfigError: the grid cannot host the requested regions/localities
    """
    _validate_generator(cfg)
    rng = np.random.default_rng(seed)
    width, height = cfg.width, cfg.height
    n = width * height
    xs = np.arange(n) % width
    ys = np.arange(n) // width

    region = _block_index(xs, ys, width, height, cfg.regions)
    locality = np.zeros(n, dtype=np.int64)
    for r in range(cfg.regions):
        members = np.flatnonzero(region == r)
        if len(members) < cfg.localities_per_region:
            raise ConfigError(
                f"region {r} has {len(members)} segments, fewer than {cfg.localities_per_region} localities")
        rx, ry = xs[members], ys[members]
        local_x, local_y = rx - rx.min(), ry - ry.min()
        sub = _block_index(local_x, local_y, int(local_x.max()) + 1, int(local_y.max()) + 1,
                           cfg.localities_per_region)
        locality[members] = r * cfg.localities_per_region + sub

    adjacency = np.zeros((n, n), dtype=np.float64)
    for i in range(n):
        for dx, dy in ((1, 0), (0, 1)):
            nx_, ny_ = xs[i] + dx, ys[i] + dy
            if nx_ >= width or ny_ >= height:
                continue
            j = ny_ * width + nx_
            if rng.random() < cfg.p_oneway:
                if rng.random() < 0.5:
                    adjacency[i, j] = 1.0
                else:
                    adjacency[j, i] = 1.0
            else:
                adjacency[i, j] = adjacency[j, i] = 1.0

    # normalised position in [-1, 1] and centrality in [0, 1]
    u = (2.0 * xs + 1.0) / width - 1.0
    v = (2.0 * ys + 1.0) / height - 1.0
    radius = np.sqrt(u ** 2 + v ** 2) / math.sqrt(2.0)
    centrality = 1.0 - radius

    lanes = 1 + np.floor(3.0 * centrality + rng.random(n) * 0.999).astype(np.int64)
    lengths = 100.0 * rng.uniform(0.6, 1.4, size=n)
    lons = ORIGIN_LON + (xs + rng.uniform(-0.3, 0.3, size=n)) * CELL_DEGREES
    lats = ORIGIN_LAT + (ys + rng.uniform(-0.3, 0.3, size=n)) * CELL_DEGREES

    smooth = 100.0 + 10.0 * np.cos(0.5 * math.pi * u) * np.cos(0.5 * math.pi * v)
    noise_scale = 2.0 + 40.0 * centrality ** 2
    flows = np.maximum(smooth + noise_scale * rng.standard_normal(n), 0.0)

    segments = tuple(
        SegmentAttr(id=i, lane_count=int(lanes[i]), length_m=float(lengths[i]), lon=float(lons[i]),
                    lat=float(lats[i]), label=int(region[i]), flow=float(flows[i]))
        for i in range(n)
    )
    net = RoadNetwork(segments=segments, adjacency=adjacency)
    trajs = _random_walks(adjacency, region, cfg, rng)
    planted = PlantedPartition(locality=locality, region=region.astype(np.int64),
                               n_localities=cfg.regions * cfg.localities_per_region, n_regions=cfg.regions)
    return net, trajs, region.astype(np.int64), planted


def _random_walks(adjacency: np.ndarray, region: np.ndarray, cfg: GeneratorConfig,
                  rng: np.random.Generator) -> TrajectorySet:
    out_neighbors = [np.flatnonzero(row) for row in adjacency]
    starts = np.array([i for i, nbrs in enumerate(out_neighbors) if len(nbrs)], dtype=np.int64)
    if cfg.trajectories and not len(starts):
        raise ConfigError("network has no edges to walk on")

    trajectories = []
    while len(trajectories) < cfg.trajectories:
        target = int(rng.integers(cfg.min_length, cfg.max_length + 1))
        current = int(starts[rng.integers(len(starts))])
        walk = [current]
        while len(walk) < target:
            nbrs = out_neighbors[current]
            if not len(nbrs):
                break
            same = nbrs[region[nbrs] == region[current]]
            other = nbrs[region[nbrs] != region[current]]
            if len(same) and (not len(other) or rng.random() < cfg.p_stay):
                pool = same
            else:
                pool = other
            current = int(pool[rng.integers(len(pool))])
            walk.append(current)
        if len(walk) >= 2:
            trajectories.append(tuple(walk))
    return TrajectorySet(tuple(trajectories))


# ---------------------------------------------------------------------------
# Trajectory-derived structures
# ---------------------------------------------------------------------------

def build_od_matrix(trajs: TrajectorySet, n: int) -> np.ndarray:
    """
    Row-stochastic origin–destination matrix

    Args:
        trajs: trajectories (first segment = origin, last = destination)
        n: number of segments

    Returns:
        n x n matrix; each row sums to 1, or to 0 when no trip starts there
    """
    od = np.zeros((n, n), dtype=np.float64)
    for k, traj in enumerate(trajs):
        if any(not 0 <= s < n for s in traj):
            raise ContractError(f"trajectory {k} references a segment outside [0, {n})")
        od[traj[0], traj[-1]] += 1.0
    totals = od.sum(axis=1, keepdims=True)
    return np.divide(od, totals, out=np.zeros_like(od), where=totals > 0)


def split_indices(n: int, seed: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Shuffled 7:1:2 split of range(n): sizes ⌊0.7n⌋, ⌊0.1n⌋, remainder"""
    order = np.random.default_rng(seed).permutation(n)
    n_train = (7 * n) // 10
    n_val = n // 10
    return order[:n_train], order[n_train:n_train + n_val], order[n_train + n_val:]


def split_trajectories(trajs: TrajectorySet, seed: int) -> Tuple[TrajectorySet, TrajectorySet, TrajectorySet]:
    if len(trajs) < 10:
        raise ContractError(f"need at least 10 trajectories to split, got {len(trajs)}")
    train, val, test = split_indices(len(trajs), seed)
    pick = lambda idx: TrajectorySet(tuple(trajs.trajectories[i] for i in idx))
    return pick(train), pick(val), pick(test)
