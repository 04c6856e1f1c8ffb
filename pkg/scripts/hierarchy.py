"""
Segment → locality → region hierarchy and top-down low-frequency propagation

Parent levels are kept as an ordered list (bottom-up) so that reduced
hierarchies (segments straight to regions, localities only, none at all)
run through the same code.
"""
import math
from dataclasses import dataclass, field
from typing import List, Mapping, Optional

import numpy as np

import tensor_core as tc
from errors import ContractError, ShapeError
from road_network import RoadNetwork
from tensor_core import DiffNode, NodeLike

LANE_BINS = 8
DEFAULT_LENGTH_BINS = 8
DEFAULT_GEO_GRID = 4
DEFAULT_TOP_K = 8


# ---------------------------------------------------------------------------
# Contextual embedding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AttributeIndex:
    """Table row used by every segment for each embedded attribute"""
    ids: np.ndarray
    lane: np.ndarray
    length: np.ndarray
    geo: np.ndarray
    length_edges: np.ndarray


def length_bin_edges(lengths: np.ndarray, n_bins: int) -> np.ndarray:
    """Interior quantile edges, strictly increasing (duplicates collapse)"""
    if n_bins <= 1 or len(lengths) == 0:
        return np.zeros(0)
    return np.unique(np.quantile(lengths, np.linspace(0.0, 1.0, n_bins + 1)[1:-1]))


def _grid_cell(values: np.ndarray, grid: int) -> np.ndarray:
    lo, hi = values.min(), values.max()
    if hi <= lo:
        return np.zeros(len(values), dtype=np.int64)
    return np.clip(np.floor((values - lo) / (hi - lo) * grid).astype(np.int64), 0, grid - 1)


def attribute_index(net: RoadNetwork, n_length_bins: int = DEFAULT_LENGTH_BINS,
                    geo_grid: int = DEFAULT_GEO_GRID) -> AttributeIndex:
    lanes = np.array([s.lane_count for s in net.segments], dtype=np.int64)
    lengths = np.array([s.length_m for s in net.segments], dtype=np.float64)
    coords = net.coordinates()

    edges = length_bin_edges(lengths, n_length_bins)
    length_bin = np.clip(np.searchsorted(edges, lengths, side="right"), 0, n_length_bins - 1)
    geo = _grid_cell(coords[:, 1], geo_grid) * geo_grid + _grid_cell(coords[:, 0], geo_grid)
    return AttributeIndex(
        ids=np.arange(net.n_segments, dtype=np.int64),
        lane=np.clip(lanes, 1, LANE_BINS) - 1,
        length=length_bin.astype(np.int64),
        geo=geo,
        length_edges=edges,
    )


@dataclass
class EmbeddingTables:
    id_table: DiffNode
    lane_table: DiffNode
    length_table: DiffNode
    geo_table: DiffNode

    @property
    def width(self) -> int:
        return self.id_table.cols + self.lane_table.cols + self.length_table.cols + self.geo_table.cols


def contextual_embed(index: AttributeIndex, tables: EmbeddingTables) -> DiffNode:
    """V_S: per-segment concatenation of id, lane, length and location embeddings"""
    if tables.id_table.rows != len(index.ids):
        raise ShapeError(f"id table has {tables.id_table.rows} rows for {len(index.ids)} segments")
    return tc.concat_cols([
        tc.take_rows(tables.id_table, index.ids),
        tc.take_rows(tables.lane_table, np.minimum(index.lane, tables.lane_table.rows - 1)),
        tc.take_rows(tables.length_table, np.minimum(index.length, tables.length_table.rows - 1)),
        tc.take_rows(tables.geo_table, np.minimum(index.geo, tables.geo_table.rows - 1)),
    ])


@dataclass
class FfnParams:
    w1: DiffNode
    b1: DiffNode
    w2: DiffNode
    b2: DiffNode


def feed_forward(x: NodeLike, ffn: FfnParams) -> DiffNode:
    return tc.matmul(tc.relu(tc.matmul(x, ffn.w1) + ffn.b1), ffn.w2) + ffn.b2


def initial_features(v_s: NodeLike, ffn: FfnParams) -> DiffNode:
    """H_S = W₂·relu(V_S·W₁ + b₁) + b₂"""
    v_s = tc.lift(v_s)
    if v_s.cols != ffn.w1.rows:
        raise ShapeError(f"initial_features: V_S has {v_s.cols} columns, W1 expects {ffn.w1.rows}")
    return feed_forward(v_s, ffn)


# ---------------------------------------------------------------------------
# Soft assignment and coarsening
# ---------------------------------------------------------------------------

def soft_assignment(h_child: NodeLike, h_parent_init: NodeLike, w_child: NodeLike, w_parent: NodeLike) -> DiffNode:
    """
    Cross-attention assignment of children to parents.

    Returns:
        n_child x n_parent row-stochastic matrix; entry [i, j] is Pr(parent j | child i)
    """
    queries = tc.matmul(h_child, w_child)
    keys = tc.matmul(h_parent_init, w_parent)
    if queries.cols != keys.cols:
        raise ShapeError(f"soft_assignment: projected widths {queries.cols} and {keys.cols} differ")
    logits = tc.matmul(queries, tc.transpose(keys)) * (1.0 / math.sqrt(queries.cols))
    return tc.softmax_rows(logits)


def aggregate_parent(assignment: NodeLike, h_child: NodeLike, h_parent_init: NodeLike) -> DiffNode:
    """H_parent = Aᵀ·H_child + H_parent_init"""
    return tc.matmul(tc.transpose(assignment), h_child) + h_parent_init


def coarsen_adjacency(assignment: NodeLike, adjacency_child: NodeLike) -> DiffNode:
    """A_parent = Aᵀ·A_child·A"""
    assignment = tc.lift(assignment)
    return tc.matmul(tc.matmul(tc.transpose(assignment), adjacency_child), assignment)


# ---------------------------------------------------------------------------
# Graph attention
# ---------------------------------------------------------------------------

@dataclass
class GatParams:
    w: DiffNode
    attn: DiffNode
    leaky_slope: float = tc.GAT_LEAKY_SLOPE

    def __post_init__(self):
        if not 0.0 < self.leaky_slope < 1.0:
            raise ContractError(f"leaky slope must lie in (0, 1), got {self.leaky_slope}")
        if self.attn.shape != (2 * self.w.cols, 1):
            raise ShapeError(f"attention vector is {self.attn.shape}, expected ({2 * self.w.cols}, 1)")


def segment_neighbourhood(adjacency: np.ndarray) -> np.ndarray:
    """mask[i, j] is True when j → i is an edge, or j = i"""
    adjacency = np.asarray(adjacency)
    return (adjacency.T > 0) | np.eye(adjacency.shape[0], dtype=bool)


def topk_neighbourhood(weights: np.ndarray, k: int = DEFAULT_TOP_K) -> np.ndarray:
    """The k heaviest entries of each row plus the diagonal"""
    weights = np.asarray(weights)
    n = weights.shape[0]
    mask = np.eye(n, dtype=bool)
    keep = min(k, n)
    if keep > 0:
        order = np.argsort(-weights, axis=1, kind="stable")[:, :keep]
        np.put_along_axis(mask, order, True, axis=1)
    return mask


def gat_layer(h: NodeLike, neighbourhood: np.ndarray, params: GatParams) -> DiffNode:
    """
    Single-head graph attention.

    e_ij = leaky_relu(attnᵀ·[W·h_i ‖ W·h_j]), softmax over j ∈ N(i),
    h′_i = elu(Σ_j α_ij·W·h_j)

    Raises:
        ContractError: some node has an empty neighbourhood
    """
    projected = tc.matmul(h, params.w)
    d = projected.cols
    score_self = tc.matmul(projected, tc.slice_rows(params.attn, 0, d))
    score_other = tc.matmul(projected, tc.slice_rows(params.attn, d, 2 * d))
    logits = tc.leaky_relu(score_self + tc.transpose(score_other), params.leaky_slope)
    if np.asarray(neighbourhood).shape != logits.shape:
        raise ShapeError(f"neighbourhood mask is {np.shape(neighbourhood)}, graph has {logits.rows} nodes")
    if not np.asarray(neighbourhood).any(axis=1).all():
        raise ContractError("every node needs a non-empty neighbourhood")
    weights = tc.softmax_rows(logits, mask=neighbourhood)
    return tc.elu(tc.matmul(weights, projected))


# ---------------------------------------------------------------------------
# Hierarchy construction and low-frequency propagation
# ---------------------------------------------------------------------------

@dataclass
class LevelParams:
    name: str
    init: DiffNode
    w_child: DiffNode
    w_parent: DiffNode


@dataclass
class HierarchyLevel:
    name: str
    assignment: DiffNode
    features: DiffNode
    adjacency: DiffNode


@dataclass
class ForwardState:
    """Every intermediate of one forward pass; absent levels read as None"""
    A_S: np.ndarray
    V_S: Optional[DiffNode] = None
    H_S: Optional[DiffNode] = None
    levels: List[HierarchyLevel] = field(default_factory=list)
    H_S_low: Optional[DiffNode] = None
    H_S_high: Optional[DiffNode] = None
    H_low_updated: Optional[DiffNode] = None
    H_high_updated: Optional[DiffNode] = None
    H_hat: Optional[DiffNode] = None
    attention: List[DiffNode] = field(default_factory=list)

    def level(self, name: str) -> Optional[HierarchyLevel]:
        return next((lvl for lvl in self.levels if lvl.name == name), None)

    @property
    def A_SL(self) -> Optional[DiffNode]:
        locality = self.level("locality")
        return locality.assignment if locality else None

    @property
    def H_L(self) -> Optional[DiffNode]:
        locality = self.level("locality")
        return locality.features if locality else None

    @property
    def A_L(self) -> Optional[DiffNode]:
        locality = self.level("locality")
        return locality.adjacency if locality else None

    @property
    def A_LR(self) -> Optional[DiffNode]:
        region = self.level("region")
        return region.assignment if region and self.level("locality") else None

    @property
    def H_R(self) -> Optional[DiffNode]:
        region = self.level("region")
        return region.features if region else None

    @property
    def A_R(self) -> Optional[DiffNode]:
        region = self.level("region")
        return region.adjacency if region else None

    def child_parent_pairs(self):
        """(child features, parent features, assignment) per level, bottom-up"""
        child = self.H_S
        for lvl in self.levels:
            yield child, lvl.features, lvl.assignment
            child = lvl.features


def build_hierarchy(h_s: DiffNode, adjacency: np.ndarray, level_params: List[LevelParams]) -> List[HierarchyLevel]:
    levels = []
    child_h: DiffNode = h_s
    child_adj: NodeLike = adjacency
    for params in level_params:
        assignment = soft_assignment(child_h, params.init, params.w_child, params.w_parent)
        features = aggregate_parent(assignment, child_h, params.init)
        coarse = coarsen_adjacency(assignment, child_adj)
        levels.append(HierarchyLevel(params.name, assignment, features, coarse))
        child_h, child_adj = features, coarse
    return levels


def propagate_low_frequency(state: ForwardState, gats: Mapping[str, GatParams],
                            k_neighbors: int = DEFAULT_TOP_K) -> DiffNode:
    """
    Top-down refinement: GAT on the coarsest level, then broadcast through each
    assignment and refine with that level's GAT, ending on the segment graph.
    Stores and returns H_S_low.

    Args:
        state: forward state holding H_S, A_S and the built levels
        gats: GAT parameters by level name ("segment", "locality", "region")
        k_neighbors: neighbourhood size on the dense coarse graphs
    """
    if state.H_S is None:
        raise ContractError("propagate_low_frequency needs H_S in the forward state")
    missing = [name for name in ["segment"] + [lvl.name for lvl in state.levels] if name not in gats]
    if missing:
        raise ContractError(f"no GAT parameters for level(s) {missing}")

    segment_mask = segment_neighbourhood(state.A_S)
    if not state.levels:
        state.H_S_low = gat_layer(state.H_S, segment_mask, gats["segment"])
        return state.H_S_low

    top = state.levels[-1]
    refined = gat_layer(top.features, topk_neighbourhood(top.adjacency.value, k_neighbors), gats[top.name])
    for position in range(len(state.levels) - 2, -1, -1):
        lvl = state.levels[position]
        broadcast = tc.matmul(state.levels[position + 1].assignment, refined)
        refined = gat_layer(broadcast, topk_neighbourhood(lvl.adjacency.value, k_neighbors), gats[lvl.name])
    broadcast = tc.matmul(state.levels[0].assignment, refined)
    state.H_S_low = gat_layer(broadcast, segment_mask, gats["segment"])
    return state.H_S_low
