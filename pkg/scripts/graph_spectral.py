"""
Graph signal processing over the symmetrised road graph, and checks for
hard equi-partition coarsening (Laplacian identity, energy behaviour)
"""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from errors import ContractError, NumericError, ShapeError
from road_network import RoadNetwork

SYMMETRY_TOL = 1e-10
ENERGY_TOL = 1e-9

AdjacencyLike = Union[RoadNetwork, np.ndarray]


def _adjacency(net_or_adjacency: AdjacencyLike) -> np.ndarray:
    if isinstance(net_or_adjacency, RoadNetwork):
        return np.array(net_or_adjacency.adjacency, dtype=np.float64)
    adjacency = np.asarray(net_or_adjacency, dtype=np.float64)
    if adjacency.ndim != 2 or adjacency.shape[0] != adjacency.shape[1]:
        raise ShapeError(f"adjacency must be square, got shape {adjacency.shape}")
    return adjacency


def symmetrize(net_or_adjacency: AdjacencyLike) -> np.ndarray:
    adjacency = _adjacency(net_or_adjacency)
    return np.maximum(adjacency, adjacency.T)


def laplacian(net_or_adjacency: AdjacencyLike) -> np.ndarray:
    """L = D − A over the symmetrised adjacency max(A, Aᵀ)"""
    adjacency = symmetrize(net_or_adjacency)
    return np.diag(adjacency.sum(axis=1)) - adjacency


@dataclass(frozen=True)
class SpectralBasis:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray

    @property
    def n(self) -> int:
        return len(self.eigenvalues)

    def kernel_dimension(self, tol: float = 1e-8) -> int:
        return int(np.sum(np.abs(self.eigenvalues) < tol))


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Make the largest-magnitude entry of each column positive (lowest index on ties)"""
    fixed = vectors.copy()
    magnitudes = np.abs(fixed)
    for col in range(fixed.shape[1]):
        peak = magnitudes[:, col].max()
        lead = int(np.flatnonzero(magnitudes[:, col] >= peak - 1e-12)[0])
        if fixed[lead, col] < 0:
            fixed[:, col] = -fixed[:, col]
    return fixed


def eigendecompose(lap: np.ndarray) -> SpectralBasis:
    """
    Full symmetric eigendecomposition with ascending eigenvalues and a
    deterministic eigenvector sign.

    Raises:
        ContractError: lap is not symmetric within 1e-10
        NumericError: the solver failed to converge
    """
    lap = np.asarray(lap, dtype=np.float64)
    if lap.ndim != 2 or lap.shape[0] != lap.shape[1]:
        raise ShapeError(f"eigendecompose needs a square matrix, got shape {lap.shape}")
    if lap.size and np.abs(lap - lap.T).max() > SYMMETRY_TOL:
        raise ContractError("eigendecompose needs a symmetric matrix")
    try:
        values, vectors = np.linalg.eigh(lap)
    except np.linalg.LinAlgError as e:
        raise NumericError(f"eigendecomposition did not converge: {e}") from e
    order = np.argsort(values, kind="stable")
    return SpectralBasis(eigenvalues=values[order], eigenvectors=_fix_signs(vectors[:, order]))


def _signal(basis_n: int, x, what: str) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    if x.shape[0] != basis_n:
        raise ShapeError(f"{what}: signal has length {x.shape[0]}, graph has {basis_n} nodes")
    return x


def gft(basis: SpectralBasis, x) -> np.ndarray:
    return basis.eigenvectors.T @ _signal(basis.n, x, "gft")


def igft(basis: SpectralBasis, coefficients) -> np.ndarray:
    return basis.eigenvectors @ _signal(basis.n, coefficients, "igft")


def dirichlet_energy(lap: np.ndarray, x) -> float:
    """xᵀLx; equals the sum of squared differences across edges"""
    x = _signal(lap.shape[0], x, "dirichlet_energy")
    return float(x @ lap @ x)


def frequency_split(basis: SpectralBasis, x, k: int) -> Tuple[np.ndarray, np.ndarray]:
    """Project onto the k lowest eigenvectors; the remainder is the high band"""
    x = _signal(basis.n, x, "frequency_split")
    if not 0 <= k <= basis.n:
        raise ContractError(f"frequency cut k={k} outside [0, {basis.n}]")
    low_basis = basis.eigenvectors[:, :k]
    x_low = low_basis @ (low_basis.T @ x)
    return x_low, x - x_low


def default_cut(n: int) -> int:
    return int(math.ceil(0.1 * n))


# ---------------------------------------------------------------------------
# Hard equi-partition coarsening
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Partition:
    clusters: Tuple[Tuple[int, ...], ...]

    def __post_init__(self):
        members = [i for cluster in self.clusters for i in cluster]
        if any(not c for c in self.clusters):
            raise ContractError("partition contains an empty cluster")
        if sorted(members) != list(range(len(members))):
            raise ContractError("clusters must be a disjoint cover of 0..n-1")

    @classmethod
    def from_labels(cls, labels: Sequence[int]) -> "Partition":
        labels = np.asarray(labels)
        return cls(tuple(tuple(np.flatnonzero(labels == c).tolist()) for c in np.unique(labels)))

    @property
    def n(self) -> int:
        return sum(len(c) for c in self.clusters)

    @property
    def n_clusters(self) -> int:
        return len(self.clusters)

    @property
    def is_equi(self) -> bool:
        return len({len(c) for c in self.clusters}) == 1

    @property
    def cluster_size(self) -> Optional[int]:
        return len(self.clusters[0]) if self.is_equi else None


def hard_assignment(p: Partition) -> np.ndarray:
    """
    N_Y x N_X assignment with 1/√m on (cluster, member) pairs.

    Raises:
        ContractError: clusters differ in size
    """
    if not p.is_equi:
        sizes = sorted({len(c) for c in p.clusters})
        raise ContractError(f"hard assignment needs an equi-partition, got cluster sizes {sizes}")
    m = p.cluster_size
    assignment = np.zeros((p.n_clusters, p.n), dtype=np.float64)
    for i, cluster in enumerate(p.clusters):
        assignment[i, list(cluster)] = 1.0 / math.sqrt(m)
    return assignment


def coarsen(adjacency_x: np.ndarray, assignment: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """A_Y = A_XY·A_X·A_XYᵀ and L_Y = D_Y − A_Y from the row sums of A_Y"""
    adjacency_x = np.asarray(adjacency_x, dtype=np.float64)
    if assignment.shape[1] != adjacency_x.shape[0] or adjacency_x.shape[0] != adjacency_x.shape[1]:
        raise ShapeError(
            f"coarsen: assignment is {assignment.shape[0]}x{assignment.shape[1]}, "
            f"adjacency is {adjacency_x.shape[0]}x{adjacency_x.shape[1]}")
    adjacency_y = assignment @ adjacency_x @ assignment.T
    return adjacency_y, np.diag(adjacency_y.sum(axis=1)) - adjacency_y


@dataclass(frozen=True)
class ProjectionCheck:
    passed: bool
    max_deviation: float


def verify_laplacian_projection(adjacency_x: AdjacencyLike, p: Partition, tol: float = 1e-9) -> ProjectionCheck:
    """Compare L_Y built from degrees of A_Y against the projection A_XY·L_X·A_XYᵀ"""
    adjacency = symmetrize(adjacency_x)
    assignment = hard_assignment(p)
    _, lap_y = coarsen(adjacency, assignment)
    projected = assignment @ laplacian(adjacency) @ assignment.T
    deviation = float(np.abs(lap_y - projected).max())
    return ProjectionCheck(passed=deviation < tol, max_deviation=deviation)


def energy_pair(adjacency_x: AdjacencyLike, p: Partition, z) -> Tuple[float, float]:
    """(E_X, E_Y) for signal z on the fine graph and z_Y = A_XY·z on the coarse one"""
    adjacency = symmetrize(adjacency_x)
    assignment = hard_assignment(p)
    _, lap_y = coarsen(adjacency, assignment)
    z = _signal(adjacency.shape[0], z, "energy_pair")
    return dirichlet_energy(laplacian(adjacency), z), dirichlet_energy(lap_y, assignment @ z)


def _ratio(e_x: float, e_y: float) -> float:
    if e_x <= 1e-12:
        return 1.0 if e_y <= 1e-12 else math.inf
    return e_y / e_x


@dataclass
class EnergyReport:
    trials: int
    per_trial: List[Tuple[float, float, float]]
    ratio_stats: Dict[str, float]
    piecewise_constant_exact: bool
    top_eigvec_contracts: bool
    constant_signal_zero: bool
    structured: Dict[str, Tuple[float, float]] = field(default_factory=dict)
    counterexamples: List[Dict[str, float]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return self.piecewise_constant_exact and self.top_eigvec_contracts and self.constant_signal_zero

    def to_dict(self) -> dict:
        """JSON form; per-trial energies are left out"""
        return {
            "trials": self.trials,
            "ratios": dict(self.ratio_stats),
            "piecewise_constant_exact": self.piecewise_constant_exact,
            "top_eigvec_contracts": self.top_eigvec_contracts,
            "constant_signal_zero": self.constant_signal_zero,
            "structured": {k: {"E_X": v[0], "E_Y": v[1]} for k, v in self.structured.items()},
            "counterexamples": list(self.counterexamples),
        }


def energy_report(adjacency_x: AdjacencyLike, p: Partition, trials: int, seed: int) -> EnergyReport:
    """
    Energy of fine signals against their coarse images.

    Asserted cases: cluster-constant signals keep their energy, the top
    eigenvector does not gain energy, and constants have none. Random unit
    signals are only recorded; any ratio E_Y/E_X above 1 is listed as a
    counterexample to the universal contraction claim.
    """
    if trials < 1:
        raise ContractError(f"energy_report needs at least one trial, got {trials}")
    adjacency = symmetrize(adjacency_x)
    n = adjacency.shape[0]
    basis = eigendecompose(laplacian(adjacency))

    per_trial = []
    counterexamples = []
    for trial in range(trials):
        rng = np.random.default_rng([seed, trial])
        z = rng.standard_normal(n)
        z /= np.linalg.norm(z)
        e_x, e_y = energy_pair(adjacency, p, z)
        ratio = _ratio(e_x, e_y)
        per_trial.append((e_x, e_y, ratio))
        if ratio > 1.0 + 1e-12:
            counterexamples.append({"trial": trial, "ratio": ratio})

    rng = np.random.default_rng([seed, trials])
    cluster_values = rng.standard_normal(p.n_clusters)
    piecewise = np.zeros(n)
    for value, cluster in zip(cluster_values, p.clusters):
        piecewise[list(cluster)] = value

    structured = {
        "piecewise_constant": energy_pair(adjacency, p, piecewise),
        "lowest_eigenvector": energy_pair(adjacency, p, basis.eigenvectors[:, 0]),
        "highest_eigenvector": energy_pair(adjacency, p, basis.eigenvectors[:, -1]),
        "constant": energy_pair(adjacency, p, np.ones(n)),
    }
    pc_x, pc_y = structured["piecewise_constant"]
    top_x, top_y = structured["highest_eigenvector"]
    const_x, const_y = structured["constant"]

    ratios = np.array([r for _, _, r in per_trial])
    finite = ratios[np.isfinite(ratios)]
    stats = {
        "min": float(finite.min()) if finite.size else math.nan,
        "median": float(np.median(finite)) if finite.size else math.nan,
        "mean": float(finite.mean()) if finite.size else math.nan,
        "max": float(finite.max()) if finite.size else math.nan,
    }
    return EnergyReport(
        trials=trials,
        per_trial=per_trial,
        ratio_stats=stats,
        piecewise_constant_exact=abs(pc_x - pc_y) <= ENERGY_TOL * max(1.0, pc_x),
        top_eigvec_contracts=top_y <= top_x + ENERGY_TOL,
        constant_signal_zero=abs(const_x) <= ENERGY_TOL and abs(const_y) <= ENERGY_TOL,
        structured=structured,
        counterexamples=counterexamples,
    )


def random_equipartitioned_graph(rng: np.random.Generator, n_min: int = 4, n_max: int = 64
                                 ) -> Tuple[np.ndarray, Partition]:
    """Random connected undirected graph with n in [n_min, n_max] and a random equi-partition"""
    m = int(rng.integers(1, 5))
    low = max(1, math.ceil(n_min / m))
    high = max(low, n_max // m)
    n = m * int(rng.integers(low, high + 1))

    adjacency = np.zeros((n, n))
    order = rng.permutation(n)
    for pos in range(1, n):
        anchor = order[rng.integers(pos)]
        adjacency[order[pos], anchor] = adjacency[anchor, order[pos]] = 1.0
    extra = np.triu(rng.random((n, n)) < rng.uniform(0.05, 0.3), k=1)
    adjacency = np.maximum(adjacency, extra | extra.T)

    shuffled = rng.permutation(n)
    clusters = tuple(tuple(sorted(shuffled[i:i + m].tolist())) for i in range(0, n, m))
    return adjacency, Partition(clusters)


def path_graph(n: int) -> np.ndarray:
    adjacency = np.zeros((n, n))
    idx = np.arange(n - 1)
    adjacency[idx, idx + 1] = adjacency[idx + 1, idx] = 1.0
    return adjacency


# ---------------------------------------------------------------------------
# Edge frequency profile of a node signal
# ---------------------------------------------------------------------------

@dataclass
class SpectralProfile:
    eigenvalues: np.ndarray
    coefficients: np.ndarray
    energy: float
    cut: int
    low_band_fraction: float
    edges: List[Tuple[int, int]]
    high_frequency: np.ndarray
    central_high_share: Optional[float] = None
    peripheral_high_share: Optional[float] = None


def classify_edges(edges: Sequence[Tuple[int, int]], x_low: np.ndarray, x_high: np.ndarray) -> np.ndarray:
    """An edge is high-frequency when its high-band magnitude beats its low-band deviation"""
    centred = np.abs(x_low - x_low.mean())
    high = np.abs(x_high)
    return np.array([high[i] + high[j] > centred[i] + centred[j] for i, j in edges], dtype=bool)


def _share(flags: np.ndarray) -> Optional[float]:
    return float(flags.mean()) if flags.size else None


def spectral_profile(net: RoadNetwork, signal, k: Optional[int] = None) -> SpectralProfile:
    """
    GFT, energy and per-edge frequency class of a signal over the network,
    plus the high-frequency edge share among central and peripheral segments
    (nearest and farthest quartile from the coordinate centroid).
    """
    lap = laplacian(net)
    basis = eigendecompose(lap)
    x = _signal(basis.n, signal, "spectral_profile")
    k = default_cut(basis.n) if k is None else k
    coefficients = gft(basis, x)
    x_low, x_high = frequency_split(basis, x, k)

    power = float(coefficients @ coefficients)
    low_fraction = float(coefficients[:k] @ coefficients[:k]) / power if power > 0 else 0.0

    edges = net.edges
    flags = classify_edges(edges, x_low, x_high)

    coords = net.coordinates()
    distance = np.linalg.norm(coords - coords.mean(axis=0), axis=1)
    near, far = np.quantile(distance, [0.25, 0.75])
    sources = np.array([i for i, _ in edges], dtype=np.int64)
    central = flags[distance[sources] <= near] if edges else np.array([], dtype=bool)
    peripheral = flags[distance[sources] >= far] if edges else np.array([], dtype=bool)

    return SpectralProfile(
        eigenvalues=basis.eigenvalues,
        coefficients=coefficients,
        energy=dirichlet_energy(lap, x),
        cut=k,
        low_band_fraction=low_fraction,
        edges=edges,
        high_frequency=flags,
        central_high_share=_share(central),
        peripheral_high_share=_share(peripheral),
    )
