"""
Loss terms, Adam and the deterministic full-batch training loop
"""
import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

import tensor_core as tc
from errors import ConfigError, ContractError, DivergenceError, NumericError, ShapeError
from hierarchy import ForwardState
from hifinet_model import HiFiNet, LossWeights, TrainConfig
from road_network import RoadNetwork, TrajectorySet, build_od_matrix, split_trajectories
from tensor_core import DiffNode, NodeLike, ParamStore

COSINE_EPS = 1e-12
TRACE_COLUMNS = ("epoch", "align", "rec", "sem", "ent", "total")


# ---------------------------------------------------------------------------
# Loss terms
# ---------------------------------------------------------------------------

def _zero() -> DiffNode:
    return tc.constant([[0.0]])


def alignment_term(h_child: NodeLike, h_parent: NodeLike, assignment: NodeLike, tau: float) -> DiffNode:
    """
    InfoNCE between each child and its most likely parent, cosine similarity
    over all parents at temperature tau. The parent choice is not differentiated.
    """
    h_child, h_parent, assignment = tc.lift(h_child), tc.lift(h_parent), tc.lift(assignment)
    if assignment.shape != (h_child.rows, h_parent.rows):
        raise ShapeError(
            f"alignment: assignment is {assignment.rows}x{assignment.cols}, "
            f"expected {h_child.rows}x{h_parent.rows}")
    if tau <= 0:
        raise ConfigError(f"temperature must be positive, got {tau}")
    parent = np.argmax(assignment.value, axis=1)
    positive = np.zeros(assignment.shape)
    positive[np.arange(h_child.rows), parent] = 1.0

    similarity = tc.matmul(tc.l2_normalize_rows(h_child, COSINE_EPS),
                           tc.transpose(tc.l2_normalize_rows(h_parent, COSINE_EPS)))
    log_prob = tc.log_softmax_rows(similarity * (1.0 / tau))
    return -tc.sum_all(tc.mul(log_prob, positive)) * (1.0 / h_child.rows)


def hierarchy_alignment(pairs: Iterable[Tuple[DiffNode, DiffNode, DiffNode]], tau: float) -> DiffNode:
    """Average alignment over (child, parent, assignment) levels; 0 without levels"""
    terms = [alignment_term(child, parent, assignment, tau) for child, parent, assignment in pairs]
    if not terms:
        return _zero()
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return total * (1.0 / len(terms))


def alignment_loss(h_s: NodeLike, h_l: Optional[NodeLike], a_sl: Optional[NodeLike],
                   h_r: Optional[NodeLike], a_lr: Optional[NodeLike], tau: float) -> DiffNode:
    """(L_SL + L_LR) / 2 for the segment→locality and locality→region levels"""
    pairs = []
    if h_l is not None and a_sl is not None:
        pairs.append((h_s, h_l, a_sl))
        if h_r is not None and a_lr is not None:
            pairs.append((h_l, h_r, a_lr))
    return hierarchy_alignment(pairs, tau)


def reconstruction_loss(h_hat: NodeLike, h_s: NodeLike) -> DiffNode:
    """Mean squared ℓ2 distance between matching rows"""
    h_hat, h_s = tc.lift(h_hat), tc.lift(h_s)
    if h_hat.shape != h_s.shape:
        raise ShapeError(f"reconstruction: left operand is {h_hat.rows}x{h_hat.cols}, right operand is {h_s.rows}x{h_s.cols}")
    return tc.sum_all(tc.square(h_hat - h_s)) * (1.0 / h_s.rows)


def semantic_loss(h_hat: NodeLike, adjacency: np.ndarray, od: np.ndarray, lam: float,
                  gram: str = "normalized", rows: Optional[Sequence[int]] = None) -> DiffNode:
    """
    ‖H̄H̄ᵀ − (λ·A_S + (1−λ)·O_S)‖²_F / N², with H̄ the row-normalised Ĥ
    (or Ĥ itself for the raw Gram form).

    Args:
        rows: optional subset of rows; the error is then averaged over those rows only
    """
    h_hat = tc.lift(h_hat)
    n = h_hat.rows
    adjacency, od = np.asarray(adjacency, dtype=np.float64), np.asarray(od, dtype=np.float64)
    if adjacency.shape != (n, n) or od.shape != (n, n):
        raise ShapeError(f"semantic: embeddings have {n} rows, A_S is {adjacency.shape}, O_S is {od.shape}")
    if not 0.0 <= lam <= 1.0:
        raise ConfigError(f"lambda must lie in [0, 1], got {lam}")
    if gram not in ("normalized", "raw"):
        raise ConfigError(f"unknown semantic_gram '{gram}'")

    features = tc.l2_normalize_rows(h_hat, COSINE_EPS) if gram == "normalized" else h_hat
    target = lam * adjacency + (1.0 - lam) * od
    if rows is None:
        left, denominator = features, float(n * n)
    else:
        rows = np.asarray(rows, dtype=np.int64)
        left, target = tc.take_rows(features, rows), target[rows]
        denominator = float(len(rows) * n)
    gram_matrix = tc.matmul(left, tc.transpose(features))
    return tc.sum_all(tc.square(gram_matrix - target)) * (1.0 / denominator)


def assignment_entropy(assignment: NodeLike) -> DiffNode:
    """Mean row entropy, with 0·log 0 = 0"""
    assignment = tc.lift(assignment)
    return -tc.sum_all(tc.xlogx(assignment)) * (1.0 / assignment.rows)


def entropy_loss(*assignments: Optional[NodeLike]) -> DiffNode:
    """Average of the mean row entropies of the given assignment matrices"""
    present = [a for a in assignments if a is not None]
    if not present:
        return _zero()
    total = assignment_entropy(present[0])
    for a in present[1:]:
        total = total + assignment_entropy(a)
    return total * (1.0 / len(present))


@dataclass
class LossComponents:
    align: DiffNode
    rec: DiffNode
    sem: DiffNode
    ent: DiffNode

    def values(self) -> Dict[str, float]:
        return {"align": self.align.item(), "rec": self.rec.item(), "sem": self.sem.item(), "ent": self.ent.item()}


def total_loss(components: LossComponents, weights: LossWeights) -> DiffNode:
    """
    γ₁·L_align + γ₂·L_rec + γ₃·L_sem + γ₄·L_ent

    Raises:
        ConfigError: a weight is negative
    """
    gammas = (weights.gamma1, weights.gamma2, weights.gamma3, weights.gamma4)
    if any(g < 0 for g in gammas):
        raise ConfigError(f"loss weights must be non-negative, got {gammas}")
    terms = (components.align, components.rec, components.sem, components.ent)
    total = _zero()
    for gamma, term in zip(gammas, terms):
        total = total + term * float(gamma)
    return total


def compute_losses(state: ForwardState, od: np.ndarray, config: TrainConfig,
                   semantic_rows: Optional[Sequence[int]] = None) -> LossComponents:
    w = config.weights
    return LossComponents(
        align=hierarchy_alignment(state.child_parent_pairs(), w.tau),
        rec=reconstruction_loss(state.H_hat, state.H_S),
        sem=semantic_loss(state.H_hat, state.A_S, od, w.lambda_, config.semantic_gram, semantic_rows),
        ent=entropy_loss(*(lvl.assignment for lvl in state.levels)),
    )


# ---------------------------------------------------------------------------
# Optimiser
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    step: int = 0


def adam_step(params: ParamStore, state: AdamState, lr: float = 1e-3, beta1: float = 0.9,
              beta2: float = 0.999, eps: float = 1e-8) -> None:
    """
    One bias-corrected Adam update from the gradients held by the parameters.

    Raises:
        NumericError: a gradient contains NaN or Inf (names the parameter)
    """
    for name, node in params.items():
        if not np.all(np.isfinite(node.grad)):
            raise NumericError(f"non-finite gradient in parameter '{name}'")

    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for name, node in params.items():
        grad = node.grad
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(grad)
            state.v[name] = np.zeros_like(grad)
        v = state.v[name]
        if m.shape != grad.shape:
            raise ShapeError(f"optimiser moments for '{name}' are {m.shape}, gradient is {grad.shape}")
        m *= beta1
        m += (1.0 - beta1) * grad
        v *= beta2
        v += (1.0 - beta2) * grad * grad
        update = lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
        node.assign(node.value - update)


# ---------------------------------------------------------------------------
# Loss trace
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LossRecord:
    epoch: int
    align: float
    rec: float
    sem: float
    ent: float
    total: float


@dataclass
class LossTrace:
    records: List[LossRecord] = field(default_factory=list)

    def __len__(self) -> int:
        return len(self.records)

    def append(self, record: LossRecord) -> None:
        self.records.append(record)

    @property
    def initial_total(self) -> Optional[float]:
        return self.records[0].total if self.records else None

    @property
    def final_total(self) -> Optional[float]:
        return self.records[-1].total if self.records else None

    def totals(self) -> List[float]:
        return [r.total for r in self.records]

    def to_csv(self, path: Union[str, Path]) -> None:
        with open(path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(TRACE_COLUMNS)
            for r in self.records:
                writer.writerow([r.epoch] + [repr(getattr(r, c)) for c in TRACE_COLUMNS[1:]])

    @classmethod
    def from_csv(cls, path: Union[str, Path]) -> "LossTrace":
        with open(path, "r", newline="", encoding="utf-8") as f:
            reader = csv.DictReader(f)
            if tuple(reader.fieldnames or ()) != TRACE_COLUMNS:
                raise ContractError(f"{path}: expected columns {','.join(TRACE_COLUMNS)}")
            return cls([LossRecord(int(row["epoch"]), *(float(row[c]) for c in TRACE_COLUMNS[1:]))
                        for row in reader])


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------

@dataclass
class TrainingData:
    net: RoadNetwork
    od: np.ndarray


def prepare_training_data(net: RoadNetwork, trajs: TrajectorySet, config: TrainConfig, seed: int) -> TrainingData:
    """OD matrix from the training split of the trajectories (or from all of them)"""
    source = trajs
    if config.od_from_train_only:
        if len(trajs) >= 10:
            source = split_trajectories(trajs, seed)[0]
        else:
            print(f"⚠️  Only {len(trajs)} trajectories; building the OD matrix from all of them")
    return TrainingData(net=net, od=build_od_matrix(source, net.n_segments))


def semantic_rows_for_epoch(config: TrainConfig, n_segments: int, seed: int, epoch: int) -> Optional[np.ndarray]:
    if n_segments <= config.semantic_sample_threshold:
        return None
    rng = np.random.default_rng([seed, epoch])
    picked = rng.choice(n_segments, size=min(config.semantic_sample_rows, n_segments), replace=False)
    return np.sort(picked)


def evaluate_losses(model: HiFiNet, data: TrainingData, epoch: int = 1) -> Tuple[LossComponents, DiffNode]:
    """Forward pass and weighted total at the current parameters"""
    rows = semantic_rows_for_epoch(model.config, data.net.n_segments, model.seed, epoch)
    components = compute_losses(model.forward(), data.od, model.config, rows)
    return components, total_loss(components, model.config.weights)


def train(config: TrainConfig, data: TrainingData, seed: int, verbose: bool = False,
          model: Optional[HiFiNet] = None) -> Tuple[HiFiNet, LossTrace]:
    """
    Full-batch training: forward, losses, backward and one Adam step per epoch.

    Args:
        config: hyperparameters (epochs, lr, loss weights, variant)
        data: network and OD matrix
        seed: initialisation and sampling seed
        verbose: show a progress bar
        model: continue from an existing model instead of a fresh one

    Returns:
        (trained model, per-epoch loss trace)

    Raises:
        DivergenceError: the total loss became non-finite
    """
    model = model or HiFiNet(config, data.net, seed)
    trace = LossTrace()
    adam = AdamState()

    for epoch in tqdm(range(1, config.epochs + 1), desc="training", unit="epoch", disable=not verbose):
        model.store.zero_grad()
        try:
            components, total = evaluate_losses(model, data, epoch)
        except NumericError as e:
            raise DivergenceError(epoch, f"forward pass diverged at epoch {epoch}: {e}") from e
        if not math.isfinite(total.item()):
            raise DivergenceError(epoch)

        values = components.values()
        trace.append(LossRecord(epoch=epoch, total=total.item(), **values))
        tc.backward(total)
        adam_step(model.store, adam, config.lr, config.adam_beta1, config.adam_beta2, config.adam_eps)

    return model, trace
