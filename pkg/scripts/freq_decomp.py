"""
Decompose segment features into low/high-frequency parts, update each with a
topology-aware graph transformer, and recombine them
"""
import math
from dataclasses import dataclass
from typing import List, Optional, Union

import numpy as np

import tensor_core as tc
from errors import ConfigError, ShapeError
from hierarchy import FfnParams, feed_forward
from tensor_core import DiffNode, NodeLike

ADJACENCY_MODES = ("normalized", "raw")
Mixing = Union[DiffNode, float]


@dataclass
class TgtBlock:
    w_q: DiffNode
    w_k: DiffNode
    w_v: DiffNode
    ffn: FfnParams
    ln1_gain: DiffNode
    ln1_bias: DiffNode
    ln2_gain: DiffNode
    ln2_bias: DiffNode


@dataclass
class TgtParams:
    blocks: List[TgtBlock]
    alpha_logit: DiffNode

    @property
    def alpha(self) -> DiffNode:
        return tc.sigmoid(self.alpha_logit)


def _same_shape(a: DiffNode, b: DiffNode, what: str) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"{what}: left operand is {a.rows}x{a.cols}, right operand is {b.rows}x{b.cols}")


def decompose(h_s: NodeLike, h_s_low: NodeLike) -> DiffNode:
    """High-frequency residue H_S − H_S_low"""
    h_s, h_s_low = tc.lift(h_s), tc.lift(h_s_low)
    _same_shape(h_s, h_s_low, "decompose")
    return h_s - h_s_low


def tgt_adjacency(adjacency: np.ndarray, mode: str = "normalized") -> np.ndarray:
    """
    Structural term mixed into TGT attention.

    normalized: row-normalise(A_S + I), a row-stochastic matrix
    raw: the binary A_S as given
    """
    adjacency = np.asarray(adjacency, dtype=np.float64)
    if mode == "raw":
        return adjacency.copy()
    if mode != "normalized":
        raise ConfigError(f"unknown tgt_adjacency mode '{mode}', expected one of {ADJACENCY_MODES}")
    with_self = adjacency + np.eye(adjacency.shape[0])
    return with_self / with_self.sum(axis=1, keepdims=True)


def tgt_attention(h: NodeLike, a_hat: np.ndarray, block: TgtBlock, alpha: Mixing) -> DiffNode:
    """ATT = α·softmax(QKᵀ/√d) + (1−α)·Â"""
    h = tc.lift(h)
    if np.shape(a_hat) != (h.rows, h.rows):
        raise ShapeError(f"tgt_attention: adjacency is {np.shape(a_hat)}, features have {h.rows} rows")
    queries = tc.matmul(h, block.w_q)
    keys = tc.matmul(h, block.w_k)
    scores = tc.matmul(queries, tc.transpose(keys)) * (1.0 / math.sqrt(queries.cols))
    alpha = tc.lift(alpha)
    return tc.mul(alpha, tc.softmax_rows(scores)) + tc.mul(1.0 - alpha, a_hat)


def tgt_block(h: NodeLike, a_hat: np.ndarray, block: TgtBlock, alpha: Mixing,
              attention_log: Optional[List[DiffNode]] = None) -> DiffNode:
    """One transformer block: attention with residual + LayerNorm, then FFN with residual + LayerNorm"""
    h = tc.lift(h)
    attention = tgt_attention(h, a_hat, block, alpha)
    if attention_log is not None:
        attention_log.append(attention)
    values = tc.matmul(h, block.w_v)
    _same_shape(values, h, "tgt_block")
    mixed = tc.layer_norm(tc.matmul(attention, values) + h, block.ln1_gain, block.ln1_bias)
    return tc.layer_norm(feed_forward(mixed, block.ffn) + mixed, block.ln2_gain, block.ln2_bias)


def tgt(h: NodeLike, adjacency: np.ndarray, params: TgtParams, adjacency_mode: str = "normalized",
        attention_log: Optional[List[DiffNode]] = None) -> DiffNode:
    """
    Run the stream's blocks in sequence with one shared mixing coefficient α.

    Raises:
        ConfigError: params has no blocks
    """
    if not params.blocks:
        raise ConfigError("a TGT stream needs at least one block")
    a_hat = tgt_adjacency(adjacency, adjacency_mode)
    alpha = params.alpha
    out = tc.lift(h)
    for block in params.blocks:
        out = tgt_block(out, a_hat, block, alpha, attention_log)
    return out


def reconstruct(h_low_updated: NodeLike, h_high_updated: NodeLike, beta: Mixing) -> DiffNode:
    """Ĥ_S = β·H_low + (1−β)·H_high"""
    low, high = tc.lift(h_low_updated), tc.lift(h_high_updated)
    _same_shape(low, high, "reconstruct")
    beta = tc.lift(beta)
    return tc.mul(beta, low) + tc.mul(1.0 - beta, high)
