"""
Model configuration, parameter initialisation and the full forward pass:
contextual embedding → hierarchy → low-frequency propagation →
decomposition → two TGT streams → reconstruction
"""
import math
from typing import Dict, List, Literal, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

import tensor_core as tc
from errors import ConfigError
from freq_decomp import TgtBlock, TgtParams, decompose, reconstruct, tgt
from hierarchy import (
    LANE_BINS, EmbeddingTables, FfnParams, ForwardState, GatParams, LevelParams,
    attribute_index, build_hierarchy, contextual_embed, initial_features, propagate_low_frequency,
)
from road_network import RoadNetwork
from tensor_core import DiffNode, ParamStore

INIT_SCALE = 1.0
BIAS_INIT_SCALE = 0.1
MAX_LOCALITIES = 200
MAX_REGIONS = 30

Variant = Literal["full", "no_locality", "no_region", "no_hierarchy", "no_low", "no_high"]
VARIANTS = ("full", "no_locality", "no_region", "no_hierarchy", "no_low", "no_high")

_VARIANT_LEVELS: Dict[str, List[str]] = {
    "full": ["locality", "region"],
    "no_locality": ["region"],
    "no_region": ["locality"],
    "no_hierarchy": [],
    "no_low": ["locality", "region"],
    "no_high": ["locality", "region"],
}


class LossWeights(BaseModel):
    """Weights of the four loss terms plus temperature and OD/adjacency balance"""
    model_config = ConfigDict(extra="forbid", populate_by_name=True)

    gamma1: float = Field(default=1.0, ge=0)
    gamma2: float = Field(default=1.0, ge=0)
    gamma3: float = Field(default=1.0, ge=0)
    gamma4: float = Field(default=1.0, ge=0)
    tau: float = Field(default=0.2, gt=0)
    lambda_: float = Field(default=0.5, ge=0, le=1, alias="lambda")


class TrainConfig(BaseModel):
    """Model dimensions, hierarchy sizes, optimiser settings and behaviour flags"""
    model_config = ConfigDict(extra="forbid")

    d: int = Field(default=16, ge=1)
    d_id: int = Field(default=4, ge=1)
    d_ln: int = Field(default=4, ge=1)
    d_sl: int = Field(default=4, ge=1)
    d_ll: int = Field(default=4, ge=1)
    d_ff: Optional[int] = Field(default=None, ge=1)
    n_localities: Optional[int] = Field(default=None, ge=1)
    n_regions: Optional[int] = Field(default=None, ge=1)
    n_blocks: int = Field(default=2, ge=1)
    k_neighbors: int = Field(default=8, ge=1)
    length_bins: int = Field(default=8, ge=1)
    geo_grid: int = Field(default=4, ge=1)

    lr: float = Field(default=1e-3, gt=0)
    adam_beta1: float = Field(default=0.9, ge=0, lt=1)
    adam_beta2: float = Field(default=0.999, ge=0, lt=1)
    adam_eps: float = Field(default=1e-8, gt=0)
    epochs: int = Field(default=500, ge=0)
    seed: int = 0

    weights: LossWeights = Field(default_factory=LossWeights)
    variant: Variant = "full"
    share_gat: bool = False
    tgt_adjacency: Literal["normalized", "raw"] = "normalized"
    semantic_gram: Literal["normalized", "raw"] = "normalized"
    od_from_train_only: bool = True
    semantic_sample_threshold: int = Field(default=5000, ge=1)
    semantic_sample_rows: int = Field(default=1024, ge=1)

    @model_validator(mode="after")
    def hierarchy_sizes_nest(self):
        if self.n_localities is None or self.n_regions is None:
            return self
        if "locality" in self.levels and "region" in self.levels and not self.n_regions < self.n_localities:
            raise ValueError(f"n_regions ({self.n_regions}) must be smaller than n_localities ({self.n_localities})")
        return self

    @property
    def d_prime(self) -> int:
        return self.d_id + self.d_ln + self.d_sl + self.d_ll

    @property
    def ffn_width(self) -> int:
        return self.d_ff if self.d_ff is not None else 2 * self.d

    @property
    def levels(self) -> List[str]:
        return list(_VARIANT_LEVELS[self.variant])

    def level_size(self, name: str) -> int:
        size = self.n_localities if name == "locality" else self.n_regions
        if size is None:
            raise ConfigError(f"{name} count is unset; call sized_for(n_segments) first")
        return size

    def sized_for(self, n_segments: int) -> "TrainConfig":
        """
        Fill unset hierarchy sizes from the segment count: about one locality
        per ten segments (at most 200) and one region per three localities
        (at most 30), keeping N_R < N_L < N_S where the network allows it.
        Sizes given explicitly are left alone.
        """
        n_l = self.n_localities
        if n_l is None:
            n_l = min(MAX_LOCALITIES, max(2, math.ceil(n_segments / 10)), max(1, n_segments - 1))
            if self.n_regions is not None:
                n_l = max(n_l, self.n_regions + 1)
        n_r = self.n_regions
        if n_r is None:
            n_r = max(1, min(MAX_REGIONS, math.ceil(n_l / 3), n_l - 1))
        return self.model_copy(update={"n_localities": n_l, "n_regions": n_r})

    def check_against(self, n_segments: int) -> None:
        """
        Raises:
            ConfigError: a hierarchy level is not smaller than the level below it
        """
        if "locality" in self.levels and "region" in self.levels and not self.n_regions < self.n_localities:
            raise ConfigError(
                f"region count {self.n_regions} must be smaller than the {self.n_localities} localities")
        for name in self.levels:
            if not self.level_size(name) < n_segments:
                raise ConfigError(
                    f"{name} count {self.level_size(name)} must be smaller than the {n_segments} segments")


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out))


class HiFiNet:
    """
    Parameters and forward pass for one road network.

    Args:
        config: validated training configuration
        net: road network the model embeds
        seed: initialisation seed
    """

    def __init__(self, config: TrainConfig, net: RoadNetwork, seed: int = 0):
        config = config.sized_for(net.n_segments)
        config.check_against(net.n_segments)
        self.config = config
        self.net = net
        self.seed = seed
        self.index = attribute_index(net, config.length_bins, config.geo_grid)
        self.adjacency = np.array(net.adjacency, dtype=np.float64)
        self.store = ParamStore()
        self._initialise(np.random.default_rng(seed))

    def _initialise(self, rng: np.random.Generator) -> None:
        cfg, store = self.config, self.store
        d = cfg.d

        store.add("emb.id", rng.normal(0.0, INIT_SCALE, (self.net.n_segments, cfg.d_id)))
        store.add("emb.lane", rng.normal(0.0, INIT_SCALE, (LANE_BINS, cfg.d_ln)))
        store.add("emb.length", rng.normal(0.0, INIT_SCALE, (cfg.length_bins, cfg.d_sl)))
        store.add("emb.geo", rng.normal(0.0, INIT_SCALE, (cfg.geo_grid ** 2, cfg.d_ll)))

        # nonzero b2 keeps rows with no active hidden unit away from the origin
        store.add("ffn.w1", xavier_uniform(rng, cfg.d_prime, cfg.ffn_width))
        store.add("ffn.b1", np.zeros((1, cfg.ffn_width)))
        store.add("ffn.w2", xavier_uniform(rng, cfg.ffn_width, d))
        store.add("ffn.b2", rng.normal(0.0, BIAS_INIT_SCALE, (1, d)))

        for name in cfg.levels:
            store.add(f"hier.{name}.init", rng.normal(0.0, INIT_SCALE, (cfg.level_size(name), d)))
            store.add(f"hier.{name}.w_child", xavier_uniform(rng, d, d))
            store.add(f"hier.{name}.w_parent", xavier_uniform(rng, d, d))

        for name in self.gat_names:
            store.add(f"gat.{name}.w", xavier_uniform(rng, d, d))
            store.add(f"gat.{name}.attn", xavier_uniform(rng, 2 * d, 1))

        for stream in ("low", "high"):
            for k in range(cfg.n_blocks):
                prefix = f"tgt.{stream}.block{k}"
                for proj in ("w_q", "w_k", "w_v"):
                    store.add(f"{prefix}.{proj}", xavier_uniform(rng, d, d))
                store.add(f"{prefix}.ffn_w1", xavier_uniform(rng, d, cfg.ffn_width))
                store.add(f"{prefix}.ffn_b1", np.zeros((1, cfg.ffn_width)))
                store.add(f"{prefix}.ffn_w2", xavier_uniform(rng, cfg.ffn_width, d))
                store.add(f"{prefix}.ffn_b2", np.zeros((1, d)))
                for ln in ("ln1", "ln2"):
                    store.add(f"{prefix}.{ln}_gain", np.ones((1, d)))
                    store.add(f"{prefix}.{ln}_bias", np.zeros((1, d)))
            store.add(f"tgt.{stream}.alpha_logit", np.zeros((1, 1)))

        if cfg.variant not in ("no_low", "no_high"):
            store.add("recon.beta_logit", np.zeros((1, 1)))

    @property
    def gat_names(self) -> List[str]:
        if self.config.share_gat:
            return ["shared"]
        return ["segment"] + self.config.levels

    def _gats(self) -> Dict[str, GatParams]:
        s = self.store
        if self.config.share_gat:
            shared = GatParams(s["gat.shared.w"], s["gat.shared.attn"])
            return {name: shared for name in ["segment"] + self.config.levels}
        return {name: GatParams(s[f"gat.{name}.w"], s[f"gat.{name}.attn"]) for name in self.gat_names}

    def _tgt_params(self, stream: str) -> TgtParams:
        s = self.store
        blocks = []
        for k in range(self.config.n_blocks):
            p = f"tgt.{stream}.block{k}"
            blocks.append(TgtBlock(
                w_q=s[f"{p}.w_q"], w_k=s[f"{p}.w_k"], w_v=s[f"{p}.w_v"],
                ffn=FfnParams(s[f"{p}.ffn_w1"], s[f"{p}.ffn_b1"], s[f"{p}.ffn_w2"], s[f"{p}.ffn_b2"]),
                ln1_gain=s[f"{p}.ln1_gain"], ln1_bias=s[f"{p}.ln1_bias"],
                ln2_gain=s[f"{p}.ln2_gain"], ln2_bias=s[f"{p}.ln2_bias"],
            ))
        return TgtParams(blocks=blocks, alpha_logit=s[f"tgt.{stream}.alpha_logit"])

    def beta(self):
        if self.config.variant == "no_low":
            return 0.0
        if self.config.variant == "no_high":
            return 1.0
        return tc.sigmoid(self.store["recon.beta_logit"])

    def forward(self) -> ForwardState:
        s = self.store
        tables = EmbeddingTables(s["emb.id"], s["emb.lane"], s["emb.length"], s["emb.geo"])
        ffn = FfnParams(s["ffn.w1"], s["ffn.b1"], s["ffn.w2"], s["ffn.b2"])
        level_params = [
            LevelParams(name, s[f"hier.{name}.init"], s[f"hier.{name}.w_child"], s[f"hier.{name}.w_parent"])
            for name in self.config.levels
        ]

        state = ForwardState(A_S=self.adjacency)
        state.V_S = contextual_embed(self.index, tables)
        state.H_S = initial_features(state.V_S, ffn)
        state.levels = build_hierarchy(state.H_S, self.adjacency, level_params)
        propagate_low_frequency(state, self._gats(), self.config.k_neighbors)
        state.H_S_high = decompose(state.H_S, state.H_S_low)

        mode = self.config.tgt_adjacency
        state.H_low_updated = tgt(state.H_S_low, self.adjacency, self._tgt_params("low"), mode, state.attention)
        state.H_high_updated = tgt(state.H_S_high, self.adjacency, self._tgt_params("high"), mode, state.attention)
        state.H_hat = reconstruct(state.H_low_updated, state.H_high_updated, self.beta())
        return state

    def embeddings(self, stream: str = "fused") -> np.ndarray:
        """Frozen segment embeddings: updated low band, high band or the fused Ĥ_S"""
        state = self.forward()
        picked: Optional[DiffNode] = {
            "fused": state.H_hat,
            "low": state.H_low_updated,
            "high": state.H_high_updated,
        }.get(stream)
        if picked is None:
            raise ConfigError(f"unknown embedding stream '{stream}', expected fused, low or high")
        return picked.value.copy()
