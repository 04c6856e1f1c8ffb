"""
Shared pytest setup: the app and scripts directories are imported flat,
the same way the application modules import them
"""
import os
import sys

ROOT = os.path.dirname(os.path.abspath(__file__))
for sub in ("scripts", "app"):
    path = os.path.join(ROOT, sub)
    if path not in sys.path:
        sys.path.insert(0, path)

import pytest  # noqa: E402

from hifinet_model import LossWeights, TrainConfig  # noqa: E402
from road_network import GeneratorConfig, generate_synthetic  # noqa: E402


@pytest.fixture
def toy_bundle():
    """12-segment grid with 2 regions of 2 localities each"""
    cfg = GeneratorConfig(width=4, height=3, regions=2, localities_per_region=2, trajectories=30)
    return generate_synthetic(cfg, seed=0)


@pytest.fixture
def toy_config():
    return TrainConfig(
        d=4, d_id=2, d_ln=2, d_sl=2, d_ll=2, n_localities=4, n_regions=2,
        length_bins=4, geo_grid=2, k_neighbors=8, epochs=5, weights=LossWeights(),
    )
