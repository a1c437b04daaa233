import numpy as np
import pytest
from hypothesis import strategies as strat

from lsanet.autograd import precision
from lsanet.config import LayerSpec, NetworkConfig, TrainingConfig
from lsanet.geometry import RegionGrouping, group_batch


@strat.composite
def point_clouds(draw, min_points=4, max_points=64):
    """(N, 3) float64 clouds drawn through a seeded generator"""
    n = draw(strat.integers(min_value=min_points, max_value=max_points))
    seed = draw(strat.integers(min_value=0, max_value=2 ** 32 - 1))
    scale = draw(strat.sampled_from([0.1, 1.0, 10.0]))
    return scale * np.random.default_rng(seed).standard_normal((n, 3))


@pytest.fixture
def float64():
    with precision(np.float64) as dtype:
        yield dtype


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def make_grouping(rng: np.random.Generator, batch=1, n_points=64, m=20, k=8, radius=0.6) -> RegionGrouping:
    coords = rng.uniform(-1.0, 1.0, size=(batch, n_points, 3))
    return group_batch(coords, m, radius, k)


@pytest.fixture
def grouping(rng) -> RegionGrouping:
    return make_grouping(rng)


def tiny_config(**overrides) -> NetworkConfig:
    """Three-stage network that trains in seconds on 64-point clouds"""
    config = NetworkConfig(
        layers=[
            LayerSpec(16, 8, (8, 8, 16), 0.4),
            LayerSpec(4, 4, (16, 16, 32), 0.8),
            LayerSpec(1, 4, (32, 32)),
        ],
        head_widths=(16,),
        num_classes=4,
        dropout_rate=0.0,
        sfe_lift_widths=(4, 8),
        training=TrainingConfig(batch_size=4, epochs=2, n_points=64),
    )
    return config.with_flags(**overrides) if overrides else config


@pytest.fixture
def tiny() -> NetworkConfig:
    return tiny_config()
