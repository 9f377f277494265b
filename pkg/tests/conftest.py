import numpy as np
import pytest
import torch

from config import BackboneConfig, MnimConfig, ModelConfig, SynthConfig


def tiny_model_config(variant: str = "full", levels: int = 3, width: int = 8, **kwargs) -> ModelConfig:
    return ModelConfig(
        backbone=BackboneConfig(stage_channels=[4, 4, 8, 8, 8], blocks_per_stage=[1, 1, 1, 1, 1]),
        mnim=MnimConfig(levels=levels, node_width=width),
        variant=variant,
        head_width=width,
        **kwargs,
    )


def random_mask(rng: np.random.Generator, height: int, width: int, p: float = 0.3) -> np.ndarray:
    return (rng.random((height, width)) < p).astype(np.uint8)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small_synth():
    return SynthConfig(height=64, width=64, num_targets=2, target_radius_range=(1.5, 4.0), seed=7)


@pytest.fixture(autouse=True)
def _seed_torch():
    torch.manual_seed(0)
