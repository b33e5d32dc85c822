import os
import sys

import numpy as np
import pytest

sys.path.insert(0, os.path.dirname(__file__))

from cgmvae.model import ModelConfig, ModelParams  # noqa: E402


def tiny_config(**overrides) -> ModelConfig:
    base = dict(
        input_dim=3, n_labels=3, embed_dim=8, latent_dim=4,
        feature_hidden=(6, 6, 6), label_hidden=(6, 6), decoder_hidden=(6, 6),
        dropout=0.0, tau=0.5, alpha=1.0, beta=0.5,
    )
    base.update(overrides)
    return ModelConfig(**base)


@pytest.fixture
def toy_model():
    config = tiny_config()
    params = ModelParams.init(config, seed=2)
    return config, params


@pytest.fixture
def toy_batch():
    gen = np.random.default_rng(3)
    x = gen.normal(size=(4, 3))
    y = np.zeros((4, 3))
    for i in range(4):
        y[i, gen.choice(3, size=gen.integers(1, 3), replace=False)] = 1.0
    return x, y
