import numpy as np
import pytest
import torch

from bitrl.config import AugmentationSpec, BackgroundMode, RunConfig, background_from_name


def tiny_config(**overrides) -> RunConfig:
    """Toy dimensions for fast unit tests."""
    base = dict(
        image_size=16,
        frame_stack=1,
        encoder_filters=4,
        latent_dim=8,
        projection_dim=8,
        hidden_dim=16,
        horizon=12,
        rl_batch_size=4,
        bit_batch_size=4,
        total_env_steps=60,
        initial_collect=20,
        eval_every=30,
        eval_episodes=1,
        buffer_capacity=500,
        aug=AugmentationSpec("overlay", alpha=0.5, seed=1),
    )
    base.update(overrides)
    return RunConfig(**base)


def smoke_config(**overrides) -> RunConfig:
    """Desk-scale config for the statistical smoke experiments."""
    base = dict(
        image_size=24,
        frame_stack=2,
        encoder_filters=8,
        latent_dim=32,
        projection_dim=32,
        hidden_dim=64,
        horizon=50,
        force_scale=1.5,
        rl_batch_size=64,
        bit_batch_size=48,
        total_env_steps=20_000,
        initial_collect=500,
        eval_every=10_000,
        eval_episodes=4,
        buffer_capacity=30_000,
        aug=AugmentationSpec("overlay", alpha=0.75),
        train_background=background_from_name("clean"),
    )
    base.update(overrides)
    return RunConfig(**base)


def random_observation(config: RunConfig, rng: np.random.Generator, batch: int | None = None) -> np.ndarray:
    shape = (batch, *config.obs_shape) if batch else config.obs_shape
    return rng.uniform(0.0, 1.0, size=shape).astype(np.float32)


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(0)


@pytest.fixture(autouse=True)
def _single_thread_torch():
    torch.set_num_threads(1)
