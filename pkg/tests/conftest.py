"""
Shared fixtures for the replay grounding test suite.
"""

import sys
from pathlib import Path

import numpy as np
import pytest

# Add project root to path for imports
sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from src.core.conditioning import Sample
from src.core.labeling import FrameSpan
from src.dataset.synthetic import generate_synthetic
from src.utils.config import SynthConfig, WindowConfig


@pytest.fixture
def rng():
    """Seeded generator for test data."""
    return np.random.default_rng(12345)


@pytest.fixture
def window_cfg():
    """Default window configuration."""
    return WindowConfig()


@pytest.fixture
def small_synth_cfg():
    """Small synthetic dataset: 1 game, 2 actions per half, 300 s halves."""
    return SynthConfig(
        n_games=1,
        actions_per_half=2,
        dim=8,
        duration_s=300.0,
        noise_sigma=0.0,
        seed=3,
    )


@pytest.fixture
def small_dataset(tmp_path, small_synth_cfg):
    """Generated small dataset; returns the manifest bound to its directory."""
    return generate_synthetic(small_synth_cfg, tmp_path / "data")


@pytest.fixture
def make_sample():
    """Factory for hand-built samples."""

    def _make(window_frames, replay_mean, labels=(), replay_id="r0", window_start_s=0.0, window_len_s=16.0):
        window_frames = np.asarray(window_frames, dtype=np.float64)
        replay_mean = np.asarray(replay_mean, dtype=np.float64)
        tiled = np.tile(replay_mean, (window_frames.shape[0], 1))
        n = window_frames.shape[0]
        return Sample(
            replay_id=replay_id,
            game_id="g",
            half=1,
            window_start_s=window_start_s,
            window_len_s=window_len_s,
            features=np.concatenate([window_frames, tiled], axis=1),
            labels=tuple(FrameSpan(s, e, n_frames=n) for s, e in labels),
            replay_mean=replay_mean,
        )

    return _make
