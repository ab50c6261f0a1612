"""
Tests for context extraction, windowing and conditioning.
"""

import numpy as np
import orjson
import pytest

from src.core.conditioning import (
    Mode,
    Sample,
    build_samples,
    condition_window,
    enumerate_windows,
    extract_context,
    fuse_streams,
    pool_replay_mean,
    prepare_context,
    resize_temporal,
)
from src.core.exceptions import ConditioningException
from src.core.labeling import from_frame_span
from src.dataset.features import FeatureTrack
from src.dataset.manifest import ReplayEvent, dump_manifest, load_manifest
from src.utils.config import WindowConfig


def _track(n_frames=1000, dim=2, fps=4.0):
    frames = np.arange(n_frames * dim, dtype=np.float32).reshape(n_frames, dim)
    return FeatureTrack("g", 1, "6s", fps, frames)


def _replay(start, end=None, game="g", half=1):
    return ReplayEvent(
        replay_id="r", game_id=game, half=half, replay_start_s=start, replay_end_s=end or start + 3.0
    )


class TestExtractContext:
    """Test suite for context extraction."""

    def test_train_context(self, window_cfg):
        """Test 120 s before the replay in train mode."""
        view, left = extract_context(_track(), _replay(200.0), Mode.TRAIN, window_cfg)
        assert left == 80.0
        assert view.n_frames == 480
        np.testing.assert_array_equal(view.frames, _track().frames[320:800])

    def test_test_context(self, window_cfg):
        """Test 60 s before the replay in test mode."""
        view, left = extract_context(_track(), _replay(200.0), "test", window_cfg)
        assert left == 140.0
        assert view.n_frames == 240

    def test_clipped_at_half_start(self, window_cfg):
        """Test the context is clipped at second 0."""
        view, left = extract_context(_track(), _replay(30.0), Mode.TRAIN, window_cfg)
        assert left == 0.0
        assert view.n_frames == 120

    def test_replay_at_zero(self, window_cfg):
        """Test a replay at 0 s has no context."""
        with pytest.raises(ConditioningException):
            extract_context(_track(), _replay(0.0), Mode.TEST, window_cfg)

    def test_other_half_rejected(self, window_cfg):
        """Test a replay from another half is rejected."""
        with pytest.raises(ConditioningException):
            extract_context(_track(), _replay(50.0, half=2), Mode.TEST, window_cfg)

    def test_unknown_mode(self, window_cfg):
        """Test modes are train or test."""
        with pytest.raises(ConditioningException):
            extract_context(_track(), _replay(50.0), "validate", window_cfg)


class TestEnumerateWindows:
    """Test suite for sliding windows."""

    def test_exact_fit(self, window_cfg):
        """Test a span that the stride tiles exactly."""
        assert enumerate_windows(56.0, window_cfg) == [0.0, 8.0, 16.0, 24.0, 32.0, 40.0]

    def test_tail_window(self, window_cfg):
        """Test a final window flush with the end."""
        assert enumerate_windows(50.0, window_cfg) == [0.0, 8.0, 16.0, 24.0, 32.0, 34.0]

    def test_short_span(self, window_cfg):
        """Test a span shorter than a window is one window."""
        assert enumerate_windows(10.0, window_cfg) == [0.0]
        assert enumerate_windows(16.0, window_cfg) == [0.0]

    def test_non_positive(self, window_cfg):
        """Test empty spans are rejected."""
        with pytest.raises(ConditioningException):
            enumerate_windows(0.0, window_cfg)

    def test_covers_span(self):
        """Test windows cover every second of the span."""
        cfg = WindowConfig(window_len_s=10.0, stride_s=3.0)
        starts = enumerate_windows(47.5, cfg)
        assert starts[0] == 0.0
        assert starts[-1] + 10.0 == pytest.approx(47.5)
        assert all(b - a <= 3.0 + 1e-9 for a, b in zip(starts, starts[1:]))


class TestConditioning:
    """Test suite for pooling, conditioning and resizing."""

    def test_pool_replay_mean(self):
        """Test the mean is taken over time."""
        np.testing.assert_allclose(pool_replay_mean([[1.0, 2.0], [3.0, 6.0]]), [2.0, 4.0])

    def test_pool_empty(self):
        """Test an empty replay is rejected."""
        with pytest.raises(ConditioningException):
            pool_replay_mean(np.zeros((0, 3)))

    def test_condition_window(self):
        """Test the mean is appended to every frame."""
        out = condition_window(np.ones((4, 3)), np.array([7.0, 8.0, 9.0]))
        assert out.shape == (4, 6)
        np.testing.assert_array_equal(out[:, 3:], np.tile([7.0, 8.0, 9.0], (4, 1)))
        np.testing.assert_array_equal(out[:, :3], np.ones((4, 3)))

    def test_condition_mismatch(self):
        """Test mismatched channel counts are rejected."""
        with pytest.raises(ConditioningException):
            condition_window(np.ones((4, 3)), np.ones(2))

    def test_resize_upsample(self):
        """Test endpoint-aligned linear interpolation."""
        out = resize_temporal(np.arange(5.0)[:, None], 9)
        np.testing.assert_allclose(out[:, 0], np.arange(9) / 2.0)

    def test_resize_three_to_five(self):
        """Test the worked three-to-five example."""
        out = resize_temporal(np.array([[1.0], [2.0], [3.0]]), 5)
        np.testing.assert_allclose(out[:, 0], [1.0, 1.5, 2.0, 2.5, 3.0])

    def test_resize_downsample(self):
        """Test downsampling keeps aligned samples."""
        out = resize_temporal(np.arange(9.0)[:, None], 5)
        np.testing.assert_allclose(out[:, 0], [0.0, 2.0, 4.0, 6.0, 8.0])

    def test_resize_affine_exact(self, rng):
        """Test affine inputs come out as the affine function at the sample positions."""
        for _ in range(1000):
            t, n = int(rng.integers(2, 200)), int(rng.integers(2, 200))
            offset, slope = rng.standard_normal(3), rng.standard_normal(3)
            frames = offset + slope * np.arange(t, dtype=np.float64)[:, None]
            pos = np.arange(n) * (t - 1) / (n - 1)
            expected = offset + slope * pos[:, None]
            np.testing.assert_allclose(resize_temporal(frames, n), expected, rtol=0, atol=1e-9)


    def test_resize_single_row(self):
        """Test a single row is replicated."""
        out = resize_temporal(np.array([[1.0, 2.0]]), 4)
        np.testing.assert_array_equal(out, np.tile([1.0, 2.0], (4, 1)))

    def test_resize_endpoints(self, rng):
        """Test first and last rows are preserved."""
        frames = rng.standard_normal((64, 3))
        out = resize_temporal(frames, 100)
        np.testing.assert_allclose(out[0], frames[0])
        np.testing.assert_allclose(out[-1], frames[-1])

    def test_fuse_streams(self, rng):
        """Test streams are z-normalized per channel and concatenated."""
        a = rng.normal(5.0, 3.0, size=(50, 2))
        b = np.column_stack([rng.normal(-1.0, 0.5, size=50), np.full(50, 4.0)])
        fused = fuse_streams([a, b])
        assert fused.shape == (50, 4)
        np.testing.assert_allclose(fused[:, :3].mean(axis=0), 0.0, atol=1e-12)
        np.testing.assert_allclose(fused[:, :3].std(axis=0), 1.0)
        np.testing.assert_array_equal(fused[:, 3], 0.0)

    def test_fuse_length_mismatch(self):
        """Test streams of different lengths are rejected."""
        with pytest.raises(ConditioningException):
            fuse_streams([np.ones((3, 2)), np.ones((4, 2))])

    def test_sample_requires_even_channels(self):
        """Test features must split into window and mean halves."""
        with pytest.raises(ConditioningException):
            Sample("r", "g", 1, 0.0, 16.0, np.ones((10, 3)))


class TestBuildSamples:
    """Test suite for sample construction on a generated dataset."""

    def test_test_mode_shapes(self, small_dataset, window_cfg):
        """Test every window is resized and conditioned."""
        samples = build_samples(small_dataset, window_cfg, Mode.TEST)
        assert samples
        assert [s.replay_id for s in samples] == sorted(s.replay_id for s in samples)
        for sample in samples:
            assert sample.features.shape == (window_cfg.resize_len, 2 * 16)
            assert sample.native_frames == round(sample.window_len_s * 4.0)
            np.testing.assert_array_equal(
                sample.features[:, 16:], np.tile(sample.replay_mean, (window_cfg.resize_len, 1))
            )

    def test_test_mode_covers_context(self, small_dataset, window_cfg):
        """Test windows of one replay tile the 60 s before it."""
        samples = build_samples(small_dataset, window_cfg, Mode.TEST)
        for replay in small_dataset.replays():
            windows = [s for s in samples if s.replay_id == replay.replay_id]
            first, last = windows[0], windows[-1]
            assert first.window_start_s == pytest.approx(max(0.0, replay.replay_start_s - 60.0))
            assert last.window_start_s + last.window_len_s == pytest.approx(replay.replay_start_s)

    def test_train_mode_keeps_labeled_windows(self, small_dataset, window_cfg):
        """Test train samples all carry the segment label."""
        samples = build_samples(small_dataset, window_cfg, Mode.TRAIN)
        assert samples
        assert all(s.labels for s in samples)

        for replay in small_dataset.replays():
            starts = [
                from_frame_span(label, s.window_start_s, s.window_len_s, s.native_frames).start_s
                for s in samples if s.replay_id == replay.replay_id
                for label in s.labels
            ]
            assert any(abs(t - replay.gt_time_s) < 1e-6 for t in starts)

    def test_replay_mean_matches_action(self, small_dataset, window_cfg):
        """Test the pooled replay equals the normalized action frames when noise is 0."""
        replay = small_dataset.replays()[0]
        ctx = prepare_context(small_dataset, replay, Mode.TRAIN, window_cfg)
        a = int(round(replay.gt_time_s * ctx.fps))
        np.testing.assert_allclose(ctx.fused_rows(a, a + 12).mean(axis=0), ctx.replay_mean, atol=1e-9)

    def test_stream_selection(self, small_dataset, window_cfg):
        """Test a single stream halves the channel count."""
        samples = build_samples(small_dataset, window_cfg, Mode.TEST, streams=["6s"])
        assert samples[0].features.shape == (window_cfg.resize_len, 16)

    def test_train_requires_ground_truth(self, small_dataset, window_cfg):
        """Test train mode rejects replays without a timestamp."""
        data = orjson.loads(dump_manifest(small_dataset))
        data["games"][0]["halves"][0]["replays"][0]["gt_time_s"] = None
        path = small_dataset.root / "no_gt.json"
        path.write_bytes(orjson.dumps(data))
        manifest = load_manifest(path)

        with pytest.raises(ConditioningException):
            build_samples(manifest, window_cfg, Mode.TRAIN)
        assert build_samples(manifest, window_cfg, Mode.TEST)

    def test_deterministic(self, small_dataset, window_cfg):
        """Test sample construction is repeatable."""
        a = build_samples(small_dataset, window_cfg, Mode.TEST)
        b = build_samples(small_dataset, window_cfg, Mode.TEST)
        assert len(a) == len(b)
        for x, y in zip(a, b):
            assert x.features.tobytes() == y.features.tobytes()
