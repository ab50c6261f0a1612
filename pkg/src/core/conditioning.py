"""
Feature conditioning: context extraction before a replay, sliding windows,
mean replay features, per-frame concatenation, temporal resize and
two-stream fusion.
"""

from dataclasses import dataclass, field
from enum import Enum
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np

from src.core.exceptions import ConditioningException, LabelingException
from src.core.labeling import FrameSpan, Segment, make_segment_label, to_frame_span
from src.dataset.features import FeatureTrack
from src.dataset.manifest import Manifest, ReplayEvent
from src.utils.config import WindowConfig
from src.utils.logger import get_logger


logger = get_logger(__name__)

_EPS = 1e-9


class Mode(Enum):
    """Context selection mode."""

    TRAIN = "train"
    TEST = "test"


def _mode(mode: Union[Mode, str]) -> Mode:
    try:
        return Mode(mode.value if isinstance(mode, Mode) else mode)
    except ValueError:
        raise ConditioningException(f"Unknown mode {mode!r}; expected 'train' or 'test'")


@dataclass(frozen=True, eq=False)
class Sample:
    """A conditioned, resized window.

    Attributes:
        replay_id: Replay whose mean conditions the window
        game_id: Game of the replay
        half: Half of the replay
        window_start_s: Window start in global seconds
        window_len_s: Window length in seconds
        features: N x 2C matrix; leading C channels are window frames,
            trailing C channels repeat the replay mean
        labels: Segment labels in resized frame coordinates
        is_synthetic: True for pasted positives
        replay_mean: The C-vector used for conditioning
        background: For synthetic samples, "game/half@start" of the background window
        native_frames: Native rows of the window before the resize (None: N)
    """

    replay_id: str
    game_id: str
    half: int
    window_start_s: float
    window_len_s: float
    features: np.ndarray = field(repr=False)
    labels: Tuple[FrameSpan, ...] = ()
    is_synthetic: bool = False
    replay_mean: np.ndarray = field(default=None, repr=False)
    background: Optional[str] = None
    native_frames: Optional[int] = None

    def __post_init__(self) -> None:
        features = np.asarray(self.features)
        if features.ndim != 2 or features.shape[1] % 2:
            raise ConditioningException(
                f"Sample features must be N x 2C, got {features.shape}", replay_id=self.replay_id
            )
        if not np.isfinite(features).all():
            raise ConditioningException("Sample features must be finite", replay_id=self.replay_id)
        object.__setattr__(self, "labels", tuple(self.labels))
        if self.replay_mean is None:
            object.__setattr__(self, "replay_mean", features[0, self.channels:].copy())

    @property
    def n_frames(self) -> int:
        return int(self.features.shape[0])

    @property
    def channels(self) -> int:
        """Channel count C of the window half (features have 2C)."""
        return int(self.features.shape[1] // 2)

    @property
    def window_frames(self) -> np.ndarray:
        return self.features[:, :self.channels]


def extract_context(
    track: FeatureTrack,
    replay: ReplayEvent,
    mode: Union[Mode, str],
    cfg: WindowConfig
) -> Tuple[FeatureTrack, float]:
    """Frames preceding a replay.

    Args:
        track: Feature track of the replay's half
        replay: Replay event
        mode: train (120 s context) or test (60 s context)
        cfg: Window configuration

    Returns:
        (view of the frames covering [max(0, start - C), start), left edge in seconds)

    Raises:
        ConditioningException: If the context is empty or the replay is from another half
    """
    mode = _mode(mode)
    if track.game_id and (track.game_id != replay.game_id or track.half != replay.half):
        raise ConditioningException(
            f"Replay {replay.replay_id} belongs to {replay.game_id}/half{replay.half}, "
            f"track is {track.game_id}/half{track.half}",
            replay_id=replay.replay_id
        )
    if replay.replay_start_s <= 0:
        raise ConditioningException(
            f"Replay {replay.replay_id} starts at {replay.replay_start_s}s: empty context",
            replay_id=replay.replay_id
        )

    context_s = cfg.train_context_s if mode is Mode.TRAIN else cfg.test_context_s
    lo, hi = track.frame_range(max(0.0, replay.replay_start_s - context_s), replay.replay_start_s)
    if hi <= lo:
        raise ConditioningException(
            f"Replay {replay.replay_id}: no frames before {replay.replay_start_s}s",
            replay_id=replay.replay_id
        )
    return track.slice_frames(lo, hi), lo / track.fps


def enumerate_windows(total_len_s: float, cfg: WindowConfig) -> List[float]:
    """Window starts (relative seconds) covering [0, total_len_s].

    Regular starts at multiples of the stride while the window fits, plus a
    final window flush with the end; a span shorter than one window is a
    single window of its own length.
    """
    if total_len_s <= 0:
        raise ConditioningException(f"Cannot window a span of {total_len_s}s")
    if total_len_s <= cfg.window_len_s + _EPS:
        return [0.0]

    starts = []
    k = 0
    while k * cfg.stride_s + cfg.window_len_s <= total_len_s + _EPS:
        starts.append(k * cfg.stride_s)
        k += 1
    tail = total_len_s - cfg.window_len_s
    if starts[-1] < tail - _EPS:
        starts.append(tail)
    return starts


def window_length(total_len_s: float, cfg: WindowConfig) -> float:
    """Length of every window of a span (shorter spans form one short window)."""
    return min(cfg.window_len_s, total_len_s)


def pool_replay_mean(replay_frames: np.ndarray) -> np.ndarray:
    """Mean over time of the replay frames.

    Raises:
        ConditioningException: If the replay span holds no frames
    """
    replay_frames = np.asarray(replay_frames, dtype=np.float64)
    if replay_frames.ndim != 2 or replay_frames.shape[0] < 1:
        raise ConditioningException("Empty replay span")
    return replay_frames.mean(axis=0)


def condition_window(window_frames: np.ndarray, replay_mean: np.ndarray) -> np.ndarray:
    """Append the replay mean to every frame (T x D -> T x 2D).

    Raises:
        ConditioningException: On dimension mismatch
    """
    window_frames = np.asarray(window_frames, dtype=np.float64)
    replay_mean = np.asarray(replay_mean, dtype=np.float64)
    if window_frames.ndim != 2 or replay_mean.shape != (window_frames.shape[1],):
        raise ConditioningException(
            f"Cannot condition frames {window_frames.shape} on mean {replay_mean.shape}"
        )
    tiled = np.broadcast_to(replay_mean, window_frames.shape)
    return np.concatenate([window_frames, tiled], axis=1)


def resize_temporal(frames: np.ndarray, n: int) -> np.ndarray:
    """Endpoint-aligned linear interpolation along time to `n` rows.

    Output row i samples the input at position i * (T - 1) / (n - 1); a
    single input row is replicated.
    """
    frames = np.asarray(frames, dtype=np.float64)
    if frames.ndim != 2 or frames.shape[0] < 1:
        raise ConditioningException(f"Cannot resize matrix of shape {frames.shape}")
    if n < 2:
        raise ConditioningException(f"Resize length must be >= 2, got {n}")

    t = frames.shape[0]
    if t == 1:
        return np.repeat(frames, n, axis=0)

    pos = np.arange(n, dtype=np.float64) * (t - 1) / (n - 1)
    lo = np.minimum(np.floor(pos).astype(np.int64), t - 2)
    w = (pos - lo)[:, None]
    return (1.0 - w) * frames[lo] + w * frames[lo + 1]


@dataclass(frozen=True, eq=False)
class StreamNormalizer:
    """Per-stream, per-channel z-normalization statistics."""

    means: Tuple[np.ndarray, ...]
    stds: Tuple[np.ndarray, ...]

    @classmethod
    def fit(cls, per_stream: Sequence[np.ndarray]) -> "StreamNormalizer":
        """Fit statistics over the frames of each stream.

        Raises:
            ConditioningException: If no streams are given or their lengths differ
        """
        per_stream = [np.asarray(s, dtype=np.float64) for s in per_stream]
        _check_streams(per_stream)
        means = tuple(s.mean(axis=0) for s in per_stream)
        stds = tuple(s.std(axis=0) for s in per_stream)
        # zero-variance channels are only mean-shifted
        stds = tuple(np.where(sd > 0, sd, 1.0) for sd in stds)
        return cls(means, stds)

    def transform(self, per_stream: Sequence[np.ndarray]) -> np.ndarray:
        """Normalize each stream and concatenate along channels."""
        per_stream = [np.asarray(s, dtype=np.float64) for s in per_stream]
        _check_streams(per_stream)
        if len(per_stream) != len(self.means):
            raise ConditioningException(
                f"Normalizer fitted on {len(self.means)} streams, got {len(per_stream)}"
            )
        parts = []
        for frames, mean, std in zip(per_stream, self.means, self.stds):
            if frames.shape[1] != mean.shape[0]:
                raise ConditioningException(
                    f"Stream dim {frames.shape[1]} does not match fitted dim {mean.shape[0]}"
                )
            parts.append((frames - mean) / std)
        return np.concatenate(parts, axis=1)


def _check_streams(per_stream: Sequence[np.ndarray]) -> None:
    if not per_stream:
        raise ConditioningException("No feature streams to fuse")
    lengths = {s.shape[0] for s in per_stream}
    if len(lengths) != 1 or any(s.ndim != 2 for s in per_stream):
        raise ConditioningException(
            f"Streams must be 2-D with equal length, got shapes {[s.shape for s in per_stream]}"
        )


def fuse_streams(per_stream: Sequence[np.ndarray]) -> np.ndarray:
    """Z-normalize each stream per channel, then concatenate (T x sum C_k)."""
    return StreamNormalizer.fit(per_stream).transform(per_stream)


@dataclass(frozen=True, eq=False)
class ReplayContext:
    """Fused context frames of one replay, with its replay mean.

    Attributes:
        replay: The replay event
        frames: Fused context frames (T x C)
        slice_start_s: Global second of the first context frame
        fps: Native frame rate
        replay_mean: Replay mean in the context's normalized coordinates
        half_duration_s: Duration of the replay's half
        normalizer: Statistics fitted on the context
        tracks: Source tracks, in fusion order
    """

    replay: ReplayEvent
    frames: np.ndarray = field(repr=False)
    slice_start_s: float
    fps: float
    replay_mean: np.ndarray = field(repr=False)
    half_duration_s: float
    normalizer: StreamNormalizer = field(repr=False)
    tracks: Tuple[FeatureTrack, ...] = field(repr=False)

    @property
    def total_len_s(self) -> float:
        return self.frames.shape[0] / self.fps

    @property
    def segment(self) -> Optional[Segment]:
        """3 s segment label of the replay, when ground truth is known."""
        if self.replay.gt_time_s is None:
            return None
        return make_segment_label(self.replay.gt_time_s, self.half_duration_s, self.replay.label)

    def window_frames(self, start_s: float, length_s: float) -> np.ndarray:
        """Native frames of a window given in context-relative seconds."""
        lo = int(np.floor(start_s * self.fps + 0.5))
        hi = min(lo + int(np.floor(length_s * self.fps + 0.5)), self.frames.shape[0])
        return self.frames[lo:hi]

    def windows(self, cfg: WindowConfig) -> List[Tuple[float, float]]:
        """(global start, length) of every window of the context."""
        length = window_length(self.total_len_s, cfg)
        return [
            (self.slice_start_s + start, length)
            for start in enumerate_windows(self.total_len_s, cfg)
        ]

    def fused_rows(self, lo: int, hi: int) -> np.ndarray:
        """Track rows [lo, hi) of the whole half, fused with the context statistics."""
        return self.normalizer.transform([track.frames[lo:hi] for track in self.tracks])


def prepare_context(
    manifest: Manifest,
    replay: ReplayEvent,
    mode: Union[Mode, str],
    cfg: WindowConfig,
    streams: Optional[Sequence[str]] = None
) -> ReplayContext:
    """Extract, fuse and normalize the context of one replay.

    The replay frames are normalized with the context statistics before
    pooling, so the replay mean lives in the same coordinates as the frames.
    """
    tracks = manifest.load_tracks(replay.game_id, replay.half, streams)
    views = [extract_context(track, replay, mode, cfg) for track in tracks]
    slice_start_s = views[0][1]

    normalizer = StreamNormalizer.fit([view.frames for view, _ in views])
    context = normalizer.transform([view.frames for view, _ in views])

    lo, hi = tracks[0].frame_range(replay.replay_start_s, replay.replay_end_s)
    if hi <= lo:
        raise ConditioningException(
            f"Replay {replay.replay_id} covers no frames", replay_id=replay.replay_id
        )
    replay_frames = normalizer.transform([track.frames[lo:hi] for track in tracks])

    return ReplayContext(
        replay=replay,
        frames=context,
        slice_start_s=slice_start_s,
        fps=tracks[0].fps,
        replay_mean=pool_replay_mean(replay_frames),
        half_duration_s=manifest.get_half(replay.game_id, replay.half).duration_s,
        normalizer=normalizer,
        tracks=tuple(tracks),
    )


def make_sample(
    replay: ReplayEvent,
    window_frames: np.ndarray,
    window_start_s: float,
    window_len_s: float,
    labels: Sequence[FrameSpan],
    replay_mean: np.ndarray,
    cfg: WindowConfig,
    is_synthetic: bool = False,
    background: Optional[str] = None
) -> Sample:
    """Resize window frames to N rows and condition them on a replay mean."""
    # conditioning after the resize keeps the trailing channels exactly constant
    features = condition_window(resize_temporal(window_frames, cfg.resize_len), replay_mean)
    return Sample(
        replay_id=replay.replay_id,
        game_id=replay.game_id,
        half=replay.half,
        window_start_s=window_start_s,
        window_len_s=window_len_s,
        features=features,
        labels=tuple(labels),
        is_synthetic=is_synthetic,
        replay_mean=np.asarray(replay_mean, dtype=np.float64).copy(),
        background=background,
        native_frames=int(np.asarray(window_frames).shape[0]),
    )


def _window_labels(
    segment: Optional[Segment],
    start_s: float,
    length_s: float,
    n_native: int,
    cfg: WindowConfig
) -> List[FrameSpan]:
    if segment is None or not segment.intersects(start_s, start_s + length_s):
        return []
    try:
        return [to_frame_span(segment, start_s, length_s, cfg.resize_len, n_native)]
    except LabelingException:
        # the segment ends inside the margin before the first resized row
        return []


def samples_from_context(ctx: ReplayContext, cfg: WindowConfig, mode: Union[Mode, str]) -> List[Sample]:
    """Windowed samples of one context; train mode keeps labeled windows only."""
    mode = _mode(mode)
    segment = ctx.segment
    samples = []
    for start_s, length_s in ctx.windows(cfg):
        rows = ctx.window_frames(start_s - ctx.slice_start_s, length_s)
        labels = _window_labels(segment, start_s, length_s, rows.shape[0], cfg)
        if mode is Mode.TRAIN and not labels:
            continue
        samples.append(make_sample(ctx.replay, rows, start_s, length_s, labels, ctx.replay_mean, cfg))
    return samples


def build_samples(
    manifest: Manifest,
    cfg: WindowConfig,
    mode: Union[Mode, str],
    streams: Optional[Sequence[str]] = None
) -> List[Sample]:
    """Conditioned samples for every replay of the manifest.

    Samples are ordered by replay_id, then window start.

    Raises:
        ConditioningException: If train mode meets a replay without ground truth
    """
    mode = _mode(mode)
    samples: List[Sample] = []
    for replay in manifest.replays():
        if mode is Mode.TRAIN and replay.gt_time_s is None:
            raise ConditioningException(
                f"Replay {replay.replay_id} has no gt_time_s; required in train mode",
                replay_id=replay.replay_id
            )
        ctx = prepare_context(manifest, replay, mode, cfg, streams)
        samples.extend(samples_from_context(ctx, cfg, mode))

    logger.info(
        "samples_built",
        mode=mode.value,
        replays=len(manifest.replays()),
        samples=len(samples),
        labeled=sum(1 for s in samples if s.labels)
    )
    return samples
