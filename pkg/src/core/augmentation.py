"""
Synthetic positive samples.

The fused features of a replay's 3 s segment label are pasted over a
randomly chosen window that holds no segment label, and the result is
conditioned on the donor replay's mean.
"""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from src.core.conditioning import Mode, ReplayContext, Sample, make_sample, prepare_context
from src.core.exceptions import AugmentationException
from src.core.labeling import FrameSpan, SEGMENT_LEN_S, Segment, to_frame_span
from src.dataset.manifest import Manifest, ReplayEvent
from src.utils.config import AugmentConfig, WindowConfig
from src.utils.logger import get_logger


logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class SegmentFeatures:
    """Fused native-rate frames of one replay's segment label."""

    replay: ReplayEvent
    frames: np.ndarray = field(repr=False)
    replay_mean: np.ndarray = field(repr=False)

    @property
    def replay_id(self) -> str:
        return self.replay.replay_id


@dataclass(frozen=True, eq=False)
class BackgroundWindow:
    """A label-free training window and where it came from."""

    game_id: str
    half: int
    window_start_s: float
    window_len_s: float
    frames: np.ndarray = field(repr=False)

    @property
    def provenance(self) -> str:
        return f"{self.game_id}/half{self.half}@{self.window_start_s:g}"


def _train_contexts(
    manifest: Manifest,
    cfg: WindowConfig,
    streams: Optional[Sequence[str]]
) -> List[ReplayContext]:
    contexts = []
    for replay in manifest.replays():
        if replay.gt_time_s is None:
            raise AugmentationException(
                f"Replay {replay.replay_id} has no gt_time_s",
                details={"replay_id": replay.replay_id}
            )
        contexts.append(prepare_context(manifest, replay, Mode.TRAIN, cfg, streams))
    return contexts


def _segment_rows(ctx: ReplayContext) -> Tuple[int, int]:
    length = int(round(SEGMENT_LEN_S * ctx.fps))
    lo = int(math.floor(ctx.replay.gt_time_s * ctx.fps + 1e-9))
    return lo, lo + length


def harvest_segment_features(
    manifest: Manifest,
    cfg: WindowConfig,
    streams: Optional[Sequence[str]] = None,
    contexts: Optional[Sequence[ReplayContext]] = None
) -> List[SegmentFeatures]:
    """Fused frames covering each replay's segment label, at native fps.

    Rows [floor(gt * fps), floor(gt * fps) + round(3 * fps)) of the half,
    normalized with the replay's own training-context statistics.

    Raises:
        AugmentationException: If a segment runs past the end of its track
    """
    if contexts is None:
        contexts = _train_contexts(manifest, cfg, streams)

    harvested = []
    for ctx in contexts:
        lo, hi = _segment_rows(ctx)
        n_frames = ctx.tracks[0].n_frames
        if hi > n_frames:
            raise AugmentationException(
                f"Segment of {ctx.replay.replay_id} at rows [{lo}, {hi}) outside track of {n_frames} frames",
                details={"replay_id": ctx.replay.replay_id, "rows": [lo, hi]}
            )
        harvested.append(SegmentFeatures(ctx.replay, ctx.fused_rows(lo, hi), ctx.replay_mean))
    return harvested


def build_background_pool(
    manifest: Manifest,
    cfg: WindowConfig,
    streams: Optional[Sequence[str]] = None,
    contexts: Optional[Sequence[ReplayContext]] = None,
    min_rows: int = 1
) -> List[BackgroundWindow]:
    """Training windows disjoint from every segment label of their half.

    Windows that only touch a segment at an endpoint count as disjoint.
    Overlapping contexts of one half contribute each window once.
    """
    if contexts is None:
        contexts = _train_contexts(manifest, cfg, streams)

    segments: Dict[Tuple[str, int], List[Segment]] = {}
    for ctx in contexts:
        segments.setdefault((ctx.replay.game_id, ctx.replay.half), []).append(ctx.segment)

    pool: List[BackgroundWindow] = []
    seen = set()
    for ctx in contexts:
        key = (ctx.replay.game_id, ctx.replay.half)
        for start_s, length_s in ctx.windows(cfg):
            if (key, round(start_s, 6), round(length_s, 6)) in seen:
                continue
            if any(seg.intersects(start_s, start_s + length_s) for seg in segments[key]):
                continue
            rows = ctx.window_frames(start_s - ctx.slice_start_s, length_s)
            if rows.shape[0] < min_rows:
                continue
            seen.add((key, round(start_s, 6), round(length_s, 6)))
            pool.append(BackgroundWindow(key[0], key[1], start_s, length_s, rows))
    return pool


def sample_background(
    pool: Sequence[BackgroundWindow],
    rng: np.random.Generator
) -> BackgroundWindow:
    """Uniformly pick one background window.

    Raises:
        AugmentationException: If no label-free window exists
    """
    if not pool:
        raise AugmentationException("No training window is free of segment labels")
    return pool[int(rng.integers(0, len(pool)))]


def synthesize_positive(
    background: np.ndarray,
    segment: np.ndarray,
    rng: np.random.Generator
) -> Tuple[np.ndarray, FrameSpan]:
    """Replace a random run of background rows with the segment rows.

    Args:
        background: T_w x C window frames
        segment: L x C segment frames
        rng: Random generator; one integer is drawn

    Returns:
        (spliced frames, label [u, u + L) in native frames of the window)

    Raises:
        AugmentationException: If the segment is longer than the window or dims differ
    """
    background = np.asarray(background)
    segment = np.asarray(segment)
    t_w, length = background.shape[0], segment.shape[0]
    if length > t_w:
        raise AugmentationException(
            f"Segment of {length} frames does not fit a {t_w}-frame window",
            details={"segment_frames": length, "window_frames": t_w}
        )
    if background.shape[1:] != segment.shape[1:]:
        raise AugmentationException(
            f"Channel mismatch: background {background.shape}, segment {segment.shape}"
        )

    u = int(rng.integers(0, t_w - length + 1))
    frames = np.array(background, dtype=np.float64, copy=True)
    frames[u:u + length] = segment
    return frames, FrameSpan(float(u), float(u + length), n_frames=t_w)


def augment_dataset(
    samples: Sequence[Sample],
    manifest: Manifest,
    window_cfg: WindowConfig,
    augment_cfg: AugmentConfig,
    streams: Optional[Sequence[str]] = None
) -> List[Sample]:
    """Append floor(ratio * n_real) synthetic positives to `samples`.

    Synthetic sample k draws from its own generator seeded with
    (seed, k): a donor segment, then a background window, then the paste
    offset. The sample is conditioned on the donor's replay mean.

    Raises:
        AugmentationException: If no donor or background is available
    """
    samples = list(samples)
    n_real = sum(1 for s in samples if not s.is_synthetic)
    n_synthetic = int(math.floor(augment_cfg.ratio * n_real))
    if n_synthetic == 0:
        return samples

    contexts = _train_contexts(manifest, window_cfg, streams)
    donors = harvest_segment_features(manifest, window_cfg, contexts=contexts)
    if not donors:
        raise AugmentationException("No segment features to paste")
    min_rows = max(d.frames.shape[0] for d in donors)
    pool = build_background_pool(manifest, window_cfg, contexts=contexts, min_rows=min_rows)

    synthetic = []
    for k in range(n_synthetic):
        rng = np.random.default_rng([augment_cfg.seed, k])
        donor = donors[int(rng.integers(0, len(donors)))]
        background = sample_background(pool, rng)
        frames, span = synthesize_positive(background.frames, donor.frames, rng)

        fps = background.frames.shape[0] / background.window_len_s
        pasted = Segment(
            background.window_start_s + span.start_f / fps,
            background.window_start_s + span.end_f / fps,
            donor.replay.label
        )
        label = to_frame_span(
            pasted,
            background.window_start_s,
            background.window_len_s,
            window_cfg.resize_len,
            frames.shape[0],
        )
        synthetic.append(make_sample(
            donor.replay,
            frames,
            background.window_start_s,
            background.window_len_s,
            [label],
            donor.replay_mean,
            window_cfg,
            is_synthetic=True,
            background=background.provenance,
        ))

    logger.info(
        "samples_augmented",
        real=n_real,
        synthetic=len(synthetic),
        donors=len(donors),
        backgrounds=len(pool)
    )
    return samples + synthetic
