"""
Post-processing: window proposals to global time, temporal Soft-NMS,
top-M spot selection and offset-prior re-scoring.
"""

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Dict, Iterable, List, Sequence, Tuple, Union

import numpy as np
import orjson

from src.core.detection import Proposal
from src.core.exceptions import DetectionException, StorageException
from src.core.labeling import window_offset
from src.dataset.manifest import Manifest, ReplayEvent
from src.dataset.predictions import SpotPrediction
from src.utils.config import PostConfig


@dataclass(frozen=True)
class GlobalProposal:
    """Candidate segment of a replay in global seconds."""

    replay_id: str
    start_s: float
    end_s: float
    score: float

    def __post_init__(self) -> None:
        if not self.start_s < self.end_s:
            raise DetectionException(
                f"Empty global proposal [{self.start_s}, {self.end_s}]",
                details={"replay_id": self.replay_id}
            )
        if not math.isfinite(self.score):
            raise DetectionException("Proposal score must be finite", details={"replay_id": self.replay_id})

    def as_interval(self) -> Tuple[float, float]:
        return (self.start_s, self.end_s)


def to_global(p: Proposal) -> GlobalProposal:
    """Map a window proposal to global seconds.

    Frame coordinates follow the endpoint-aligned resize of the window. When
    the window's native row count is known, both boundaries are rounded to
    the nearest native frame boundary.

    Raises:
        DetectionException: If the proposal carries no window provenance
    """
    if p.origin is None:
        raise DetectionException("Proposal has no window provenance")
    origin = p.origin
    start = window_offset(p.start_f, origin.window_len_s, p.n_frames, origin.native_frames)
    end = window_offset(p.end_f, origin.window_len_s, p.n_frames, origin.native_frames)
    if origin.native_frames:
        fps = origin.native_frames / origin.window_len_s
        snapped = (round(start * fps) / fps, round(end * fps) / fps)
        if snapped[0] < snapped[1]:
            start, end = snapped
    start = min(max(start, 0.0), origin.window_len_s)
    end = min(max(end, 0.0), origin.window_len_s)
    return GlobalProposal(
        replay_id=origin.replay_id,
        start_s=origin.window_start_s + start,
        end_s=origin.window_start_s + end,
        score=p.score,
    )


def temporal_iou(a: Tuple[float, float], b: Tuple[float, float]) -> float:
    """Intersection over union of two intervals."""
    inter = max(0.0, min(a[1], b[1]) - max(a[0], b[0]))
    union = max(a[1], b[1]) - min(a[0], b[0])
    return inter / union if union > 0 else 0.0


def _rank_order(props: Sequence[GlobalProposal]) -> List[GlobalProposal]:
    return sorted(props, key=lambda p: (-p.score, p.start_s, p.end_s))


def soft_nms(props: Sequence[GlobalProposal], cfg: PostConfig) -> List[GlobalProposal]:
    """Temporal Soft-NMS over the proposals of one replay.

    Repeatedly selects the highest-scoring proposal (ties by start, then end)
    and decays the others by their overlap with it: gaussian
    s * exp(-iou^2 / sigma), linear s * (1 - iou) above the threshold, or
    hard suppression above the threshold. Proposals under the score floor
    are dropped.

    Returns:
        Kept proposals with decayed scores, in selection order
    """
    if not props:
        return []
    if len({p.replay_id for p in props}) > 1:
        raise DetectionException("soft_nms expects proposals of a single replay")

    starts = np.array([p.start_s for p in props])
    ends = np.array([p.end_s for p in props])
    scores = np.array([p.score for p in props], dtype=np.float64)
    alive = scores >= cfg.score_floor

    kept = []
    while alive.any():
        idx = np.flatnonzero(alive)
        best = idx[np.lexsort((ends[idx], starts[idx], -scores[idx]))[0]]
        kept.append(replace(props[best], score=float(scores[best])))
        alive[best] = False

        rest = np.flatnonzero(alive)
        if rest.size == 0:
            break
        inter = np.maximum(0.0, np.minimum(ends[rest], ends[best]) - np.maximum(starts[rest], starts[best]))
        union = np.maximum(ends[rest], ends[best]) - np.minimum(starts[rest], starts[best])
        iou = np.where(union > 0, inter / np.where(union > 0, union, 1.0), 0.0)

        if cfg.nms_method == "gaussian":
            decay = np.exp(-(iou ** 2) / cfg.sigma)
        elif cfg.nms_method == "linear":
            decay = np.where(iou > cfg.iou_threshold, 1.0 - iou, 1.0)
        else:
            decay = np.where(iou > cfg.iou_threshold, 0.0, 1.0)
        scores[rest] = scores[rest] * decay
        alive[rest] = scores[rest] >= cfg.score_floor
    return kept


def to_spots(
    props: Sequence[GlobalProposal],
    cfg: PostConfig,
    replay: ReplayEvent
) -> List[SpotPrediction]:
    """Top-M proposals as ranked spots; the segment start is the timestamp."""
    return [
        SpotPrediction(
            replay_id=replay.replay_id,
            game_id=replay.game_id,
            half=replay.half,
            rank=rank,
            time_s=p.start_s,
            end_s=p.end_s,
            confidence=p.score,
        )
        for rank, p in enumerate(_rank_order(props)[:cfg.top_m], start=1)
    ]


def group_by_replay(props: Iterable[GlobalProposal]) -> Dict[str, List[GlobalProposal]]:
    """Pool proposals of all windows per replay."""
    pooled: Dict[str, List[GlobalProposal]] = {}
    for p in props:
        pooled.setdefault(p.replay_id, []).append(p)
    return pooled


@dataclass(frozen=True)
class OffsetPrior:
    """Smoothed distribution of (replay start - live timestamp), max-normalized.

    Attributes:
        bin_s: Bin width in seconds
        weights: Value per bin, the largest is 1
    """

    bin_s: float
    weights: Tuple[float, ...]

    @property
    def max_offset_s(self) -> float:
        return self.bin_s * len(self.weights)

    @property
    def floor(self) -> float:
        """Value for offsets outside the histogram (an empty smoothed bin)."""
        return min(self.weights)

    def __call__(self, offset_s: float) -> float:
        if offset_s < 0 or offset_s >= self.max_offset_s:
            return self.floor
        return self.weights[int(offset_s // self.bin_s)]

    def to_dict(self) -> Dict:
        return {"bin_s": self.bin_s, "weights": list(self.weights)}

    @classmethod
    def from_dict(cls, data: Dict) -> "OffsetPrior":
        try:
            return cls(bin_s=float(data["bin_s"]), weights=tuple(float(w) for w in data["weights"]))
        except (KeyError, TypeError, ValueError) as e:
            raise DetectionException(f"Malformed offset prior: {e}", cause=e)


def fit_offset_prior(
    manifest: Manifest,
    bin_s: float = 2.0,
    max_offset_s: float = 120.0
) -> OffsetPrior:
    """Laplace-smoothed histogram of replay_start_s - gt_time_s.

    Raises:
        DetectionException: If no replay carries ground truth
    """
    offsets = [
        r.replay_start_s - r.gt_time_s for r in manifest.replays() if r.gt_time_s is not None
    ]
    if not offsets:
        raise DetectionException("Cannot fit an offset prior without ground truth")

    n_bins = int(math.ceil(max_offset_s / bin_s))
    counts = np.ones(n_bins)
    for offset in offsets:
        if 0 <= offset < n_bins * bin_s:
            counts[int(offset // bin_s)] += 1
    return OffsetPrior(bin_s=bin_s, weights=tuple((counts / counts.max()).tolist()))


def apply_offset_prior(
    props: Sequence[GlobalProposal],
    replay: ReplayEvent,
    prior: OffsetPrior,
    weight: float
) -> List[GlobalProposal]:
    """Blend each score with the prior of its offset before the replay.

    score * (1 - weight + weight * prior(replay_start_s - start_s)); the
    result is re-ranked.
    """
    if not 0.0 <= weight <= 1.0:
        raise DetectionException(f"Prior weight must be in [0, 1], got {weight}")
    if weight == 0.0:
        return list(props)
    rescored = [
        replace(p, score=p.score * (1.0 - weight + weight * prior(replay.replay_start_s - p.start_s)))
        for p in props
    ]
    return _rank_order(rescored)


def save_offset_prior(prior: OffsetPrior, path: Union[str, Path]) -> None:
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(orjson.dumps(prior.to_dict(), option=orjson.OPT_SORT_KEYS) + b"\n")
    except OSError as e:
        raise StorageException(f"Cannot write offset prior {path}", path=str(path), operation="write", cause=e)


def load_offset_prior(path: Union[str, Path]) -> OffsetPrior:
    path = Path(path)
    try:
        return OffsetPrior.from_dict(orjson.loads(path.read_bytes()))
    except (OSError, orjson.JSONDecodeError) as e:
        raise DetectionException(f"Cannot read offset prior {path}", cause=e, details={"path": str(path)})
