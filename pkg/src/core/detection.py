"""
Proposal scoring and generation.

Per-frame scores come from a pluggable scorer; proposals are anchors ranked
by the contrast between their mean score and the mean score of their
flanks, followed by a local boundary refinement.
"""

import math
from abc import ABC, abstractmethod
from dataclasses import dataclass, replace
from typing import Callable, List, Optional, Tuple, Union

import numpy as np

from src.core.conditioning import Sample
from src.core.exceptions import DetectionException
from src.core.labeling import FrameSpan
from src.utils.config import AnchorConfig
from src.utils.logger import get_logger


logger = get_logger(__name__)

SpanScorer = Callable[[int, int], float]


@dataclass(frozen=True)
class ProposalOrigin:
    """Window a proposal was generated in.

    Attributes:
        replay_id: Replay the window is conditioned on
        window_start_s: Window start in global seconds
        window_len_s: Window length in seconds
        native_frames: Native rows of the window before the resize, when known
    """

    replay_id: str
    window_start_s: float
    window_len_s: float
    native_frames: Optional[int] = None


@dataclass(frozen=True)
class Proposal:
    """Candidate segment in resized frame coordinates.

    Attributes:
        start_f: Start frame coordinate
        end_f: End frame coordinate
        score: Contrast clipped to [0, 1]
        contrast: Raw anchor contrast, used for ranking
        n_frames: Window length N
        origin: Window provenance, when known
    """

    start_f: float
    end_f: float
    score: float
    contrast: float
    n_frames: int
    origin: Optional[ProposalOrigin] = None

    def __post_init__(self) -> None:
        if not 0 <= self.start_f < self.end_f <= self.n_frames:
            raise DetectionException(
                f"Proposal [{self.start_f}, {self.end_f}] outside [0, {self.n_frames}]"
            )
        if not math.isfinite(self.score):
            raise DetectionException("Proposal score must be finite")

    @property
    def duration_f(self) -> float:
        return self.end_f - self.start_f


class ProposalScorer(ABC):
    """Produces one score per resized frame of a sample."""

    name = "base"

    @abstractmethod
    def frame_scores(self, sample: Sample) -> np.ndarray:
        """Per-frame scores of a sample.

        Args:
            sample: Conditioned sample

        Returns:
            N-vector of scores in [0, 1]

        Raises:
            DetectionException: If the sample does not fit the scorer
        """


def _cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = float(np.linalg.norm(a)), float(np.linalg.norm(b))
    if na == 0.0 or nb == 0.0:
        return 0.0
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def similarity_score(sample: Sample, span: FrameSpan) -> float:
    """Cosine between the replay mean and the mean window frame inside `span`.

    Raises:
        DetectionException: If the span covers no whole row
    """
    lo, hi = span.row_range()
    lo, hi = max(lo, 0), min(hi, sample.n_frames)
    if hi <= lo:
        raise DetectionException(
            f"Span [{span.start_f}, {span.end_f}] covers no frame row",
            details={"replay_id": sample.replay_id}
        )
    window_mean = sample.window_frames[lo:hi].mean(axis=0)
    return _cosine(window_mean, sample.replay_mean)


class SimilarityScorer(ProposalScorer):
    """Training-free scorer: (1 + cosine(frame, replay mean)) / 2 per frame."""

    name = "similarity"

    def frame_scores(self, sample: Sample) -> np.ndarray:
        n = sample.n_frames
        cos = [similarity_score(sample, FrameSpan(i, i + 1, n_frames=n)) for i in range(n)]
        return (1.0 + np.asarray(cos, dtype=np.float64)) / 2.0


def _flank_bounds(start: int, end: int, n_frames: int) -> Tuple[int, int, int, int]:
    margin = int(math.ceil((end - start) / 4))
    return max(start - margin, 0), start, end, min(end + margin, n_frames)


def anchor_grid(anchors: AnchorConfig, n_frames: int) -> List[Tuple[int, int]]:
    """Every (start, end) of the grid, ordered by start then duration."""
    grid = []
    for start in range(0, n_frames, anchors.start_stride_f):
        for duration in anchors.durations_f:
            if start + duration <= n_frames:
                grid.append((start, start + duration))
    return grid


def _contrasts_from_vector(
    scores: np.ndarray,
    grid: List[Tuple[int, int]]
) -> np.ndarray:
    n_frames = scores.shape[0]
    csum = np.concatenate([[0.0], np.cumsum(scores)])
    out = np.zeros(len(grid))
    for i, (start, end) in enumerate(grid):
        left, _, _, right = _flank_bounds(start, end, n_frames)
        flank_len = (start - left) + (right - end)
        if flank_len == 0:
            continue
        inside = csum[end] - csum[start]
        flank = (csum[start] - csum[left]) + (csum[right] - csum[end])
        duration = end - start
        # cross-multiplied so a constant shift cancels exactly
        out[i] = (inside * flank_len - flank * duration) / (duration * flank_len)
    return out


def _contrasts_from_scorer(
    scorer: SpanScorer,
    grid: List[Tuple[int, int]],
    n_frames: int
) -> np.ndarray:
    out = np.zeros(len(grid))
    for i, (start, end) in enumerate(grid):
        left, _, _, right = _flank_bounds(start, end, n_frames)
        weighted, flank_len = 0.0, 0
        for lo, hi in ((left, start), (end, right)):
            if hi > lo:
                weighted += scorer(lo, hi) * (hi - lo)
                flank_len += hi - lo
        if flank_len:
            out[i] = scorer(start, end) - weighted / flank_len
    return out


def span_contrast(scores: np.ndarray, start: int, end: int) -> float:
    """Anchor contrast of one integer span of a score vector."""
    scores = np.asarray(scores, dtype=np.float64)
    return float(_contrasts_from_vector(scores, [(start, end)])[0])


def generate_proposals(
    scores: Union[np.ndarray, SpanScorer],
    anchors: AnchorConfig,
    n_frames: Optional[int] = None,
    origin: Optional[ProposalOrigin] = None
) -> List[Proposal]:
    """Top-K anchors by contrast.

    Args:
        scores: N-vector of per-frame scores, or a scorer over [start, end) spans
        anchors: Anchor grid and K
        n_frames: Window length; required with a span scorer
        origin: Provenance attached to every proposal

    Returns:
        At most K proposals, sorted by contrast descending, ties by
        (start, duration)
    """
    if callable(scores):
        if n_frames is None:
            raise DetectionException("n_frames is required with a span scorer")
        grid = anchor_grid(anchors, n_frames)
        contrasts = _contrasts_from_scorer(scores, grid, n_frames)
    else:
        scores = np.asarray(scores, dtype=np.float64)
        if scores.ndim != 1:
            raise DetectionException(f"Score vector must be 1-D, got shape {scores.shape}")
        n_frames = scores.shape[0]
        grid = anchor_grid(anchors, n_frames)
        contrasts = _contrasts_from_vector(scores, grid)

    if not grid:
        return []

    starts = np.array([s for s, _ in grid])
    durations = np.array([e - s for s, e in grid])
    order = np.lexsort((durations, starts, -contrasts))[:anchors.K]
    return [
        Proposal(
            start_f=float(grid[i][0]),
            end_f=float(grid[i][1]),
            score=float(np.clip(contrasts[i], 0.0, 1.0)),
            contrast=float(contrasts[i]),
            n_frames=n_frames,
            origin=origin,
        )
        for i in order
    ]


def _best_position(candidates: range, steps: Callable[[int], float], original: int) -> int:
    best, best_step = original, steps(original)
    for pos in candidates:
        step = steps(pos)
        if step > best_step or (step == best_step and abs(pos - original) < abs(best - original)):
            best, best_step = pos, step
    return best


def _half_height_crossing(scores: np.ndarray, edge: int, radius_f: int, rising: bool) -> float:
    """Sub-frame position of the edge between rows edge - 1 and edge.

    The monotone run through the edge is followed for at most `radius_f`
    rows each way; the edge is where the linearly interpolated scores cross
    halfway between the run's ends. Row r is centred on coordinate r + 0.5.
    """
    sign = 1.0 if rising else -1.0
    oriented = sign * scores
    lo, hi = edge - 1, edge
    while lo > 0 and edge - lo < radius_f and oriented[lo - 1] < oriented[lo]:
        lo -= 1
    while hi < scores.shape[0] - 1 and hi + 1 - edge < radius_f and oriented[hi + 1] > oriented[hi]:
        hi += 1
    level = (oriented[lo] + oriented[hi]) / 2.0
    for r in range(lo, hi):
        a, b = oriented[r], oriented[r + 1]
        if a < level <= b:
            return r + 0.5 + float((level - a) / (b - a))
    return float(edge)


def refine_boundaries(proposal: Proposal, scores: np.ndarray, radius_f: int = 4) -> Proposal:
    """Move each boundary onto the strongest score edge within `radius_f` frames.

    The start goes to the largest rise score[i] - score[i-1], the end to the
    largest fall score[e-1] - score[e]; ties keep the position closest to the
    original. A boundary on a positive edge is then placed at the edge's
    half-height crossing, so boundaries may be fractional. An empty result
    returns the original proposal.
    """
    scores = np.asarray(scores, dtype=np.float64)
    n_frames = scores.shape[0]
    if radius_f <= 0:
        return proposal

    def rise(i: int) -> float:
        return float(scores[i] - scores[i - 1]) if 0 < i < n_frames else 0.0

    def fall(e: int) -> float:
        return float(scores[e - 1] - scores[e]) if 0 < e < n_frames else 0.0

    start0 = int(round(proposal.start_f))
    end0 = int(round(proposal.end_f))
    start = _best_position(
        range(max(start0 - radius_f, 0), min(start0 + radius_f, n_frames) + 1), rise, start0
    )
    end = _best_position(
        range(max(end0 - radius_f, 0), min(end0 + radius_f, n_frames) + 1), fall, end0
    )
    if start >= end:
        return proposal
    start_f = _half_height_crossing(scores, start, radius_f, True) if rise(start) > 0 else float(start)
    end_f = _half_height_crossing(scores, end, radius_f, False) if fall(end) > 0 else float(end)
    if not start_f < end_f or (start_f, end_f) == (proposal.start_f, proposal.end_f):
        return proposal

    contrast = span_contrast(scores, start, end)
    return replace(
        proposal,
        start_f=start_f,
        end_f=end_f,
        score=float(np.clip(contrast, 0.0, 1.0)),
        contrast=contrast,
    )


def detect_window(
    sample: Sample,
    scorer: ProposalScorer,
    anchors: AnchorConfig,
    open_left: bool = False,
    open_right: bool = False
) -> List[Proposal]:
    """Scored, refined proposals of one sample.

    Args:
        sample: Conditioned window
        scorer: Per-frame scorer
        anchors: Anchor grid, K and refinement radius
        open_left: The window's left edge is inside the context (a neighbor
            window overlaps it), so anchors starting at frame 0 are dropped
        open_right: Likewise for anchors ending at frame N

    Returns:
        At most K refined proposals
    """
    scores = scorer.frame_scores(sample)
    origin = ProposalOrigin(
        sample.replay_id, sample.window_start_s, sample.window_len_s, sample.native_frames
    )
    proposals = [
        p for p in generate_proposals(scores, anchors, origin=origin)
        if not (open_left and p.start_f == 0) and not (open_right and p.end_f == p.n_frames)
    ]
    return [refine_boundaries(p, scores, anchors.refine_radius_f) for p in proposals]
