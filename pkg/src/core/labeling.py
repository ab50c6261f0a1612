"""
Segment-label geometry.

Builds the 3 s grounding segment and the two atomic label styles around a
timestamp, and converts between global seconds, window seconds and resized
frame coordinates.
"""

import math
from dataclasses import dataclass
from typing import Optional, Tuple

from src.core.exceptions import LabelingException


SEGMENT_LEN_S = 3.0


@dataclass(frozen=True)
class Segment:
    """Time interval in seconds.

    Attributes:
        start_s: Start time in seconds
        end_s: End time in seconds
        label: Class name
    """

    start_s: float
    end_s: float
    label: str = "action"

    def __post_init__(self) -> None:
        if not (math.isfinite(self.start_s) and math.isfinite(self.end_s)):
            raise LabelingException(
                "Segment bounds must be finite",
                details={"start_s": self.start_s, "end_s": self.end_s}
            )
        if not self.start_s < self.end_s:
            raise LabelingException(
                f"Empty segment [{self.start_s}, {self.end_s}]",
                details={"start_s": self.start_s, "end_s": self.end_s}
            )

    @property
    def duration_s(self) -> float:
        return self.end_s - self.start_s

    def as_interval(self) -> Tuple[float, float]:
        return (self.start_s, self.end_s)

    def intersects(self, start_s: float, end_s: float) -> bool:
        """True when the open intersection with [start_s, end_s) is nonempty."""
        return self.start_s < end_s and self.end_s > start_s


@dataclass(frozen=True)
class FrameSpan:
    """Interval in (possibly fractional) frame coordinates of a window of `n_frames`.

    Attributes:
        start_f: Start coordinate
        end_f: End coordinate
        label: Class name
        n_frames: Window length in frames
    """

    start_f: float
    end_f: float
    label: str = "action"
    n_frames: float = 100

    def __post_init__(self) -> None:
        if not 0 <= self.start_f < self.end_f <= self.n_frames:
            raise LabelingException(
                f"Frame span [{self.start_f}, {self.end_f}] outside [0, {self.n_frames}]",
                details={"start_f": self.start_f, "end_f": self.end_f, "n_frames": self.n_frames}
            )

    def row_range(self) -> Tuple[int, int]:
        """Rows fully inside the span: [ceil(start_f), floor(end_f))."""
        return int(math.ceil(self.start_f)), int(math.floor(self.end_f))


def _check_inside_half(t: float, half_duration_s: float, name: str = "t") -> None:
    if not 0 <= t < half_duration_s:
        raise LabelingException(
            f"{name}={t} outside the half [0, {half_duration_s})",
            details={name: t, "half_duration_s": half_duration_s}
        )


def _clipped(start_s: float, end_s: float, half_duration_s: float, label: str) -> Segment:
    return Segment(max(start_s, 0.0), min(end_s, half_duration_s), label)


def make_segment_label(
    gt_time_s: float,
    half_duration_s: float,
    label: str = "action",
    length_s: float = SEGMENT_LEN_S
) -> Segment:
    """Segment whose starting second is the grounding timestamp.

    Args:
        gt_time_s: Ground-truth live timestamp
        half_duration_s: Duration of the game half
        label: Class name
        length_s: Segment length (3 s)

    Returns:
        [gt_time_s, gt_time_s + length_s] clipped to the half

    Raises:
        LabelingException: If gt_time_s is outside the half
    """
    _check_inside_half(gt_time_s, half_duration_s, "gt_time_s")
    return Segment(gt_time_s, min(gt_time_s + length_s, half_duration_s), label)


def atomic_6s(t: float, half_duration_s: float, label: str = "action") -> Segment:
    """Atomic "6s" label: 2 s before to 4 s after the timestamp."""
    _check_inside_half(t, half_duration_s)
    return _clipped(t - 2.0, t + 4.0, half_duration_s, label)


def atomic_3s_style1(
    t: float,
    half_duration_s: float,
    label: str = "action"
) -> Tuple[Segment, Segment]:
    """Atomic "3s style1" labels: 3 s before the timestamp and 3 s after it.

    Raises:
        LabelingException: If either side would be empty after clipping
    """
    if not 0 < t < half_duration_s:
        raise LabelingException(
            f"t={t} leaves an empty side in (0, {half_duration_s})",
            details={"t": t, "half_duration_s": half_duration_s}
        )
    before = _clipped(t - 3.0, t, half_duration_s, label)
    after = _clipped(t, t + 3.0, half_duration_s, label)
    return before, after


def frame_coordinate(
    offset_s: float,
    window_len_s: float,
    n_frames: int,
    native_frames: Optional[int] = None
) -> float:
    """Resized frame coordinate of a window-relative time (unclipped).

    Row i of a resized window samples native row i * (T - 1) / (N - 1), and
    native row j covers [j, j + 1) / fps, so row i is centred on coordinate
    i + 0.5 and the map is affine. Without `native_frames` (T = N) it reduces
    to offset_s * N / window_len_s.
    """
    native = native_frames or n_frames
    if native == n_frames or native < 2 or n_frames < 2:
        return offset_s * n_frames / window_len_s
    native_pos = offset_s * native / window_len_s - 0.5
    return native_pos * (n_frames - 1) / (native - 1) + 0.5


def window_offset(
    coord: float,
    window_len_s: float,
    n_frames: int,
    native_frames: Optional[int] = None
) -> float:
    """Inverse of frame_coordinate."""
    native = native_frames or n_frames
    if native == n_frames or native < 2 or n_frames < 2:
        return coord * window_len_s / n_frames
    native_pos = (coord - 0.5) * (native - 1) / (n_frames - 1) + 0.5
    return native_pos * window_len_s / native


def to_frame_span(
    seg: Segment,
    window_start_s: float,
    window_len_s: float,
    n_frames: int,
    native_frames: Optional[int] = None
) -> FrameSpan:
    """Map a segment into the resized frame coordinates of one window.

    Args:
        seg: Segment in global seconds
        window_start_s: Window start in global seconds
        window_len_s: Window length in seconds
        n_frames: Resized length N
        native_frames: Native rows of the window before the resize

    Raises:
        LabelingException: If the segment covers no part of the resized window
    """
    window_end_s = window_start_s + window_len_s
    details = {"segment": seg.as_interval(), "window": (window_start_s, window_end_s)}
    if not seg.intersects(window_start_s, window_end_s):
        raise LabelingException("Segment does not intersect window", details=details)

    def coord(t: float) -> float:
        f = frame_coordinate(t - window_start_s, window_len_s, n_frames, native_frames)
        return min(max(f, 0.0), float(n_frames))

    start_f, end_f = coord(seg.start_s), coord(seg.end_s)
    if not start_f < end_f:
        raise LabelingException("Segment only touches the window margin", details=details)
    return FrameSpan(start_f, end_f, seg.label, n_frames)


def from_frame_span(
    span: FrameSpan,
    window_start_s: float,
    window_len_s: float,
    native_frames: Optional[int] = None
) -> Segment:
    """Inverse of to_frame_span for spans inside the window."""
    n_frames = int(span.n_frames)
    return Segment(
        window_start_s + window_offset(span.start_f, window_len_s, n_frames, native_frames),
        window_start_s + window_offset(span.end_f, window_len_s, n_frames, native_frames),
        span.label
    )


def seconds_to_frames(seconds: float, fps: float) -> int:
    """Nearest whole number of native frames spanning `seconds`."""
    return int(math.floor(seconds * fps + 0.5))
