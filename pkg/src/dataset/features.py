"""
RGF1 feature tracks.

An RGF1 file is a 20-byte little-endian header (magic "RGF1", u32 version,
u32 T, u32 D, f32 fps) followed by T*D float32 values, frame-major.
"""

import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Tuple, Union

import numpy as np

from src.core.exceptions import FeatureFormatException, StorageException


MAGIC = b"RGF1"
VERSION = 1
HEADER = struct.Struct("<4sIIIf")
VALUE_DTYPE = np.dtype("<f4")

PathLike = Union[str, Path]


@dataclass(frozen=True)
class TrackHeader:
    """Parsed RGF1 header."""

    version: int
    n_frames: int
    dim: int
    fps: float


@dataclass(frozen=True, eq=False)
class FeatureTrack:
    """Dense T x D feature matrix for one game half and one stream.

    Attributes:
        game_id: Game identifier
        half: Game half (1 or 2)
        stream: Stream name (e.g. "3s_style1", "6s")
        fps: Frames per second
        frames: float32 matrix of shape (T, D), read-only
    """

    game_id: str
    half: int
    stream: str
    fps: float
    frames: np.ndarray = field(repr=False)

    def __post_init__(self) -> None:
        frames = np.asarray(self.frames, dtype=np.float32)
        if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
            raise FeatureFormatException(
                f"Track frames must be a non-empty 2-D matrix, got shape {frames.shape}",
                actual=list(frames.shape)
            )
        if not np.isfinite(frames).all():
            bad = int(np.flatnonzero(~np.isfinite(frames.ravel()))[0])
            raise FeatureFormatException(
                "Track contains non-finite values",
                offset=HEADER.size + 4 * bad,
                details={"value_index": bad}
            )
        if not (np.isfinite(self.fps) and self.fps > 0):
            raise FeatureFormatException("fps must be positive", actual=self.fps)
        if frames.flags.writeable:
            frames = frames.copy() if frames is self.frames else frames
            frames.setflags(write=False)
        object.__setattr__(self, "frames", frames)

    @property
    def n_frames(self) -> int:
        return int(self.frames.shape[0])

    @property
    def dim(self) -> int:
        return int(self.frames.shape[1])

    @property
    def duration_s(self) -> float:
        return self.n_frames / self.fps

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, FeatureTrack):
            return NotImplemented
        return (
            self.game_id == other.game_id
            and self.half == other.half
            and self.stream == other.stream
            and self.fps == other.fps
            and self.frames.shape == other.frames.shape
            and self.frames.tobytes() == other.frames.tobytes()
        )

    def frame_range(self, start_s: float, end_s: float) -> Tuple[int, int]:
        """Indices [lo, hi) of the frames overlapping [start_s, end_s), clipped to the track."""
        lo = int(np.floor(start_s * self.fps + 1e-9))
        hi = int(np.ceil(end_s * self.fps - 1e-9))
        return max(lo, 0), min(hi, self.n_frames)

    def slice_frames(self, lo: int, hi: int) -> "FeatureTrack":
        """View of frames [lo, hi) as a new track sharing memory."""
        return FeatureTrack(self.game_id, self.half, self.stream, self.fps, self.frames[lo:hi])


def read_header(path: PathLike) -> TrackHeader:
    """Read and validate the RGF1 header only.

    Raises:
        FeatureFormatException: If the header is malformed
    """
    path = Path(path)
    try:
        with open(path, "rb") as f:
            raw = f.read(HEADER.size)
    except OSError as e:
        raise FeatureFormatException(
            f"Cannot read feature file: {path}", path=str(path), offset=0, cause=e
        )
    return _parse_header(raw, path)


def _parse_header(raw: bytes, path: Path) -> TrackHeader:
    if len(raw) < HEADER.size:
        raise FeatureFormatException(
            f"Truncated header in {path}: expected {HEADER.size} bytes, got {len(raw)}",
            path=str(path),
            offset=len(raw),
            expected=HEADER.size,
            actual=len(raw)
        )
    magic, version, n_frames, dim, fps = HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FeatureFormatException(
            f"Bad magic in {path}: {magic!r}",
            path=str(path),
            offset=0,
            expected=MAGIC.decode(),
            actual=magic.hex()
        )
    if version != VERSION:
        raise FeatureFormatException(
            f"Unsupported RGF version {version} in {path}",
            path=str(path), offset=4, expected=VERSION, actual=version
        )
    if n_frames == 0 or dim == 0:
        raise FeatureFormatException(
            f"Zero-sized track in {path}: T={n_frames}, D={dim}",
            path=str(path),
            offset=8 if n_frames == 0 else 12,
            actual={"T": n_frames, "D": dim}
        )
    if not (np.isfinite(fps) and fps > 0):
        raise FeatureFormatException(
            f"Invalid fps {fps} in {path}", path=str(path), offset=16, actual=fps
        )
    return TrackHeader(version, n_frames, dim, float(fps))


def read_feature_track(
    path: PathLike,
    game_id: str = "",
    half: int = 1,
    stream: Optional[str] = None
) -> FeatureTrack:
    """Read an RGF1 file into a FeatureTrack.

    Args:
        path: RGF1 file
        game_id: Game identifier to attach
        half: Game half to attach
        stream: Stream name (defaults to the file stem)

    Returns:
        FeatureTrack holding exactly the stored values

    Raises:
        FeatureFormatException: On bad magic, truncation, non-finite values or zero T/D
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as e:
        raise FeatureFormatException(
            f"Cannot read feature file: {path}", path=str(path), offset=0, cause=e
        )

    header = _parse_header(raw, path)
    expected = HEADER.size + 4 * header.n_frames * header.dim
    if len(raw) != expected:
        raise FeatureFormatException(
            f"Payload size mismatch in {path}: expected {expected} bytes, got {len(raw)}",
            path=str(path),
            offset=min(len(raw), expected),
            expected=expected,
            actual=len(raw)
        )

    values = np.frombuffer(raw, dtype=VALUE_DTYPE, offset=HEADER.size)
    finite = np.isfinite(values)
    if not finite.all():
        bad = int(np.flatnonzero(~finite)[0])
        raise FeatureFormatException(
            f"Non-finite value in {path} at value index {bad}",
            path=str(path),
            offset=HEADER.size + 4 * bad
        )

    frames = values.reshape(header.n_frames, header.dim).astype(np.float32)
    return FeatureTrack(
        game_id=game_id,
        half=half,
        stream=stream if stream is not None else path.stem,
        fps=header.fps,
        frames=frames
    )


def encode_feature_track(frames: np.ndarray, fps: float) -> bytes:
    """Encode a frame matrix as RGF1 bytes.

    Raises:
        FeatureFormatException: If values are non-finite or the shape is invalid
    """
    frames = np.asarray(frames)
    if frames.ndim != 2 or frames.shape[0] < 1 or frames.shape[1] < 1:
        raise FeatureFormatException(
            f"Cannot encode matrix of shape {frames.shape}", actual=list(frames.shape)
        )
    values = frames.astype(VALUE_DTYPE)
    finite = np.isfinite(values)
    if not finite.all():
        bad = int(np.flatnonzero(~finite.ravel())[0])
        raise FeatureFormatException(
            "Refusing to write non-finite value",
            offset=HEADER.size + 4 * bad,
            details={"value_index": bad}
        )
    header = HEADER.pack(MAGIC, VERSION, frames.shape[0], frames.shape[1], float(fps))
    return header + values.tobytes(order="C")


def write_feature_track(track: FeatureTrack, path: PathLike) -> None:
    """Write a track as RGF1.

    Raises:
        FeatureFormatException: If the track holds non-finite values
        StorageException: On I/O failure
    """
    write_matrix(track.frames, track.fps, path)


def write_matrix(frames: np.ndarray, fps: float, path: PathLike) -> None:
    """Write any finite 2-D matrix as RGF1 (used for tracks and prepared samples)."""
    payload = encode_feature_track(frames, fps)
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(payload)
    except OSError as e:
        raise StorageException(
            f"Cannot write feature file: {path}",
            path=str(path),
            operation="write",
            cause=e
        )
