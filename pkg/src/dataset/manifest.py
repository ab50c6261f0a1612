"""
Dataset manifest: games, halves, feature streams and replay events.

The manifest is UTF-8 JSON; feature paths are relative to the directory
holding the manifest.
"""

from pathlib import Path
from typing import Dict, Iterator, List, Literal, Optional, Sequence, Tuple

import orjson
from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PrivateAttr,
    ValidationError,
    field_validator,
    model_validator,
)

from src.core.exceptions import ManifestException, StorageException
from src.dataset.features import FeatureTrack, PathLike, read_feature_track, read_header
from src.utils.logger import get_logger


logger = get_logger(__name__)

MANIFEST_VERSION = 1

Half = Literal[1, 2]


class ReplayEvent(BaseModel):
    """A replay shot and, when known, the live timestamp it shows."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    replay_id: str
    game_id: str
    half: Half
    replay_start_s: float = Field(ge=0.0)
    replay_end_s: float
    gt_time_s: Optional[float] = None
    label: str = "action"

    @model_validator(mode="after")
    def check_span(self) -> "ReplayEvent":
        """Replay span nonempty; live action precedes its replay."""
        if not self.replay_start_s < self.replay_end_s:
            raise ValueError(
                f"replay {self.replay_id}: start {self.replay_start_s} must precede end {self.replay_end_s}"
            )
        if self.gt_time_s is not None and not self.gt_time_s < self.replay_start_s:
            raise ValueError(
                f"replay {self.replay_id}: gt_time_s {self.gt_time_s} must precede replay_start_s"
            )
        return self


class HalfEntry(BaseModel):
    """One half of a game: its feature streams and replays."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    half: Half
    duration_s: float = Field(gt=0.0)
    streams: Dict[str, str]
    replays: List[ReplayEvent] = Field(default_factory=list)


class GameEntry(BaseModel):
    """A game and its halves."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    id: str
    halves: List[HalfEntry]


class Manifest(BaseModel):
    """Dataset manifest.

    `root` is the directory feature paths are resolved against; it is not
    serialized.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    version: int = MANIFEST_VERSION
    games: List[GameEntry] = Field(default_factory=list)

    _root: Path = PrivateAttr(default_factory=Path)
    _tracks: Dict[Tuple[str, int, str], FeatureTrack] = PrivateAttr(default_factory=dict)

    @field_validator("version")
    @classmethod
    def check_version(cls, v: int) -> int:
        """Only the current manifest format is readable."""
        if v != MANIFEST_VERSION:
            raise ValueError(f"unsupported manifest version {v}, expected {MANIFEST_VERSION}")
        return v

    @property
    def root(self) -> Path:
        return self._root

    def with_root(self, root: PathLike) -> "Manifest":
        """Bind the directory that relative feature paths resolve against."""
        self._root = Path(root)
        self._tracks.clear()
        return self

    def iter_halves(self) -> Iterator[Tuple[str, HalfEntry]]:
        for game in self.games:
            for half in game.halves:
                yield game.id, half

    def get_half(self, game_id: str, half: int) -> HalfEntry:
        for gid, entry in self.iter_halves():
            if gid == game_id and entry.half == half:
                return entry
        raise ManifestException(f"No half {half} for game {game_id}", record=f"{game_id}/{half}")

    def replays(self) -> List[ReplayEvent]:
        """All replay events, sorted by replay_id."""
        events = [r for _, half in self.iter_halves() for r in half.replays]
        return sorted(events, key=lambda r: r.replay_id)

    def get_replay(self, replay_id: str) -> ReplayEvent:
        for replay in self.replays():
            if replay.replay_id == replay_id:
                return replay
        raise ManifestException(f"Unknown replay id {replay_id}", record=replay_id)

    def stream_names(self, game_id: str, half: int) -> List[str]:
        return list(self.get_half(game_id, half).streams)

    def feature_path(self, game_id: str, half: int, stream: str) -> Path:
        entry = self.get_half(game_id, half)
        if stream not in entry.streams:
            raise ManifestException(
                f"Stream {stream!r} not listed for {game_id} half {half}",
                record=f"{game_id}/{half}"
            )
        return self._root / entry.streams[stream]

    def load_track(self, game_id: str, half: int, stream: str) -> FeatureTrack:
        """Read (and cache) one stream of one half."""
        key = (game_id, half, stream)
        if key not in self._tracks:
            self._tracks[key] = read_feature_track(
                self.feature_path(game_id, half, stream), game_id=game_id, half=half, stream=stream
            )
        return self._tracks[key]

    def load_tracks(
        self,
        game_id: str,
        half: int,
        streams: Optional[Sequence[str]] = None
    ) -> List[FeatureTrack]:
        """Tracks of one half in manifest order, or in the order of `streams`."""
        names = list(streams) if streams else self.stream_names(game_id, half)
        return [self.load_track(game_id, half, name) for name in names]


def _validate_manifest(manifest: Manifest, check_files: bool = True) -> None:
    seen: Dict[str, str] = {}
    for game_id, half in manifest.iter_halves():
        record = f"{game_id}/half{half.half}"
        if not half.streams:
            raise ManifestException(f"{record}: no feature streams listed", record=record)

        if check_files:
            lengths = {}
            for name, rel in half.streams.items():
                path = manifest.root / rel
                if not path.exists():
                    raise ManifestException(
                        f"{record}: missing feature file {path}", record=record, path=str(path)
                    )
                header = read_header(path)
                lengths[name] = (header.n_frames, header.fps)
            if len(set(lengths.values())) > 1:
                raise ManifestException(
                    f"{record}: stream length mismatch {lengths}",
                    record=record,
                    details={"streams": {k: list(v) for k, v in lengths.items()}}
                )

        for replay in half.replays:
            if replay.game_id != game_id or replay.half != half.half:
                raise ManifestException(
                    f"replay {replay.replay_id} filed under {record} but names "
                    f"{replay.game_id}/half{replay.half}",
                    record=replay.replay_id
                )
            if replay.replay_end_s > half.duration_s:
                raise ManifestException(
                    f"replay {replay.replay_id}: span [{replay.replay_start_s}, "
                    f"{replay.replay_end_s}] outside half duration {half.duration_s}",
                    record=replay.replay_id
                )
            if replay.replay_id in seen:
                raise ManifestException(
                    f"duplicate replay id {replay.replay_id} in {record} and {seen[replay.replay_id]}",
                    record=replay.replay_id
                )
            seen[replay.replay_id] = record


def load_manifest(path: PathLike, check_files: bool = True) -> Manifest:
    """Load and validate a manifest.

    Args:
        path: Manifest JSON file
        check_files: Validate feature files and cross-stream lengths

    Returns:
        Manifest bound to the directory of `path`

    Raises:
        ManifestException: On schema or invariant violations
    """
    path = Path(path)
    try:
        data = orjson.loads(path.read_bytes())
    except OSError as e:
        raise ManifestException(f"Cannot read manifest {path}", path=str(path), cause=e)
    except orjson.JSONDecodeError as e:
        raise ManifestException(f"Manifest {path} is not valid JSON", path=str(path), cause=e)

    try:
        manifest = Manifest.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        raise ManifestException(
            f"Manifest schema violation at {'.'.join(str(p) for p in first['loc'])}: {first['msg']}",
            record=".".join(str(p) for p in first["loc"]),
            path=str(path),
            cause=e
        )

    manifest.with_root(path.parent)
    _validate_manifest(manifest, check_files=check_files)
    logger.debug(
        "manifest_loaded",
        path=str(path),
        games=len(manifest.games),
        replays=len(manifest.replays())
    )
    return manifest


def dump_manifest(manifest: Manifest) -> bytes:
    """Serialize a manifest as byte-stable JSON."""
    return orjson.dumps(
        manifest.model_dump(mode="json"),
        option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS
    ) + b"\n"


def save_manifest(manifest: Manifest, path: PathLike) -> None:
    """Write a manifest as JSON.

    Raises:
        StorageException: On I/O failure
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(dump_manifest(manifest))
    except OSError as e:
        raise StorageException(
            f"Cannot write manifest {path}", path=str(path), operation="write", cause=e
        )
