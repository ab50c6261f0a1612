"""
Synthetic replay grounding dataset.

Each action is a seeded, piecewise-smooth signature block written over a
unit-variance noise background; its replay, placed 10 s or more later,
carries a copy of the same signature with additive noise. Distractor
actions get signatures but no replay.
"""

import shutil
import tempfile
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np

from src.core.exceptions import StorageException, SyntheticDataException
from src.core.labeling import seconds_to_frames
from src.dataset.features import PathLike, write_matrix
from src.dataset.manifest import (
    GameEntry,
    HalfEntry,
    Manifest,
    ReplayEvent,
    save_manifest,
)
from src.utils.config import SynthConfig
from src.utils.logger import get_logger


logger = get_logger(__name__)

MANIFEST_NAME = "manifest.json"

SIGNATURE_SCALE = 3.0
SIGNATURE_VARIATION = 1.0
SIGNATURE_KNOTS = 4
GUARD_S = 1.0
REPLAY_GAP_S = (10.0, 45.0)
MAX_ATTEMPTS = 1000


@dataclass(frozen=True)
class PlacedAction:
    """Frame layout of one action (and its replay, when it has one)."""

    start: int
    replay_start: int = -1

    @property
    def has_replay(self) -> bool:
        return self.replay_start >= 0


def make_signature(rng: np.random.Generator, n_frames: int, dim: int) -> np.ndarray:
    """Smooth random pattern: a constant offset plus a piecewise-linear drift."""
    base = rng.normal(0.0, SIGNATURE_SCALE, size=dim)
    knots = rng.normal(0.0, SIGNATURE_VARIATION, size=(SIGNATURE_KNOTS, dim))
    knot_pos = np.linspace(0.0, max(n_frames - 1, 1), SIGNATURE_KNOTS)
    grid = np.arange(n_frames, dtype=np.float64)
    drift = np.stack([np.interp(grid, knot_pos, knots[:, d]) for d in range(dim)], axis=1)
    return (base + drift).astype(np.float32)


class _Layout:
    """Non-overlapping interval bookkeeping in frame units."""

    def __init__(self, n_frames: int, guard: int):
        self.n_frames = n_frames
        self.guard = guard
        self.occupied: List[Tuple[int, int]] = []

    def is_free(self, lo: int, hi: int) -> bool:
        if lo < 0 or hi > self.n_frames:
            return False
        return all(hi + self.guard <= a or b + self.guard <= lo for a, b in self.occupied)

    def take(self, lo: int, hi: int) -> None:
        self.occupied.append((lo, hi))


def _place_half(
    rng: np.random.Generator,
    config: SynthConfig,
    n_frames: int,
    sig_len: int
) -> List[PlacedAction]:
    layout = _Layout(n_frames, seconds_to_frames(GUARD_S, config.fps))
    gap_lo = seconds_to_frames(REPLAY_GAP_S[0], config.fps)
    gap_hi = seconds_to_frames(REPLAY_GAP_S[1], config.fps)
    if n_frames < 2 * sig_len + gap_lo and config.actions_per_half > 0:
        raise SyntheticDataException(
            "Half too short for an action and its replay",
            details={"duration_s": config.duration_s}
        )

    placed: List[PlacedAction] = []
    for kind, count in (("action", config.actions_per_half), ("distractor", config.distractors_per_half)):
        for _ in range(count):
            for _attempt in range(MAX_ATTEMPTS):
                start = int(rng.integers(0, n_frames - sig_len + 1))
                if kind == "action":
                    replay = start + sig_len + int(rng.integers(gap_lo, gap_hi + 1))
                    if layout.is_free(start, start + sig_len) and layout.is_free(replay, replay + sig_len):
                        layout.take(start, start + sig_len)
                        layout.take(replay, replay + sig_len)
                        placed.append(PlacedAction(start, replay))
                        break
                elif layout.is_free(start, start + sig_len):
                    layout.take(start, start + sig_len)
                    placed.append(PlacedAction(start))
                    break
            else:
                raise SyntheticDataException(
                    f"Cannot place {count} {kind}s in {config.duration_s}s halves",
                    details={
                        "actions_per_half": config.actions_per_half,
                        "distractors_per_half": config.distractors_per_half,
                        "duration_s": config.duration_s
                    }
                )
    return sorted(placed, key=lambda p: p.start)


def _generate_half(
    config: SynthConfig,
    game_index: int,
    game_id: str,
    half: int,
    out_dir: Path
) -> HalfEntry:
    rng = np.random.default_rng([config.seed, game_index, half])
    n_frames = seconds_to_frames(config.duration_s, config.fps)
    sig_len = seconds_to_frames(config.signature_len_s, config.fps)
    if sig_len < 1:
        raise SyntheticDataException("signature_len_s shorter than one frame")

    placed = _place_half(rng, config, n_frames, sig_len)

    streams: Dict[str, str] = {}
    for stream in config.streams:
        frames = rng.standard_normal((n_frames, config.dim), dtype=np.float32)
        for action in placed:
            signature = make_signature(rng, sig_len, config.dim)
            noise = rng.standard_normal((sig_len, config.dim)).astype(np.float32)
            frames[action.start:action.start + sig_len] = signature
            if action.has_replay:
                copy = signature + np.float32(config.noise_sigma) * noise
                frames[action.replay_start:action.replay_start + sig_len] = copy
        rel = f"{game_id}/half{half}_{stream}.rgf"
        write_matrix(frames, config.fps, out_dir / rel)
        streams[stream] = rel

    replays = []
    for action in (p for p in placed if p.has_replay):
        replays.append(ReplayEvent(
            replay_id=f"{game_id}_h{half}_r{len(replays):02d}",
            game_id=game_id,
            half=half,
            replay_start_s=action.replay_start / config.fps,
            replay_end_s=(action.replay_start + sig_len) / config.fps,
            gt_time_s=action.start / config.fps,
            label="action"
        ))

    return HalfEntry(
        half=half,
        duration_s=n_frames / config.fps,
        streams=streams,
        replays=replays
    )


def _prepare_target(out_dir: Path) -> None:
    if out_dir.exists():
        if not out_dir.is_dir():
            raise StorageException(f"{out_dir} is not a directory", path=str(out_dir), operation="generate")
        if any(out_dir.iterdir()) and not (out_dir / MANIFEST_NAME).exists():
            raise StorageException(
                f"Refusing to overwrite non-dataset directory {out_dir}",
                path=str(out_dir),
                operation="generate"
            )


def generate_synthetic(config: SynthConfig, out_dir: PathLike, n_halves: int = 2) -> Manifest:
    """Generate tracks and a manifest under `out_dir`.

    The tree is written to a temporary sibling directory and moved into place
    only when complete, so a failure leaves no partial files.

    Args:
        config: Generator configuration
        out_dir: Target directory (replaced if it holds a previous dataset)
        n_halves: Halves per game

    Returns:
        Manifest bound to `out_dir`

    Raises:
        SyntheticDataException: If the requested events do not fit, or n_halves
            is not 1 or 2
        StorageException: If the output cannot be written
    """
    if n_halves not in (1, 2):
        raise SyntheticDataException(f"A game has one or two halves, got {n_halves}")
    out_dir = Path(out_dir)
    _prepare_target(out_dir)
    try:
        out_dir.parent.mkdir(parents=True, exist_ok=True)
        staging = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.", dir=out_dir.parent))
    except OSError as e:
        raise StorageException(
            f"Cannot create output directory {out_dir}",
            path=str(out_dir),
            operation="generate",
            cause=e
        )

    try:
        games = []
        for game_index in range(config.n_games):
            game_id = f"game_{game_index:03d}"
            halves = [
                _generate_half(config, game_index, game_id, half, staging)
                for half in range(1, n_halves + 1)
            ]
            games.append(GameEntry(id=game_id, halves=halves))
            logger.debug("game_generated", game_id=game_id)

        manifest = Manifest(games=games)
        save_manifest(manifest, staging / MANIFEST_NAME)

        if out_dir.exists():
            shutil.rmtree(out_dir)
        staging.rename(out_dir)
    except BaseException:
        shutil.rmtree(staging, ignore_errors=True)
        raise

    manifest.with_root(out_dir)
    logger.info(
        "synthetic_dataset_written",
        out_dir=str(out_dir),
        games=config.n_games,
        replays=len(manifest.replays())
    )
    return manifest
