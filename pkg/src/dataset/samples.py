"""
Persisted samples: one RGF1 matrix per sample plus a JSON Lines index.

The fps field of each sample file is N / window_len_s, so the file alone
tells how long the window was.
"""

from pathlib import Path
from typing import List, Sequence

import orjson

from src.core.conditioning import Sample
from src.core.exceptions import DatasetException, StorageException
from src.core.labeling import FrameSpan
from src.dataset.features import PathLike, read_feature_track, write_matrix


INDEX_NAME = "index.jsonl"


def _record(sample: Sample, file_name: str) -> dict:
    return {
        "replay_id": sample.replay_id,
        "game_id": sample.game_id,
        "half": sample.half,
        "window_start_s": sample.window_start_s,
        "window_len_s": sample.window_len_s,
        "labels": [[span.start_f, span.end_f] for span in sample.labels],
        "is_synthetic": sample.is_synthetic,
        "native_frames": sample.native_frames,
        "file": file_name,
    }


def write_samples(samples: Sequence[Sample], out_dir: PathLike) -> Path:
    """Write samples and their index under `out_dir`.

    Returns:
        Path of the index file

    Raises:
        StorageException: On I/O failure
    """
    out_dir = Path(out_dir)
    lines = []
    for i, sample in enumerate(samples):
        file_name = f"{i:06d}.rgf"
        write_matrix(sample.features, sample.n_frames / sample.window_len_s, out_dir / file_name)
        lines.append(orjson.dumps(_record(sample, file_name), option=orjson.OPT_SORT_KEYS) + b"\n")

    index = out_dir / INDEX_NAME
    try:
        index.write_bytes(b"".join(lines))
    except OSError as e:
        raise StorageException(f"Cannot write sample index {index}", path=str(index), operation="write", cause=e)
    return index


def read_samples(sample_dir: PathLike) -> List[Sample]:
    """Load samples written by write_samples.

    Raises:
        DatasetException: Naming the index line on a malformed record
    """
    sample_dir = Path(sample_dir)
    index = sample_dir / INDEX_NAME
    try:
        lines = index.read_bytes().splitlines()
    except OSError as e:
        raise DatasetException(f"Cannot read sample index {index}", path=str(index), cause=e)

    samples = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = orjson.loads(line)
            track = read_feature_track(sample_dir / record["file"], stream="sample")
            features = track.frames.astype("float64")
            n_frames = features.shape[0]
            samples.append(Sample(
                replay_id=str(record["replay_id"]),
                game_id=str(record["game_id"]),
                half=int(record["half"]),
                window_start_s=float(record["window_start_s"]),
                window_len_s=float(record["window_len_s"]),
                features=features,
                labels=tuple(
                    FrameSpan(float(s), float(e), n_frames=n_frames) for s, e in record["labels"]
                ),
                is_synthetic=bool(record["is_synthetic"]),
                native_frames=record.get("native_frames"),
            ))
        except (orjson.JSONDecodeError, KeyError, TypeError, ValueError) as e:
            raise DatasetException(
                f"{index}:{lineno}: malformed sample record",
                path=str(index),
                details={"line": lineno},
                cause=e
            )
    return samples
