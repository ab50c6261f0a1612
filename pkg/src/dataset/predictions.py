"""
Predictions file: JSON Lines, one ranked spot per line.
"""

from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, List

import orjson

from src.core.exceptions import PredictionFormatException, StorageException
from src.dataset.features import PathLike


RECORD_FIELDS = ("replay_id", "game_id", "half", "rank", "time_s", "end_s", "confidence")


@dataclass(frozen=True)
class SpotPrediction:
    """A grounding answer candidate for one replay.

    Attributes:
        replay_id: Replay the prediction answers
        game_id: Game of the replay
        half: Half of the replay
        rank: 1-based rank within the replay (1 is the submitted answer)
        time_s: Predicted live timestamp (segment start)
        end_s: End of the predicted segment
        confidence: Score after post-processing
    """

    replay_id: str
    game_id: str
    half: int
    rank: int
    time_s: float
    end_s: float
    confidence: float


def dump_predictions(predictions: Iterable[SpotPrediction]) -> bytes:
    """Serialize predictions as JSON Lines with sorted keys."""
    return b"".join(
        orjson.dumps(asdict(p), option=orjson.OPT_SORT_KEYS) + b"\n" for p in predictions
    )


def write_predictions(predictions: Iterable[SpotPrediction], path: PathLike) -> None:
    """Write predictions as JSON Lines.

    Raises:
        StorageException: On I/O failure
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(dump_predictions(predictions))
    except OSError as e:
        raise StorageException(
            f"Cannot write predictions {path}", path=str(path), operation="write", cause=e
        )


def read_predictions(path: PathLike) -> List[SpotPrediction]:
    """Read a predictions JSON Lines file.

    Blank lines are skipped.

    Raises:
        PredictionFormatException: Naming the offending line on any schema violation
    """
    path = Path(path)
    try:
        lines = path.read_bytes().splitlines()
    except OSError as e:
        raise PredictionFormatException(f"Cannot read predictions {path}", path=str(path), cause=e)

    predictions = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        try:
            record = orjson.loads(line)
        except orjson.JSONDecodeError as e:
            raise PredictionFormatException(
                f"{path}:{lineno}: invalid JSON", line=lineno, path=str(path), cause=e
            )
        if not isinstance(record, dict):
            raise PredictionFormatException(
                f"{path}:{lineno}: record must be an object", line=lineno, path=str(path)
            )
        missing = [name for name in RECORD_FIELDS if name not in record]
        if missing:
            raise PredictionFormatException(
                f"{path}:{lineno}: missing fields {missing}", line=lineno, path=str(path)
            )
        try:
            prediction = SpotPrediction(
                replay_id=str(record["replay_id"]),
                game_id=str(record["game_id"]),
                half=int(record["half"]),
                rank=int(record["rank"]),
                time_s=float(record["time_s"]),
                end_s=float(record["end_s"]),
                confidence=float(record["confidence"]),
            )
        except (TypeError, ValueError) as e:
            raise PredictionFormatException(
                f"{path}:{lineno}: bad field type", line=lineno, path=str(path), cause=e
            )
        if prediction.rank < 1:
            raise PredictionFormatException(
                f"{path}:{lineno}: rank must be >= 1", line=lineno, path=str(path)
            )
        predictions.append(prediction)
    return predictions
