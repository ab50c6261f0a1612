"""
Metrics report: JSON artifact and aligned text table.
"""

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Union

import orjson
import pandas as pd

from src.core.exceptions import StorageException


TABLE_HEADER = (
    "Replay grounding metrics (AR@k and AUC use the ActivityNet-style "
    "conventional definitions over tIoU 0.50:0.05:0.95)"
)


@dataclass(frozen=True)
class MetricsReport:
    """Evaluation summary; every value is a percentage except n_replays."""

    tight_avg_map: float
    loose_avg_map: float
    per_delta_map: Dict[str, float] = field(default_factory=dict)
    ar_at_1: float = 0.0
    ar_at_5: float = 0.0
    auc: float = 0.0
    n_replays: int = 0

    def to_dict(self) -> Dict:
        return asdict(self)

    def to_json(self) -> bytes:
        return orjson.dumps(self.to_dict(), option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS) + b"\n"

    def save(self, path: Union[str, Path]) -> None:
        """Write the report as JSON.

        Raises:
            StorageException: On I/O failure
        """
        path = Path(path)
        try:
            path.parent.mkdir(parents=True, exist_ok=True)
            path.write_bytes(self.to_json())
        except OSError as e:
            raise StorageException(f"Cannot write report {path}", path=str(path), operation="write", cause=e)

    @classmethod
    def load(cls, path: Union[str, Path]) -> "MetricsReport":
        return cls(**orjson.loads(Path(path).read_bytes()))

    def to_frame(self) -> pd.DataFrame:
        """Summary columns as a one-row frame."""
        return pd.DataFrame([{
            "tight": self.tight_avg_map,
            "loose": self.loose_avg_map,
            "AUC": self.auc,
            "AR@1": self.ar_at_1,
            "AR@5": self.ar_at_5,
            "replays": self.n_replays,
        }])

    def render_table(self) -> str:
        """Header, summary row and per-tolerance mAP as text."""
        summary = self.to_frame().to_string(index=False, float_format=lambda v: f"{v:.2f}")
        per_delta = pd.DataFrame(
            {"delta_s": list(self.per_delta_map), "mAP": list(self.per_delta_map.values())}
        ).to_string(index=False, float_format=lambda v: f"{v:.2f}")
        return "\n".join([TABLE_HEADER, "", summary, "", per_delta])
