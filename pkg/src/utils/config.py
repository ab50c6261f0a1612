"""
Configuration management module for the replay grounding pipeline.

Handles loading, validation, and management of run configuration
from multiple sources (environment variables, YAML/JSON files, defaults).
"""

from pathlib import Path
from typing import Any, Dict, List, Literal, Optional

import orjson
import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.core.exceptions import ConfigLoadException, ConfigValidationException


# Load environment variables
load_dotenv()


def _check_sorted_positive(values: List[float], name: str) -> List[float]:
    if not values:
        raise ValueError(f"{name} must not be empty")
    if any(v <= 0 for v in values):
        raise ValueError(f"{name} must be positive")
    if list(values) != sorted(values):
        raise ValueError(f"{name} must be sorted ascending")
    return values


class WindowConfig(BaseModel):
    """Sliding-window conditioning configuration."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    window_len_s: float = 16.0
    stride_s: float = 8.0
    resize_len: int = 100
    train_context_s: float = 120.0
    test_context_s: float = 60.0

    @model_validator(mode="after")
    def check_geometry(self) -> "WindowConfig":
        """Validate window geometry."""
        if not 0 < self.stride_s <= self.window_len_s:
            raise ValueError("stride_s must satisfy 0 < stride_s <= window_len_s")
        if self.resize_len < 2:
            raise ValueError("resize_len must be at least 2")
        if self.train_context_s <= 0 or self.test_context_s <= 0:
            raise ValueError("context lengths must be positive")
        return self


class AugmentConfig(BaseModel):
    """Synthetic positive sample configuration."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    ratio: float = Field(default=1.0, ge=0.0)
    seed: int = 0


class AnchorConfig(BaseModel):
    """Anchor grid for coarse proposal generation."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    durations_f: List[int] = Field(default_factory=lambda: [12, 19, 25, 38])
    start_stride_f: int = Field(default=2, ge=1)
    K: int = Field(default=120, ge=1)
    refine_radius_f: int = Field(default=4, ge=0)

    @field_validator("durations_f")
    @classmethod
    def check_durations(cls, v: List[int]) -> List[int]:
        """Durations must be positive and sorted."""
        return _check_sorted_positive(v, "durations_f")


class PostConfig(BaseModel):
    """Soft-NMS and spot conversion configuration."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    nms_method: Literal["gaussian", "linear", "hard"] = "gaussian"
    sigma: float = Field(default=0.5, gt=0.0)
    iou_threshold: float = Field(default=0.5, gt=0.0, lt=1.0)
    score_floor: float = Field(default=1e-3, ge=0.0)
    top_m: int = Field(default=10, ge=1)
    prior_weight: float = Field(default=0.0, ge=0.0, le=1.0)


def _default_tious() -> List[float]:
    return [round(0.5 + 0.05 * i, 2) for i in range(10)]


class MetricConfig(BaseModel):
    """Evaluation tolerance grids."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    tight_deltas_s: List[float] = Field(default_factory=lambda: [1.0, 2.0, 3.0, 4.0, 5.0])
    loose_deltas_s: List[float] = Field(
        default_factory=lambda: [float(d) for d in range(5, 65, 5)]
    )
    tiou_thresholds: List[float] = Field(default_factory=_default_tious)
    an_grid: List[int] = Field(default_factory=lambda: list(range(1, 101)))

    @field_validator("tight_deltas_s", "loose_deltas_s", "tiou_thresholds", "an_grid")
    @classmethod
    def check_grid(cls, v, info):
        """Grids must be positive and sorted ascending."""
        return _check_sorted_positive(v, info.field_name)


class SynthConfig(BaseModel):
    """Synthetic dataset generator configuration."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    n_games: int = Field(default=2, ge=1)
    actions_per_half: int = Field(default=3, ge=0)
    distractors_per_half: int = Field(default=0, ge=0)
    dim: int = Field(default=16, ge=1)
    duration_s: float = Field(default=600.0, gt=0.0)
    noise_sigma: float = Field(default=0.0, ge=0.0)
    signature_len_s: float = Field(default=3.0, gt=0.0)
    fps: float = Field(default=4.0, gt=0.0)
    streams: List[str] = Field(default_factory=lambda: ["3s_style1", "6s"])
    seed: int = 0

    @field_validator("streams")
    @classmethod
    def check_streams(cls, v: List[str]) -> List[str]:
        """At least one uniquely named stream."""
        if not v or len(set(v)) != len(v):
            raise ValueError("streams must be a non-empty list of unique names")
        return v

    @field_validator("seed")
    @classmethod
    def check_seed(cls, v: int) -> int:
        """Seeds are unsigned 64-bit."""
        if not 0 <= v < 2 ** 64:
            raise ValueError("seed must fit in 64 bits")
        return v


class TrainingConfig(BaseModel):
    """Actionness head training configuration."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    epochs: int = Field(default=200, ge=0)
    lr: float = Field(default=0.1, ge=0.0)
    hidden: int = Field(default=32, ge=1)
    batch_size: int = Field(default=256, ge=1)


class LoggingConfig(BaseModel):
    """Logging configuration."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    level: str = "INFO"
    json_format: bool = False
    log_dir: Optional[Path] = None
    max_file_size_mb: int = 10
    backup_count: int = 5

    @field_validator("level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Validate log level."""
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        v_upper = v.upper()
        if v_upper not in valid_levels:
            raise ValueError(f"Invalid log level: {v}. Must be one of {valid_levels}")
        return v_upper


class RunConfig(BaseSettings):
    """Main configuration class that aggregates all config sections."""

    model_config = SettingsConfigDict(
        env_prefix="REPLAY_GROUNDING_",
        env_nested_delimiter="__",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    window: WindowConfig = Field(default_factory=WindowConfig)
    augment: AugmentConfig = Field(default_factory=AugmentConfig)
    anchors: AnchorConfig = Field(default_factory=AnchorConfig)
    post: PostConfig = Field(default_factory=PostConfig)
    metrics: MetricConfig = Field(default_factory=MetricConfig)
    synth: SynthConfig = Field(default_factory=SynthConfig)
    training: TrainingConfig = Field(default_factory=TrainingConfig)
    logging: LoggingConfig = Field(default_factory=LoggingConfig)

    seed: int = 0
    scorer: Literal["similarity", "actionness"] = "similarity"
    streams: List[str] = Field(default_factory=list)

    @model_validator(mode="after")
    def check_anchors_fit_window(self) -> "RunConfig":
        """Every anchor must be shorter than the resized window."""
        if max(self.anchors.durations_f) >= self.window.resize_len:
            raise ValueError(
                f"anchors.durations_f {self.anchors.durations_f} must be shorter than "
                f"window.resize_len ({self.window.resize_len})"
            )
        return self

    @classmethod
    def load(
        cls,
        config_file: Optional[Path] = None,
        overrides: Optional[Dict[str, Any]] = None
    ) -> "RunConfig":
        """Load configuration from file, environment and explicit overrides.

        Args:
            config_file: Optional path to a YAML or JSON config file
            overrides: Nested dictionary of explicit values (CLI flags)

        Returns:
            RunConfig instance with loaded settings

        Raises:
            ConfigLoadException: If the file cannot be read or parsed
            ConfigValidationException: If any value violates its constraints
        """
        config_dict: Dict[str, Any] = {}

        if config_file is not None:
            if not config_file.exists():
                raise ConfigLoadException(
                    f"Config file not found: {config_file}",
                    config_file=str(config_file)
                )
            try:
                with open(config_file, "r", encoding="utf-8") as f:
                    # JSON is a subset of YAML
                    config_dict = yaml.safe_load(f) or {}
            except yaml.YAMLError as e:
                raise ConfigLoadException(
                    f"Cannot parse config file: {config_file}",
                    config_file=str(config_file),
                    cause=e
                )
            if not isinstance(config_dict, dict):
                raise ConfigLoadException(
                    "Config file must contain a mapping",
                    config_file=str(config_file)
                )

        if overrides:
            config_dict = _deep_merge(config_dict, overrides)

        try:
            # init kwargs take priority over environment variables
            return cls(**config_dict)
        except ValidationError as e:
            raise ConfigValidationException(
                "Invalid configuration",
                validation_errors=[
                    {"loc": ".".join(str(p) for p in err["loc"]), "msg": err["msg"]}
                    for err in e.errors()
                ],
                config_file=str(config_file) if config_file else None,
                cause=e
            )

    def to_dict(self) -> Dict[str, Any]:
        """Convert configuration to a JSON-compatible dictionary."""
        return self.model_dump(mode="json")

    def to_json(self) -> bytes:
        """Serialize the resolved configuration (sorted keys, byte-stable)."""
        return orjson.dumps(
            self.to_dict(), option=orjson.OPT_INDENT_2 | orjson.OPT_SORT_KEYS
        )

    def save(self, config_file: Path) -> None:
        """Save configuration as JSON.

        Args:
            config_file: Path to save the configuration
        """
        config_file.parent.mkdir(parents=True, exist_ok=True)
        config_file.write_bytes(self.to_json() + b"\n")


def _deep_merge(base: Dict[str, Any], override: Dict[str, Any]) -> Dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _deep_merge(merged[key], value)
        else:
            merged[key] = value
    return merged

