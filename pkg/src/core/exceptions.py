"""
Exception hierarchy for the replay grounding pipeline.

This module defines custom exceptions used throughout the pipeline to
provide clear error handling, debugging information and CLI exit codes.
"""

from typing import Any, Dict, Optional


class ReplayGroundingException(Exception):
    """Base exception for all pipeline errors.

    This is the root exception class that all custom exceptions inherit from.
    It provides enhanced error information and a process exit code.
    """

    exit_code = 2

    def __init__(
        self,
        message: str,
        error_code: Optional[str] = None,
        details: Optional[Dict[str, Any]] = None,
        cause: Optional[Exception] = None
    ):
        """Initialize pipeline exception.

        Args:
            message: Human-readable error message
            error_code: Optional error code for categorization
            details: Additional error details as dictionary
            cause: Original exception that caused this error
        """
        super().__init__(message)
        self.message = message
        self.error_code = error_code or "REPLAY_GROUNDING_ERROR"
        self.details = details or {}
        self.cause = cause

    def to_dict(self) -> Dict[str, Any]:
        """Convert exception to dictionary for logging/serialization.

        Returns:
            Dictionary representation of the exception
        """
        return {
            "error_type": self.__class__.__name__,
            "message": self.message,
            "error_code": self.error_code,
            "details": self.details,
            "cause": str(self.cause) if self.cause else None
        }

    def __str__(self) -> str:
        """String representation of the exception."""
        if self.cause:
            return f"{self.error_code}: {self.message} (caused by: {self.cause})"
        return f"{self.error_code}: {self.message}"


class ConfigException(ReplayGroundingException):
    """Exception related to configuration.

    Raised when configuration loading, parsing, or validation fails.
    """

    exit_code = 1

    def __init__(
        self,
        message: str,
        config_key: Optional[str] = None,
        config_file: Optional[str] = None,
        **kwargs
    ):
        """Initialize configuration exception.

        Args:
            message: Error message
            config_key: Configuration key that caused error
            config_file: Configuration file path
            **kwargs: Additional arguments passed to parent
        """
        details = kwargs.pop("details", {})
        details.update({
            "config_key": config_key,
            "config_file": config_file
        })

        super().__init__(
            message=message,
            error_code=kwargs.pop("error_code", "CONFIG_ERROR"),
            details=details,
            **kwargs
        )


class ConfigValidationException(ConfigException):
    """Exception when configuration validation fails."""

    def __init__(self, message: str, validation_errors: Optional[Any] = None, **kwargs):
        details = kwargs.pop("details", {})
        details["validation_errors"] = validation_errors

        super().__init__(
            message=message,
            error_code="CONFIG_VALIDATION_ERROR",
            details=details,
            **kwargs
        )


class ConfigLoadException(ConfigException):
    """Exception when configuration loading fails."""

    def __init__(self, message: str, **kwargs):
        super().__init__(
            message=message,
            error_code="CONFIG_LOAD_ERROR",
            **kwargs
        )


class StorageException(ReplayGroundingException):
    """Exception related to storage operations.

    Raised when an output location cannot be created or written.
    """

    exit_code = 1

    def __init__(
        self,
        message: str,
        path: Optional[str] = None,
        operation: Optional[str] = None,
        **kwargs
    ):
        """Initialize storage exception.

        Args:
            message: Error message
            path: File or directory path
            operation: Storage operation that failed
            **kwargs: Additional arguments passed to parent
        """
        details = kwargs.pop("details", {})
        details.update({
            "path": path,
            "operation": operation
        })

        super().__init__(
            message=message,
            error_code=kwargs.pop("error_code", "STORAGE_ERROR"),
            details=details,
            **kwargs
        )


class DatasetException(ReplayGroundingException):
    """Exception related to on-disk data (tracks, manifests, predictions)."""

    def __init__(self, message: str, path: Optional[str] = None, **kwargs):
        details = kwargs.pop("details", {})
        details["path"] = path

        super().__init__(
            message=message,
            error_code=kwargs.pop("error_code", "DATASET_ERROR"),
            details=details,
            **kwargs
        )


class FeatureFormatException(DatasetException):
    """Exception when an RGF1 feature file is malformed."""

    def __init__(
        self,
        message: str,
        offset: Optional[int] = None,
        expected: Optional[Any] = None,
        actual: Optional[Any] = None,
        **kwargs
    ):
        """Initialize feature format exception.

        Args:
            message: Error message
            offset: Byte offset where the problem was detected
            expected: Expected value (size, magic, ...)
            actual: Value actually found
            **kwargs: Additional arguments passed to parent
        """
        details = kwargs.pop("details", {})
        details.update({
            "offset": offset,
            "expected": expected,
            "actual": actual
        })

        super().__init__(
            message=message,
            error_code="FEATURE_FORMAT_ERROR",
            details=details,
            **kwargs
        )


class ManifestException(DatasetException):
    """Exception when a manifest violates its schema or invariants."""

    def __init__(self, message: str, record: Optional[str] = None, **kwargs):
        details = kwargs.pop("details", {})
        details["record"] = record

        super().__init__(
            message=message,
            error_code="MANIFEST_ERROR",
            details=details,
            **kwargs
        )


class PredictionFormatException(DatasetException):
    """Exception when a predictions or sample index file has a bad record."""

    def __init__(self, message: str, line: Optional[int] = None, **kwargs):
        details = kwargs.pop("details", {})
        details["line"] = line

        super().__init__(
            message=message,
            error_code="PREDICTION_FORMAT_ERROR",
            details=details,
            **kwargs
        )


class SyntheticDataException(DatasetException):
    """Exception when the synthetic generator cannot place events."""

    def __init__(self, message: str, **kwargs):
        super().__init__(
            message=message,
            error_code="SYNTHETIC_PLACEMENT_ERROR",
            **kwargs
        )


class LabelingException(ReplayGroundingException):
    """Exception when segment geometry is invalid (empty, outside half or window)."""

    def __init__(self, message: str, **kwargs):
        super().__init__(
            message=message,
            error_code=kwargs.pop("error_code", "LABELING_ERROR"),
            **kwargs
        )


class ConditioningException(ReplayGroundingException):
    """Exception raised while extracting contexts or conditioning windows."""

    def __init__(self, message: str, replay_id: Optional[str] = None, **kwargs):
        details = kwargs.pop("details", {})
        details["replay_id"] = replay_id

        super().__init__(
            message=message,
            error_code=kwargs.pop("error_code", "CONDITIONING_ERROR"),
            details=details,
            **kwargs
        )


class AugmentationException(ReplayGroundingException):
    """Exception raised while synthesizing positive samples."""

    def __init__(self, message: str, **kwargs):
        super().__init__(
            message=message,
            error_code=kwargs.pop("error_code", "AUGMENTATION_ERROR"),
            **kwargs
        )


class DetectionException(ReplayGroundingException):
    """Exception related to proposal scoring and generation."""

    def __init__(self, message: str, **kwargs):
        super().__init__(
            message=message,
            error_code=kwargs.pop("error_code", "DETECTION_ERROR"),
            **kwargs
        )


class ModelException(DetectionException):
    """Exception when the actionness model cannot be trained, applied or loaded."""

    def __init__(self, message: str, **kwargs):
        super().__init__(
            message=message,
            error_code="MODEL_ERROR",
            **kwargs
        )


class EvaluationException(ReplayGroundingException):
    """Exception raised while computing metrics."""

    def __init__(self, message: str, replay_id: Optional[str] = None, **kwargs):
        details = kwargs.pop("details", {})
        details["replay_id"] = replay_id

        super().__init__(
            message=message,
            error_code=kwargs.pop("error_code", "EVALUATION_ERROR"),
            details=details,
            **kwargs
        )
