"""
Logging module for the replay grounding pipeline.

Provides structured logging (structlog routed through stdlib logging),
optional JSON output, rotating log files and stage timing.
"""

import logging
import sys
import time
from contextlib import contextmanager
from logging.handlers import RotatingFileHandler
from pathlib import Path
from typing import Any, Dict, Iterator, Optional

import structlog
from pythonjsonlogger import jsonlogger


DEFAULT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"


class ColoredFormatter(logging.Formatter):
    """Colored formatter for console output."""

    COLORS = {
        'DEBUG': '\033[36m',     # Cyan
        'INFO': '\033[32m',      # Green
        'WARNING': '\033[33m',   # Yellow
        'ERROR': '\033[31m',     # Red
        'CRITICAL': '\033[35m',  # Magenta
    }
    RESET = '\033[0m'

    def format(self, record):
        """Format log record with colors."""
        record = logging.makeLogRecord(record.__dict__)
        log_color = self.COLORS.get(record.levelname, self.RESET)
        record.levelname = f"{log_color}{record.levelname}{self.RESET}"
        return super().format(record)


class PerformanceLogger:
    """Logger for per-stage wall-clock timings."""

    def __init__(self, logger: Any):
        """Initialize performance logger.

        Args:
            logger: Base logger instance
        """
        self.logger = logger
        self.timings: Dict[str, float] = {}

    def log_timing(self, operation: str, duration: float) -> None:
        """Log operation timing.

        Args:
            operation: Operation name
            duration: Duration in seconds
        """
        self.timings[operation] = duration
        self.logger.debug("timing", operation=operation, seconds=round(duration, 4))

    @contextmanager
    def timed(self, operation: str) -> Iterator[None]:
        """Time the enclosed block and log it under `operation`."""
        start = time.perf_counter()
        try:
            yield
        finally:
            self.log_timing(operation, time.perf_counter() - start)

    def get_timings(self) -> Dict[str, float]:
        """Get all recorded timings."""
        return self.timings.copy()


def setup_logging(
    level: str = "INFO",
    json_format: bool = False,
    log_dir: Optional[Path] = None,
    max_file_size_mb: int = 10,
    backup_count: int = 5,
    console: bool = True
) -> logging.Logger:
    """Setup logging configuration.

    Console output goes to stderr so that command output on stdout stays
    machine-readable.

    Args:
        level: Log level name
        json_format: Use JSON format for logs
        log_dir: Directory for log files (no file logging when None)
        max_file_size_mb: Rotation size for log files
        backup_count: Number of rotated files to keep
        console: Enable console output

    Returns:
        Configured root logger
    """
    log_level = getattr(logging, level.upper())

    root_logger = logging.getLogger()
    root_logger.setLevel(log_level)

    # Remove existing handlers
    root_logger.handlers.clear()

    if json_format:
        formatter: logging.Formatter = jsonlogger.JsonFormatter(
            fmt="%(asctime)s %(name)s %(levelname)s %(message)s",
            datefmt="%Y-%m-%d %H:%M:%S"
        )
    else:
        formatter = logging.Formatter(DEFAULT_FORMAT)

    if console:
        console_handler = logging.StreamHandler(sys.stderr)
        console_handler.setLevel(log_level)
        if json_format or not sys.stderr.isatty():
            console_handler.setFormatter(formatter)
        else:
            console_handler.setFormatter(ColoredFormatter(DEFAULT_FORMAT))
        root_logger.addHandler(console_handler)

    if log_dir is not None:
        log_dir.mkdir(parents=True, exist_ok=True)
        max_size = max_file_size_mb * 1024 * 1024

        file_handler = RotatingFileHandler(
            log_dir / "replay_grounding.log",
            maxBytes=max_size,
            backupCount=backup_count
        )
        file_handler.setLevel(log_level)
        file_handler.setFormatter(formatter)
        root_logger.addHandler(file_handler)

        error_handler = RotatingFileHandler(
            log_dir / "error.log",
            maxBytes=max_size,
            backupCount=backup_count
        )
        error_handler.setLevel(logging.ERROR)
        error_handler.setFormatter(logging.Formatter(DEFAULT_FORMAT))
        root_logger.addHandler(error_handler)

    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            structlog.processors.JSONRenderer() if json_format
            else structlog.processors.KeyValueRenderer(key_order=["event"], sort_keys=True),
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=False,
    )

    return root_logger


def get_logger(name: str) -> Any:
    """Get a structured logger instance.

    Args:
        name: Logger name

    Returns:
        structlog logger bound to `name`
    """
    return structlog.get_logger(name)


def get_performance_logger(name: str) -> PerformanceLogger:
    """Get a performance logger instance.

    Args:
        name: Logger name

    Returns:
        PerformanceLogger instance
    """
    return PerformanceLogger(get_logger(f"{name}.performance"))


def log_exception(logger: Any, exception: Exception, context: Optional[Dict] = None) -> None:
    """Log an exception with context.

    Args:
        logger: Logger instance
        exception: Exception to log
        context: Optional context dictionary
    """
    payload = exception.to_dict() if hasattr(exception, "to_dict") else {
        "error_type": type(exception).__name__,
        "message": str(exception),
    }
    logger.error("exception", **payload, context=context or {})
