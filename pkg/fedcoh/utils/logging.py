"""
Structured logging configuration for the toolkit.

Records go to stderr so that stdout stays reserved for machine-readable CLI
output (verdicts, reports, CSV).
"""
import json
import logging
import sys
from datetime import datetime, timezone
from typing import Optional

from fedcoh.config.settings import get_settings

TEXT_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"

# Standard LogRecord attributes, everything else is an extra
STANDARD_FIELDS = {
    "name", "msg", "args", "created", "filename", "funcName",
    "levelname", "levelno", "lineno", "module", "msecs", "message",
    "pathname", "process", "processName", "relativeCreated", "thread",
    "threadName", "exc_info", "exc_text", "stack_info", "asctime", "taskName",
}


def _extras(record: logging.LogRecord) -> dict:
    return {
        key: value
        for key, value in record.__dict__.items()
        if key not in STANDARD_FIELDS and not key.startswith("_")
    }


class StructuredFormatter(logging.Formatter):
    """
    Custom formatter that outputs logs in structured JSON format.
    """

    def format(self, record: logging.LogRecord) -> str:
        """
        Format log record as JSON structure.

        Args:
            record: Log record to format

        Returns:
            JSON string with structured log data
        """
        log_data = {
            "timestamp": datetime.now(timezone.utc).isoformat().replace("+00:00", "Z"),
            "level": record.levelname,
            "logger": record.name,
            "message": record.getMessage(),
        }
        log_data.update(_extras(record))

        if record.exc_info:
            log_data["exception"] = self.formatException(record.exc_info)

        return json.dumps(log_data, default=str)


class TextFormatter(logging.Formatter):
    """
    Custom formatter for human-readable text output.
    """

    def format(self, record: logging.LogRecord) -> str:
        """
        Format log record as readable text.

        Args:
            record: Log record to format

        Returns:
            Formatted text string
        """
        base_msg = super().format(record)

        extras = []
        for key, value in _extras(record).items():
            if "duration" in key.lower() and isinstance(value, (int, float)):
                extras.append(f"{key}={value:.3f}s")
            else:
                extras.append(f"{key}={value}")

        if extras:
            base_msg += f" [{', '.join(extras)}]"

        return base_msg


def setup_logging(level: Optional[str] = None, fmt: Optional[str] = None) -> logging.Logger:
    """
    Configure root logging with structured output.

    Args:
        level: Log level name, defaults to LOG_LEVEL from settings
        fmt: "json" or "text", defaults to LOG_FORMAT from settings

    Returns:
        The configured root logger
    """
    settings = get_settings()
    level_name = (level or settings.LOG_LEVEL).upper()
    fmt = (fmt or settings.LOG_FORMAT).lower()

    logger = logging.getLogger()
    logger.setLevel(getattr(logging, level_name, logging.WARNING))

    for handler in logger.handlers[:]:
        logger.removeHandler(handler)

    handler = logging.StreamHandler(sys.stderr)
    handler.setLevel(getattr(logging, level_name, logging.WARNING))

    if fmt == "json":
        formatter: logging.Formatter = StructuredFormatter()
    else:
        formatter = TextFormatter(TEXT_FORMAT)

    handler.setFormatter(formatter)
    logger.addHandler(handler)

    return logger


def get_logger(name: str) -> logging.Logger:
    """
    Get a logger instance with the given name.

    Args:
        name: Logger name (typically __name__)

    Returns:
        Logger instance
    """
    return logging.getLogger(name)


def log_with_context(
    logger: logging.Logger,
    level: int,
    message: str,
    location: Optional[str] = None,
    model: Optional[str] = None,
    proc: Optional[str] = None,
    node: Optional[str] = None,
    duration: Optional[float] = None,
    error_type: Optional[str] = None,
    **kwargs,
):
    """
    Log a message with structured context.

    Args:
        logger: Logger instance
        level: Log level (e.g., logging.INFO)
        message: Log message
        location: Memory location the message is about
        model: Coherence model name (full, weak, federated)
        proc: Simulated processor id
        node: Simulated node id
        duration: Duration in seconds
        error_type: Type of error if applicable
        **kwargs: Additional context fields
    """
    if not logger.isEnabledFor(level):
        return

    extra = {}
    if location:
        extra["location"] = location
    if model:
        extra["model"] = model
    if proc:
        extra["proc"] = proc
    if node:
        extra["node"] = node
    if duration is not None:
        extra["duration"] = duration
    if error_type:
        extra["error_type"] = error_type

    extra.update(kwargs)

    logger.log(level, message, extra=extra)


# Initialize logging on module import
setup_logging()
