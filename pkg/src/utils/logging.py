"""
Logging utilities for structured JSON logging with proper configuration.
Provides consistent logging setup across the toolkit with contextual information.
"""

import logging
import logging.config
import sys
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Dict, Optional

from pythonjsonlogger.jsonlogger import JsonFormatter

from config.settings import ApplicationSettings, get_settings

APP_NAME = "spade-prune"
APP_VERSION = "1.0.0"


class JSONFormatter(JsonFormatter):
    """
    JSON formatter with consistent field names.

    Adds an ISO timestamp, level, logger, module, function and line to every
    record; extra fields passed via ``extra=`` are serialized as-is.
    """

    def add_fields(self, log_record: Dict[str, Any], record: logging.LogRecord, message_dict: Dict[str, Any]) -> None:
        super().add_fields(log_record, record, message_dict)
        log_record["timestamp"] = datetime.now(timezone.utc).isoformat()
        log_record["level"] = record.levelname
        log_record["logger"] = record.name
        log_record["module"] = record.module
        log_record["function"] = record.funcName
        log_record["line"] = record.lineno


class ContextFilter(logging.Filter):
    """
    Filter to add contextual information to log records.

    Adds application-wide context plus the pipeline phase and seed when the
    caller did not set them.
    """

    def filter(self, record: logging.LogRecord) -> bool:
        record.app_name = APP_NAME
        record.app_version = APP_VERSION

        if not hasattr(record, "phase"):
            record.phase = None

        if not hasattr(record, "seed"):
            record.seed = None

        return True


def setup_logging(settings: Optional[ApplicationSettings] = None) -> None:
    """
    Setup logging configuration.

    Configures structured JSON logging by default and readable console
    logging in debug mode. File handlers are only installed when
    ``log_to_file`` is enabled.

    Args:
        settings: Application settings (defaults to the cached singleton)
    """
    settings = settings or get_settings()
    log_level = getattr(logging, settings.log_level.upper(), logging.INFO)

    handlers: Dict[str, Dict[str, Any]] = {
        "console": {
            "class": "logging.StreamHandler",
            "stream": sys.stderr,
            "formatter": "console" if settings.debug else "json",
            "level": log_level,
            "filters": ["context_filter"],
        }
    }
    handler_names = ["console"]

    if settings.log_to_file:
        logs_dir = Path(settings.log_dir)
        logs_dir.mkdir(parents=True, exist_ok=True)
        handlers["file"] = {
            "class": "logging.handlers.RotatingFileHandler",
            "filename": str(logs_dir / "application.log"),
            "maxBytes": 10485760,  # 10MB
            "backupCount": 5,
            "formatter": "json",
            "level": log_level,
            "filters": ["context_filter"],
        }
        handlers["error_file"] = {
            "class": "logging.handlers.RotatingFileHandler",
            "filename": str(logs_dir / "error.log"),
            "maxBytes": 10485760,  # 10MB
            "backupCount": 5,
            "formatter": "json",
            "level": "ERROR",
            "filters": ["context_filter"],
        }
        handler_names += ["file", "error_file"]

    config = {
        "version": 1,
        "disable_existing_loggers": False,
        "formatters": {
            "json": {
                "()": JSONFormatter,
            },
            "console": {
                "format": "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
                "datefmt": "%Y-%m-%d %H:%M:%S",
            },
        },
        "filters": {
            "context_filter": {
                "()": ContextFilter,
            }
        },
        "handlers": handlers,
        "loggers": {
            "src": {
                "handlers": handler_names,
                "level": log_level,
                "propagate": False,
            },
            "config": {
                "handlers": handler_names,
                "level": log_level,
                "propagate": False,
            },
        },
        "root": {
            "handlers": handler_names,
            "level": log_level,
        },
    }

    logging.config.dictConfig(config)

    logger = logging.getLogger(__name__)
    logger.debug("Logging configuration initialized", extra={
        "log_level": settings.log_level,
        "debug_mode": settings.debug,
    })


def get_logger(name: str) -> logging.Logger:
    """
    Get a logger instance with the specified name.

    Args:
        name: Logger name (usually __name__)

    Returns:
        Configured logger instance
    """
    return logging.getLogger(name)


class LoggerAdapter(logging.LoggerAdapter):
    """
    Logger adapter that adds consistent contextual information to all log messages.

    Used by the pipeline to stamp the current phase and seed on every record.
    """

    def process(self, msg: str, kwargs: Dict[str, Any]) -> tuple:
        if "extra" in kwargs:
            kwargs["extra"].update(self.extra)
        else:
            kwargs["extra"] = dict(self.extra)
        return msg, kwargs


def get_contextual_logger(name: str, **context) -> LoggerAdapter:
    """
    Get a logger adapter with additional context.

    Args:
        name: Logger name
        **context: Additional context to include in all log messages

    Returns:
        LoggerAdapter with contextual information
    """
    return LoggerAdapter(get_logger(name), context)


def log_performance(func_name: str, duration_ms: float, logger: logging.Logger,
                    threshold_ms: float = 60000.0) -> None:
    """
    Log phase performance metrics.

    Args:
        func_name: Name of the phase or function
        duration_ms: Execution duration in milliseconds
        logger: Logger instance to use
        threshold_ms: Threshold for warning about slow phases
    """
    log_level = logging.WARNING if duration_ms > threshold_ms else logging.INFO

    logger.log(log_level, f"Performance: {func_name} completed in {duration_ms:.2f}ms", extra={
        "function_name": func_name,
        "duration_ms": duration_ms,
        "performance_warning": duration_ms > threshold_ms,
    })
