"""
Optional Sentry error tracking for obscert runs.

Without sentry-sdk installed, or without a DSN, every helper here degrades to
logging.

Usage:
    from src.error_tracking import init_sentry, capture_error, track_operation

    init_sentry()

    with track_operation("verify-obs", seed=7):
        report = run_experiment(config)
"""

import logging
import os
import platform
from contextlib import contextmanager
from typing import Any, Dict, Iterator, Optional

try:
    import sentry_sdk

    SENTRY_AVAILABLE = True
except ImportError:
    sentry_sdk = None
    SENTRY_AVAILABLE = False

from .base import ObscertError

logger = logging.getLogger(__name__)

DSN_ENV_VARS = ("OBSCERT_SENTRY_DSN", "SENTRY_DSN")

_initialized = False


class ErrorLevel:
    FATAL = "fatal"
    ERROR = "error"
    WARNING = "warning"
    INFO = "info"


def resolve_dsn(dsn: Optional[str] = None) -> Optional[str]:
    if dsn:
        return dsn
    for name in DSN_ENV_VARS:
        value = os.environ.get(name)
        if value:
            return value
    return None


def init_sentry(
    dsn: Optional[str] = None,
    environment: Optional[str] = None,
    traces_sample_rate: float = 0.0,
) -> bool:
    """
    Initialize Sentry if the SDK is installed and a DSN is configured.

    Returns:
        True if Sentry is active afterwards
    """
    global _initialized
    if not SENTRY_AVAILABLE:
        logger.debug("sentry-sdk not installed; error tracking disabled")
        return False
    dsn = resolve_dsn(dsn)
    if not dsn:
        logger.debug("no Sentry DSN configured; error tracking disabled")
        return False

    from . import __version__

    try:
        sentry_sdk.init(
            dsn=dsn,
            environment=environment or os.environ.get("OBSCERT_ENV", "development"),
            traces_sample_rate=traces_sample_rate,
            send_default_pii=False,
            attach_stacktrace=True,
            release=f"obscert@{__version__}",
        )
        sentry_sdk.set_tag("service", "obscert")
        sentry_sdk.set_tag("python_version", platform.python_version())
    except Exception as exc:  # noqa: BLE001 - a broken DSN must not stop a run
        logger.warning("failed to initialize Sentry: %s", exc)
        return False
    _initialized = True
    logger.info("Sentry error tracking enabled")
    return True


def is_active() -> bool:
    return SENTRY_AVAILABLE and _initialized


def capture_error(
    error: BaseException,
    level: str = ErrorLevel.ERROR,
    context: Optional[Dict[str, Any]] = None,
    tags: Optional[Dict[str, str]] = None,
) -> Optional[str]:
    """
    Send an exception to Sentry with context; log it when Sentry is inactive.

    ``ObscertError`` payloads (violations, residual histories) are attached as
    the ``obscert_error`` context.

    Returns:
        Sentry event ID if captured, None otherwise
    """
    if not is_active():
        logger.log(
            logging.WARNING if level == ErrorLevel.WARNING else logging.ERROR,
            "%s: %s%s",
            type(error).__name__,
            error,
            f" (context: {context})" if context else "",
        )
        return None

    with sentry_sdk.new_scope() as scope:
        scope.level = level
        for key, value in (tags or {}).items():
            scope.set_tag(key, value)
        if context:
            scope.set_context("run", context)
        if isinstance(error, ObscertError):
            scope.set_tag("exit_code", str(error.exit_code))
            scope.set_context("obscert_error", error.to_dict())
        return sentry_sdk.capture_exception(error)


def capture_warning(
    message: str,
    context: Optional[Dict[str, Any]] = None,
    tags: Optional[Dict[str, str]] = None,
) -> Optional[str]:
    if not is_active():
        logger.warning("%s", message)
        return None

    with sentry_sdk.new_scope() as scope:
        scope.level = ErrorLevel.WARNING
        for key, value in (tags or {}).items():
            scope.set_tag(key, value)
        if context:
            scope.set_context("run", context)
        return sentry_sdk.capture_message(message)


@contextmanager
def track_operation(operation_name: str, op_type: str = "experiment", **attributes: Any) -> Iterator[Any]:
    """
    Span around one experiment command.

    A failing body marks the span and re-raises; reporting the exception is
    left to the caller.
    """
    if not is_active():
        yield None
        return

    with sentry_sdk.start_span(op=op_type, name=operation_name) as span:
        for key, value in attributes.items():
            span.set_data(key, str(value) if value is not None else None)
        try:
            yield span
        except Exception:
            span.set_status("internal_error")
            raise
