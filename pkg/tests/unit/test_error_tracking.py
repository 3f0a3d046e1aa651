"""
Unit tests for optional Sentry error tracking.

Sentry is never contacted: the SDK is either inactive or patched.
"""

import logging
from unittest.mock import MagicMock, patch

import pytest

from src import error_tracking
from src.base import NonConvergenceError


@pytest.fixture(autouse=True)
def inactive_sentry(monkeypatch):
    monkeypatch.setattr(error_tracking, "_initialized", False)
    for name in error_tracking.DSN_ENV_VARS:
        monkeypatch.delenv(name, raising=False)


class TestInitSentry:
    """Tests for init_sentry."""

    def test_no_dsn(self):
        """Test that a missing DSN leaves tracking off."""
        assert error_tracking.init_sentry() is False
        assert not error_tracking.is_active()

    def test_dsn_from_environment(self, monkeypatch):
        """Test that the first configured DSN variable wins."""
        monkeypatch.setenv("SENTRY_DSN", "https://generic@example.invalid/1")
        assert error_tracking.resolve_dsn() == "https://generic@example.invalid/1"
        monkeypatch.setenv("OBSCERT_SENTRY_DSN", "https://own@example.invalid/2")
        assert error_tracking.resolve_dsn() == "https://own@example.invalid/2"
        assert error_tracking.resolve_dsn("https://explicit@example.invalid/3").endswith("/3")

    def test_init_failure_is_not_fatal(self, monkeypatch):
        """Test that a failing SDK init is logged and tracking stays off."""
        fake = MagicMock()
        fake.init.side_effect = RuntimeError("bad dsn")
        monkeypatch.setattr(error_tracking, "SENTRY_AVAILABLE", True)
        monkeypatch.setattr(error_tracking, "sentry_sdk", fake)
        assert error_tracking.init_sentry("https://x@example.invalid/1") is False
        assert not error_tracking.is_active()


class TestCapture:
    """Tests for capture_error, capture_warning and track_operation."""

    def test_capture_error_logs_when_inactive(self, caplog):
        """Test that errors fall back to logging."""
        with caplog.at_level(logging.ERROR, logger="src.error_tracking"):
            result = error_tracking.capture_error(
                NonConvergenceError("CG stalled", [1.0, 0.5]), context={"command": "control"}
            )
        assert result is None
        assert "NonConvergenceError: CG stalled" in caplog.text
        assert "control" in caplog.text

    def test_capture_warning_logs_when_inactive(self, caplog):
        """Test that warnings fall back to logging."""
        with caplog.at_level(logging.WARNING, logger="src.error_tracking"):
            assert error_tracking.capture_warning("not certified") is None
        assert "not certified" in caplog.text

    def test_capture_error_attaches_payload(self, monkeypatch):
        """Test that obscert errors carry their exit code and payload to Sentry."""
        fake = MagicMock()
        scope = fake.new_scope.return_value.__enter__.return_value
        fake.capture_exception.return_value = "event-1"
        monkeypatch.setattr(error_tracking, "SENTRY_AVAILABLE", True)
        monkeypatch.setattr(error_tracking, "sentry_sdk", fake)
        monkeypatch.setattr(error_tracking, "_initialized", True)

        error = NonConvergenceError("CG stalled", [1.0])
        assert error_tracking.capture_error(error, tags={"command": "control"}) == "event-1"
        scope.set_tag.assert_any_call("exit_code", "4")
        scope.set_tag.assert_any_call("command", "control")
        scope.set_context.assert_called_with("obscert_error", error.to_dict())

    def test_track_operation_inactive(self):
        """Test that spans are skipped and exceptions pass through."""
        with error_tracking.track_operation("cert") as span:
            assert span is None
        with pytest.raises(ValueError):
            with error_tracking.track_operation("cert"):
                raise ValueError("boom")

    def test_track_operation_marks_span_without_capturing(self, monkeypatch):
        """Test that an active span records the failure and leaves capture to the caller."""
        fake = MagicMock()
        span = fake.start_span.return_value.__enter__.return_value
        monkeypatch.setattr(error_tracking, "SENTRY_AVAILABLE", True)
        monkeypatch.setattr(error_tracking, "sentry_sdk", fake)
        monkeypatch.setattr(error_tracking, "_initialized", True)
        with patch.object(error_tracking, "capture_error") as capture:
            with pytest.raises(NonConvergenceError):
                with error_tracking.track_operation("control", seed=3):
                    raise NonConvergenceError("stalled")
        capture.assert_not_called()
        fake.capture_exception.assert_not_called()
        span.set_status.assert_called_once_with("internal_error")
        span.set_data.assert_any_call("seed", "3")
