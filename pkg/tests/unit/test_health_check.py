"""
Unit tests for the dependency health check.
"""

from unittest.mock import patch

from src.health_check import FeatureStatus, SystemHealthChecker, check_system


class TestSystemHealthChecker:
    """Tests for SystemHealthChecker."""

    def test_required_stack_present(self):
        """Test that the test environment has every required package."""
        checker = SystemHealthChecker().run_all_checks()
        for key in ("python", "numpy", "scipy", "yaml", "database", "pillow", "tqdm"):
            assert checker.is_available(key), key
        assert checker.healthy

    def test_missing_optional_package(self):
        """Test that a missing optional package does not make the stack unhealthy."""
        checker = SystemHealthChecker().run_all_checks()
        checker.features["sentry"] = FeatureStatus("Sentry", False, impact="x", required=False)
        assert checker.healthy
        assert not checker.is_available("sentry")

    def test_missing_required_package(self):
        """Test that an import failure of a required package is reported."""
        real_import = __import__("importlib").import_module

        def fake_import(name, *args, **kwargs):
            if name == "scipy":
                raise ImportError("No module named 'scipy'")
            return real_import(name, *args, **kwargs)

        with patch("src.health_check.importlib.import_module", side_effect=fake_import):
            checker = SystemHealthChecker().run_all_checks()
        status = checker.get_status("scipy")
        assert not status.available
        assert "scipy" in status.error
        assert not checker.healthy

    def test_unknown_feature(self):
        """Test that unknown features are unavailable."""
        assert not SystemHealthChecker().is_available("gpu")

    def test_to_dict(self):
        """Test the JSON form."""
        data = SystemHealthChecker().to_dict()
        assert data["numpy"]["available"] is True
        assert data["numpy"]["required"] is True

    def test_check_system_prints(self, capsys):
        """Test the printed report."""
        check_system(verbose=True)
        out = capsys.readouterr().out
        assert "OBSCERT HEALTH CHECK" in out
        assert "Required stack: complete" in out
