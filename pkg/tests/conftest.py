"""
Pytest configuration and shared fixtures.

Provides common fixtures for testing obscert:
- Temporary directories and databases
- Standard grids, symbols and masks
- Valid abstract certificate parameters
- Mock objects for external services
"""

import json
from pathlib import Path
from tempfile import TemporaryDirectory
from typing import Generator

import pytest


# ===========================================================================
# Directory Fixtures
# ===========================================================================

@pytest.fixture
def temp_dir() -> Generator[Path, None, None]:
    """Create temporary directory for tests."""
    with TemporaryDirectory() as tmpdir:
        yield Path(tmpdir)


@pytest.fixture
def project_root() -> Path:
    """Return the project root directory."""
    return Path(__file__).parent.parent


@pytest.fixture
def temp_db_path(temp_dir: Path) -> str:
    """Create temporary database path."""
    return str(temp_dir / "runs.db")


@pytest.fixture
def run_store(temp_db_path: str):
    """RunStore on a temp database."""
    from src.storage import RunStore
    return RunStore(temp_db_path)


# ===========================================================================
# Grid, Symbol and Mask Fixtures
# ===========================================================================

@pytest.fixture
def grid_1d():
    """d=1, N=64, box=16 (dx = 0.25)."""
    from src.spectral_sim import GridSpec
    return GridSpec(1, 64, 16.0)


@pytest.fixture
def grid_2d():
    """d=2, N=32, box=8."""
    from src.spectral_sim import GridSpec
    return GridSpec(2, 32, 8.0)


@pytest.fixture
def heat_1d():
    from src.spectral_sim import laplacian
    return laplacian(1)


@pytest.fixture
def stripes_1d(grid_1d):
    """Stripes of period 1 with duty 1/2 on the 1D grid."""
    from src.thickness import periodic_stripes
    return periodic_stripes(grid_1d, duty=0.5, period=1.0)


@pytest.fixture
def abstract_params():
    """A valid parameter set for the abstract certificate."""
    from src.cert_engine import AbstractParams
    return AbstractParams(
        M=1.5, omega=0.3, lambda_star=0.5, d0=2.0, d1=1.0, gamma1=1.0,
        d2=1.2, d3=0.4, gamma2=2.0, gamma3=1.0, norm_C=1.0, T=0.5, r=1.0,
    )


# ===========================================================================
# Config Fixtures
# ===========================================================================

@pytest.fixture
def write_config(temp_dir: Path):
    """Write a config mapping as JSON and return its path."""
    def _write(data, name="config.json") -> Path:
        path = temp_dir / name
        path.write_text(json.dumps(data, indent=2))
        return path
    return _write


@pytest.fixture
def cert_config():
    return {
        "command": "cert",
        "seed": 0,
        "params": {
            "M": 1.0, "d0": 2.0, "d1": 1.0, "gamma1": 1.0, "d2": 1.0, "d3": 0.25,
            "gamma2": 2.0, "gamma3": 1.0, "T": 0.5, "r": 2,
        },
    }


# ===========================================================================
# Mock Fixtures
# ===========================================================================

@pytest.fixture
def mock_sentry():
    """Mock Sentry for testing."""
    from unittest.mock import patch
    with patch('src.experiment.capture_error') as mock:
        yield mock


# ===========================================================================
# Pytest Configuration
# ===========================================================================

def pytest_configure(config):
    """Configure pytest markers."""
    config.addinivalue_line(
        "markers", "slow: marks tests as slow (deselect with '-m \"not slow\"')"
    )
    config.addinivalue_line(
        "markers", "integration: marks tests as integration tests"
    )
