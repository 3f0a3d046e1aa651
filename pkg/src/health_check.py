"""
Dependency health check.

Reports which packages obscert can import and what is lost without each
optional one. Backs the ``obscert health`` subcommand.
"""

import importlib
import logging
import sys
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple

logger = logging.getLogger(__name__)

MIN_PYTHON = (3, 9)

# (key, import name, display name, required, impact when missing)
_PACKAGES: List[Tuple[str, str, str, bool, str]] = [
    ("numpy", "numpy", "NumPy (grid arithmetic)", True, "nothing runs - pip install numpy"),
    ("scipy", "scipy", "SciPy (FFT, linprog)", True, "no simulation or fits - pip install scipy"),
    ("yaml", "yaml", "PyYAML (config loader)", True, "no config files - pip install PyYAML"),
    ("database", "sqlalchemy", "SQLAlchemy (run ledger)", True, "use --no-db - pip install sqlalchemy"),
    ("pillow", "PIL", "Pillow (mask bitmaps)", True, "no PBM masks - pip install Pillow"),
    ("tqdm", "tqdm", "tqdm (progress bars)", True, "no progress bars - pip install tqdm"),
    ("sentry", "sentry_sdk", "Error Tracking (Sentry)", False, "errors only logged - pip install sentry-sdk"),
    ("hypothesis", "hypothesis", "Hypothesis (property tests)", False, "property tests skipped"),
]


@dataclass
class FeatureStatus:
    name: str
    available: bool
    version: Optional[str] = None
    error: Optional[str] = None
    impact: str = ""
    required: bool = True


class SystemHealthChecker:
    """
    Validates dependencies and reports feature availability.

    Usage:
        checker = SystemHealthChecker().run_all_checks()
        checker.print_status()
        if checker.is_available("sentry"):
            ...
    """

    def __init__(self):
        self.features: Dict[str, FeatureStatus] = {}
        self._checked = False

    def run_all_checks(self) -> "SystemHealthChecker":
        self._check_python_version()
        for key, module, name, required, impact in _PACKAGES:
            self._check_package(key, module, name, required, impact)
        self._checked = True
        return self

    def _check_python_version(self) -> None:
        version = ".".join(str(v) for v in sys.version_info[:3])
        available = sys.version_info >= MIN_PYTHON
        self.features["python"] = FeatureStatus(
            name="Python",
            available=available,
            version=version,
            error=None if available else f"Requires Python {MIN_PYTHON[0]}.{MIN_PYTHON[1]}+",
            impact="Core functionality",
        )

    def _check_package(self, key: str, module: str, name: str, required: bool, impact: str) -> None:
        try:
            imported = importlib.import_module(module)
        except ImportError as exc:
            self.features[key] = FeatureStatus(name, False, error=str(exc), impact=impact, required=required)
            return
        version = getattr(imported, "__version__", None) or getattr(imported, "VERSION", None)
        self.features[key] = FeatureStatus(name, True, version=str(version) if version else None, required=required)

    def is_available(self, feature: str) -> bool:
        if not self._checked:
            self.run_all_checks()
        return self.features.get(feature, FeatureStatus("unknown", False)).available

    def get_status(self, feature: str) -> Optional[FeatureStatus]:
        if not self._checked:
            self.run_all_checks()
        return self.features.get(feature)

    @property
    def healthy(self) -> bool:
        """Every required feature is available."""
        if not self._checked:
            self.run_all_checks()
        return all(f.available for f in self.features.values() if f.required)

    def print_status(self, verbose: bool = False) -> None:
        if not self._checked:
            self.run_all_checks()

        available_count = sum(1 for f in self.features.values() if f.available)
        total_count = len(self.features)

        print("\n" + "=" * 60)
        print("OBSCERT HEALTH CHECK")
        print("=" * 60)
        for feature in self.features.values():
            status = "[OK]" if feature.available else ("[!!]" if feature.required else "[--]")
            version = f" v{feature.version}" if feature.version and feature.available else ""
            print(f"  {status} {feature.name}{version}")
            if verbose or not feature.available:
                if feature.error:
                    print(f"       Error: {feature.error}")
                if not feature.available:
                    print(f"       Impact: {feature.impact}")
        print("-" * 60)
        print(f"Features available: {available_count}/{total_count}")
        print("Required stack: " + ("complete" if self.healthy else "INCOMPLETE"))
        print("=" * 60 + "\n")

    def to_dict(self) -> dict:
        if not self._checked:
            self.run_all_checks()
        return {
            name: {
                "available": f.available,
                "version": f.version,
                "error": f.error,
                "impact": f.impact,
                "required": f.required,
            }
            for name, f in self.features.items()
        }


_checker: Optional[SystemHealthChecker] = None


def get_health_checker() -> SystemHealthChecker:
    global _checker
    if _checker is None:
        _checker = SystemHealthChecker()
    return _checker


def check_system(verbose: bool = False) -> SystemHealthChecker:
    checker = get_health_checker().run_all_checks()
    checker.print_status(verbose=verbose)
    return checker

