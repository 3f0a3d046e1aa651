"""
Base types shared by every obscert module.

Provides the exception hierarchy (each class carries the CLI exit code it maps
to), the representation of the time-integrability index r (including r = inf),
a JSON record mixin for result dataclasses, and the small thread-pool helper
used by the sweep loops.
"""

import dataclasses
import json
import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from enum import Enum
from typing import Any, Callable, Dict, Iterable, List, Optional, Sequence, TypeVar, Union

import numpy as np
from tqdm import tqdm

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")

# Largest x with exp(x) representable as a finite double.
MAX_EXPONENT = math.log(np.finfo(float).max)

THREADS_ENV_VAR = "OBSCERT_THREADS"


# =============================================================================
# Errors
# =============================================================================


class ObscertError(Exception):
    """Root of all obscert errors. ``exit_code`` is what the CLI returns."""

    exit_code = 1

    def to_dict(self) -> Dict[str, Any]:
        return {"error": type(self).__name__, "message": str(self), "exit_code": self.exit_code}


class InvalidParamsError(ObscertError, ValueError):
    """Parameters violate a precondition. Carries the named violations."""

    exit_code = 2

    def __init__(self, violations: Union[str, Sequence[str]]):
        if isinstance(violations, str):
            violations = [violations]
        self.violations: List[str] = list(violations)
        super().__init__("; ".join(self.violations))

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data["violations"] = self.violations
        return data


class InvalidConfigError(ObscertError):
    """Experiment config failed schema validation."""

    exit_code = 2

    def __init__(self, message: str, report: Optional[Any] = None):
        super().__init__(message)
        self.report = report


class NonFiniteConstantError(ObscertError, ArithmeticError):
    """A constant overflowed double precision. ``expression`` names the culprit."""

    exit_code = 2

    def __init__(self, expression: str, log_value: Optional[float] = None):
        self.expression = expression
        self.log_value = log_value
        detail = f" (log value {log_value:.6g})" if log_value is not None else ""
        super().__init__(f"non-finite constant: {expression}{detail}")


class NotStronglyEllipticError(InvalidParamsError):
    """min re a(xi) on the unit sphere is not positive."""


class GridMismatchError(InvalidParamsError):
    """Operands live on different grids, dimensions or time lattices."""


class HypothesisViolationError(ObscertError):
    """A checked hypothesis or certified inequality failed."""

    exit_code = 3

    def __init__(self, message: str, report: Optional[Dict[str, Any]] = None):
        super().__init__(message)
        self.report = report or {}

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data["report"] = self.report
        return data


class CertificationError(HypothesisViolationError):
    """Series bound exceeded the closed form, or a derived invariant broke."""


class ObservationUnderflowError(HypothesisViolationError):
    """The observed quantity vanished, so the ratio is unbounded."""


class NonConvergenceError(ObscertError):
    """Iteration cap reached. ``history`` holds the residual trail."""

    exit_code = 4

    def __init__(self, message: str, history: Optional[Sequence[float]] = None):
        super().__init__(message)
        self.history: List[float] = list(history or [])

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data["history"] = self.history
        return data


class ArtifactIOError(ObscertError, OSError):
    """Reading or writing an artifact failed."""

    exit_code = 5


# =============================================================================
# Time-integrability index
# =============================================================================


class Infinity(Enum):
    """The index value r = inf (or p = inf), kept out of float arithmetic."""

    INF = "inf"

    def __str__(self) -> str:
        return self.value


INF = Infinity.INF

Index = Union[float, Infinity]

_INF_SPELLINGS = {"inf", "infinity", "∞", "+inf"}


def parse_index(value: Any, name: str = "r", lower: float = 1.0) -> Index:
    """
    Normalize an integrability index.

    Accepts numbers, ``float('inf')``, ``Infinity.INF`` and the strings
    "inf"/"infinity". Returns either a finite float ``>= lower`` or ``INF``.
    """
    if isinstance(value, Infinity):
        return value
    if isinstance(value, str):
        if value.strip().lower() in _INF_SPELLINGS:
            return INF
        try:
            value = float(value)
        except ValueError:
            raise InvalidParamsError(f"{name}: cannot parse index {value!r}") from None
    if isinstance(value, bool) or not isinstance(value, (int, float, np.floating, np.integer)):
        raise InvalidParamsError(f"{name}: expected a number or 'inf', got {value!r}")
    value = float(value)
    if math.isnan(value):
        raise InvalidParamsError(f"{name}: NaN index")
    if math.isinf(value):
        if value < 0:
            raise InvalidParamsError(f"{name}: negative infinite index")
        return INF
    if value < lower:
        raise InvalidParamsError(f"{name} must be >= {lower:g}, got {value:g}")
    return value


def is_infinite(index: Index) -> bool:
    return isinstance(index, Infinity)


def reciprocal(index: Index) -> float:
    """1/r with 1/inf = 0."""
    return 0.0 if is_infinite(index) else 1.0 / float(index)


def format_index(index: Index) -> str:
    return "inf" if is_infinite(index) else repr(float(index))


# =============================================================================
# Numeric guards
# =============================================================================


def checked_exp(log_value: float, expression: str) -> float:
    """exp(log_value), raising instead of returning inf."""
    if math.isnan(log_value):
        raise NonFiniteConstantError(expression, log_value)
    if log_value > MAX_EXPONENT:
        raise NonFiniteConstantError(expression, log_value)
    return math.exp(log_value)


def representable_exp(log_value: float, expression: str) -> Optional[float]:
    """
    exp(log_value), or None when the value lies beyond double range.

    For constants whose logarithm is the quantity of record: a finite log
    that does not fit a double is kept as a log only. NaN or infinite logs
    still raise.
    """
    if not math.isfinite(log_value):
        raise NonFiniteConstantError(expression, log_value)
    if log_value > MAX_EXPONENT:
        logger.debug("%s = exp(%.6g) exceeds double range; keeping the log", expression, log_value)
        return None
    return math.exp(log_value)


def require_finite(value: float, expression: str) -> float:
    if not math.isfinite(value):
        raise NonFiniteConstantError(expression)
    return value


# =============================================================================
# Serialization
# =============================================================================


def to_jsonable(value: Any) -> Any:
    """Convert records, enums, numpy scalars and arrays into JSON values."""
    if isinstance(value, JsonRecord):
        return value.to_dict()
    if dataclasses.is_dataclass(value) and not isinstance(value, type):
        return {f.name: to_jsonable(getattr(value, f.name)) for f in dataclasses.fields(value)}
    if isinstance(value, Enum):
        return value.value
    if isinstance(value, dict):
        return {str(k): to_jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(v) for v in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, (np.integer,)):
        return int(value)
    if isinstance(value, (np.floating, float)):
        value = float(value)
        if math.isinf(value):
            return "inf" if value > 0 else "-inf"
        if math.isnan(value):
            return "nan"
        return value
    if isinstance(value, complex):
        return {"re": value.real, "im": value.imag}
    return value


class JsonRecord:
    """
    Mixin for dataclass result records.

    Subclasses list field names in ``_json_exclude`` to keep bulky arrays out
    of the JSON form.
    """

    _json_exclude: tuple = ()

    def to_dict(self) -> Dict[str, Any]:
        return {
            f.name: to_jsonable(getattr(self, f.name))
            for f in dataclasses.fields(self)  # type: ignore[arg-type]
            if f.name not in self._json_exclude
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent, sort_keys=True)


def format_float(value: float) -> str:
    """17 significant digits, the CSV float format."""
    if isinstance(value, Infinity):
        return "inf"
    return "{:.17g}".format(float(value))


# =============================================================================
# Threads
# =============================================================================


def resolve_threads(threads: Optional[int] = None) -> int:
    """Explicit value, else $OBSCERT_THREADS, else 1."""
    if threads is None:
        env_value = os.environ.get(THREADS_ENV_VAR)
        if env_value:
            try:
                threads = int(env_value)
            except ValueError:
                raise InvalidParamsError(
                    f"{THREADS_ENV_VAR} must be an integer, got {env_value!r}"
                ) from None
        else:
            threads = 1
    if threads < 1:
        raise InvalidParamsError(f"threads must be >= 1, got {threads}")
    return threads


def parallel_map(
    func: Callable[[T], R],
    items: Iterable[T],
    threads: int = 1,
    desc: Optional[str] = None,
    progress: bool = False,
) -> List[R]:
    """
    Map ``func`` over ``items`` on a thread pool, preserving input order.

    Results come back in submission order, so downstream reductions see the
    same sequence for every thread count.
    """
    items = list(items)
    bar = tqdm(total=len(items), desc=desc, disable=not progress, leave=False)
    try:
        if threads <= 1 or len(items) <= 1:
            results = []
            for item in items:
                results.append(func(item))
                bar.update(1)
            return results

        def _run(item: T) -> R:
            result = func(item)
            bar.update(1)
            return result

        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(_run, items))
    finally:
        bar.close()
