"""
Experiment config validation.

Checks a loaded config mapping against the per-command parameter schema
before anything is computed: required keys, value kinds, ranges and the
nested grid / symbol / mask specs. Unknown keys are errors.
"""

import json
import math
import numbers
from enum import Enum
from typing import Any, Callable, Dict, List, Mapping, Optional, Tuple

from .thickness import MASK_FAMILIES


class ValidationLevel(Enum):
    ERROR = "error"
    WARNING = "warning"
    INFO = "info"
    SUCCESS = "success"


class ValidationMessage:
    """One finding, tied to a dotted config path when it has one."""

    def __init__(
        self,
        level: ValidationLevel,
        message: str,
        property_name: Optional[str] = None,
        suggestion: Optional[str] = None,
    ):
        self.level = level
        self.message = message
        self.property_name = property_name
        self.suggestion = suggestion

    def to_dict(self) -> Dict[str, Any]:
        result = {"level": self.level.value, "message": self.message}
        if self.property_name:
            result["property"] = self.property_name
        if self.suggestion:
            result["suggestion"] = self.suggestion
        return result

    def __str__(self) -> str:
        prefix = f"[{self.level.value.upper()}]"
        prop = f" ({self.property_name})" if self.property_name else ""
        return f"{prefix}{prop}: {self.message}"


class ValidationReport:
    """Messages collected while validating one config."""

    def __init__(self, command: str):
        self.command = command
        self.messages: List[ValidationMessage] = []

    def add_message(
        self,
        level: ValidationLevel,
        message: str,
        property_name: Optional[str] = None,
        suggestion: Optional[str] = None,
    ) -> None:
        self.messages.append(ValidationMessage(level, message, property_name, suggestion))

    def add_error(self, message: str, property_name: Optional[str] = None, suggestion: Optional[str] = None) -> None:
        self.add_message(ValidationLevel.ERROR, message, property_name, suggestion)

    def add_warning(self, message: str, property_name: Optional[str] = None, suggestion: Optional[str] = None) -> None:
        self.add_message(ValidationLevel.WARNING, message, property_name, suggestion)

    def add_info(self, message: str, property_name: Optional[str] = None, suggestion: Optional[str] = None) -> None:
        self.add_message(ValidationLevel.INFO, message, property_name, suggestion)

    def add_success(self, message: str) -> None:
        self.add_message(ValidationLevel.SUCCESS, message)

    def has_errors(self) -> bool:
        return any(msg.level == ValidationLevel.ERROR for msg in self.messages)

    def has_warnings(self) -> bool:
        return any(msg.level == ValidationLevel.WARNING for msg in self.messages)

    def is_valid(self) -> bool:
        return not self.has_errors()

    def get_messages_by_level(self, level: ValidationLevel) -> List[ValidationMessage]:
        return [msg for msg in self.messages if msg.level == level]

    def errors(self) -> List[str]:
        return [str(msg) for msg in self.get_messages_by_level(ValidationLevel.ERROR)]

    def get_statistics(self) -> Dict[str, int]:
        return {
            "total": len(self.messages),
            "errors": len(self.get_messages_by_level(ValidationLevel.ERROR)),
            "warnings": len(self.get_messages_by_level(ValidationLevel.WARNING)),
            "info": len(self.get_messages_by_level(ValidationLevel.INFO)),
            "success": len(self.get_messages_by_level(ValidationLevel.SUCCESS)),
        }

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "valid": self.is_valid(),
            "statistics": self.get_statistics(),
            "messages": [msg.to_dict() for msg in self.messages],
        }

    def to_json(self, indent: int = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def print_summary(self) -> None:
        stats = self.get_statistics()
        print(f"\n{'=' * 60}")
        print(f"Config Validation Report: {self.command}")
        print(f"{'=' * 60}")
        print(f"Status: {'VALID' if self.is_valid() else 'INVALID'}")
        print(f"  Errors: {stats['errors']}  Warnings: {stats['warnings']}  Info: {stats['info']}")
        if self.messages:
            print("\nMessages:")
            for msg in self.messages:
                print(f"  {msg}")
        print(f"{'=' * 60}\n")

    def __str__(self) -> str:
        return f"ValidationReport(command={self.command}, valid={self.is_valid()}, messages={len(self.messages)})"


# =============================================================================
# Value kinds
# =============================================================================

Check = Callable[[Any], Optional[str]]


def _is_number(value: Any) -> bool:
    return isinstance(value, numbers.Real) and not isinstance(value, bool)


def _number(value: Any) -> Optional[str]:
    if not _is_number(value) or not math.isfinite(value):
        return f"expected a finite number, got {value!r}"
    return None


def _positive(value: Any) -> Optional[str]:
    return _number(value) or (None if value > 0 else f"must be > 0, got {value!r}")


def _nonnegative(value: Any) -> Optional[str]:
    return _number(value) or (None if value >= 0 else f"must be >= 0, got {value!r}")


def _at_least_one(value: Any) -> Optional[str]:
    return _number(value) or (None if value >= 1 else f"must be >= 1, got {value!r}")


def _unit_interval(value: Any) -> Optional[str]:
    return _number(value) or (None if 0 <= value <= 1 else f"must lie in [0, 1], got {value!r}")


def _posint(value: Any) -> Optional[str]:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 1:
        return f"expected a positive integer, got {value!r}"
    return None


def _nonnegative_int(value: Any) -> Optional[str]:
    if isinstance(value, bool) or not isinstance(value, numbers.Integral) or value < 0:
        return f"expected a non-negative integer, got {value!r}"
    return None


def _boolean(value: Any) -> Optional[str]:
    return None if isinstance(value, bool) else f"expected true/false, got {value!r}"


def _index(value: Any) -> Optional[str]:
    """Integrability index: a number >= 1 or "inf"."""
    if isinstance(value, str) and value.strip().lower() in ("inf", "infinity"):
        return None
    if _is_number(value) and (value >= 1 or math.isinf(value)) and not math.isnan(value):
        return None
    return f"expected a number >= 1 or 'inf', got {value!r}"


def _choice(*options: str) -> Check:
    def check(value: Any) -> Optional[str]:
        return None if value in options else f"expected one of {', '.join(options)}, got {value!r}"

    return check


def _list_of(item: Check, allow_scalar: bool = False) -> Check:
    def check(value: Any) -> Optional[str]:
        if allow_scalar and not isinstance(value, (list, tuple)):
            return item(value)
        if not isinstance(value, (list, tuple)) or not value:
            return f"expected a non-empty list, got {value!r}"
        for i, entry in enumerate(value):
            problem = item(entry)
            if problem:
                return f"entry {i}: {problem}"
        return None

    return check


def _mapping(value: Any) -> Optional[str]:
    return None if isinstance(value, Mapping) else f"expected a mapping, got {value!r}"


# =============================================================================
# Schemas
# =============================================================================

# name -> (check, required)
ParamSchema = Dict[str, Tuple[Check, bool]]

_FIT: ParamSchema = {
    "fit_lambdas": (_list_of(_positive), False),
    "fit_samples": (_posint, False),
}

COMMAND_SCHEMAS: Dict[str, ParamSchema] = {
    "cert": {
        "M": (_at_least_one, True),
        "omega": (_number, False),
        "lambda_star": (_nonnegative, False),
        "d0": (_positive, False),
        "log_d0": (_number, False),
        "d1": (_nonnegative, True),
        "gamma1": (_positive, True),
        "d2": (_at_least_one, True),
        "d3": (_positive, True),
        "gamma2": (_positive, True),
        "gamma3": (_positive, True),
        "norm_C": (_positive, False),
        "T": (_positive, True),
        "r": (_index, False),
        "rel_tol": (_positive, False),
        "allow_zero_d1": (_boolean, False),
    },
    "elliptic-cert": {
        "rho": (_unit_interval, True),
        "L": (_list_of(_positive, allow_scalar=True), True),
        "K": (_at_least_one, False),
        "symbol": (_mapping, False),
        "d": (_posint, False),
        "c": (_positive, False),
        "m": (_posint, False),
        "p": (_index, False),
        "M": (_at_least_one, False),
        "C_d": (_nonnegative, False),
        "T": (_positive, True),
        "r": (_index, False),
        "rel_tol": (_positive, False),
        "p_values": (_list_of(_index), False),
    },
    "verify-ur": {
        "grid": (_mapping, True),
        "mask": (_mapping, True),
        "lambdas": (_list_of(_positive), True),
        "samples": (_posint, False),
        "p": (_index, False),
    },
    "verify-diss": {
        "grid": (_mapping, True),
        "symbol": (_mapping, True),
        "lambdas": (_list_of(_positive), True),
        "times": (_list_of(_positive), True),
        "c": (_positive, False),
    },
    "verify-obs": {
        "grid": (_mapping, True),
        "symbol": (_mapping, True),
        "mask": (_mapping, True),
        "T": (_positive, True),
        "r": (_index, False),
        "p": (_index, False),
        "samples": (_posint, False),
        "n_t": (_posint, False),
        "kind": (_choice("white", "band_limited", "gaussian_bump"), False),
        "lam": (_positive, False),
        **_FIT,
    },
    "counterexample": {
        "symbol": (_mapping, True),
        "radii": (_list_of(_nonnegative), True),
        "T": (_positive, True),
        "r": (_index, False),
        "p": (_index, False),
        "box_factor": (_positive, False),
        "dx": (_positive, False),
        "n_t": (_posint, False),
        "d": (_posint, False),
        "monotone_slack": (_unit_interval, False),
    },
    "thickness": {
        "grid": (_mapping, True),
        "mask": (_mapping, True),
        "L": (_list_of(_list_of(_positive, allow_scalar=True)), True),
        "brute_force": (_boolean, False),
        "save_mask": (_boolean, False),
    },
    "control": {
        "grid": (_mapping, True),
        "symbol": (_mapping, True),
        "mask": (_mapping, True),
        "x0": (_mapping, False),
        "T": (_positive, True),
        "n_t": (_posint, False),
        "cg_tol": (_positive, False),
        "cg_maxiter": (_posint, False),
        "regularization": (_nonnegative, False),
        "auto_regularize": (_boolean, False),
        "frames": (_boolean, False),
        "frame_stride": (_posint, False),
        **_FIT,
    },
}

TOP_LEVEL_KEYS = {"command": True, "seed": False, "threads": False, "params": True, "description": False}

GRID_KEYS: ParamSchema = {"d": (_posint, True), "N": (_posint, True), "box": (_list_of(_positive, allow_scalar=True), True)}

SYMBOL_KINDS: Dict[str, ParamSchema] = {
    "laplacian": {},
    "power_sum": {"m": (_posint, True)},
    "polyharmonic": {"k": (_posint, True)},
    "matrix": {"matrix": (_list_of(_list_of(_number)), True)},
    "coefficients": {"coeffs": (_list_of(_mapping), True)},
}

MASK_KEYS: Dict[str, ParamSchema] = {
    "full": {},
    "periodic_stripes": {"duty": (_unit_interval, True), "period": (_positive, True), "axis": (_nonnegative_int, False)},
    "random": {"density": (_unit_interval, True)},
    "holed": {
        "radius": (_nonnegative, True),
        "center": (_list_of(_number), False),
        "base": (_mapping, False),
    },
}

X0_KINDS: Dict[str, ParamSchema] = {
    "white": {},
    "band_limited": {"lam": (_positive, True)},
    "gaussian_bump": {"s": (_positive, False), "center": (_list_of(_number), False)},
}

assert set(MASK_KEYS) == set(MASK_FAMILIES)


class ConfigValidator:
    """
    Validates experiment configs.

    Usage:
        report = ConfigValidator().validate(config)
        if not report.is_valid():
            report.print_summary()
    """

    def validate(self, config: Any) -> ValidationReport:
        command = config.get("command", "unknown") if isinstance(config, Mapping) else "unknown"
        report = ValidationReport(str(command))
        if not isinstance(config, Mapping):
            report.add_error("config must be a mapping", suggestion="Write a JSON object or YAML mapping")
            return report

        self._check_keys(config, TOP_LEVEL_KEYS, "", report)
        if command not in COMMAND_SCHEMAS:
            report.add_error(
                f"unknown command {command!r}",
                "command",
                f"Use one of: {', '.join(sorted(COMMAND_SCHEMAS))}",
            )
            return report
        if "seed" in config:
            seed = config["seed"]
            if isinstance(seed, bool) or not isinstance(seed, numbers.Integral) or not 0 <= seed < 2 ** 64:
                report.add_error(f"seed must be an unsigned 64-bit integer, got {seed!r}", "seed")
        if "threads" in config and _posint(config["threads"]):
            report.add_error(_posint(config["threads"]), "threads")

        params = config.get("params")
        if params is None:
            return report
        if not isinstance(params, Mapping):
            report.add_error("params must be a mapping", "params")
            return report
        self._check_params(params, COMMAND_SCHEMAS[command], "params", report)
        self._check_nested(command, params, report)

        if report.is_valid():
            report.add_success(f"config for {command!r} is valid")
        return report

    def _check_keys(self, data: Mapping, schema: Mapping[str, Any], path: str, report: ValidationReport) -> None:
        for key in data:
            if key not in schema:
                report.add_error(f"unknown key {key!r}", _join(path, key), f"Allowed: {', '.join(sorted(schema))}")
        for key, spec in schema.items():
            required = spec if isinstance(spec, bool) else spec[1]
            if required and key not in data:
                report.add_error(f"missing required key {key!r}", _join(path, key))

    def _check_params(self, data: Mapping, schema: ParamSchema, path: str, report: ValidationReport) -> None:
        self._check_keys(data, schema, path, report)
        for key, (check, _) in schema.items():
            if key in data:
                problem = check(data[key])
                if problem:
                    report.add_error(problem, _join(path, key))

    def _check_nested(self, command: str, params: Mapping, report: ValidationReport) -> None:
        d = None
        grid = params.get("grid")
        if isinstance(grid, Mapping):
            d = self._check_grid(grid, report)
        elif command == "counterexample":
            d = params.get("d", 1)
        elif command == "elliptic-cert":
            d = params.get("d")

        symbol = params.get("symbol")
        if isinstance(symbol, Mapping):
            self._check_tagged(symbol, "kind", SYMBOL_KINDS, "params.symbol", report, extra={"d": (_posint, False)})
            if d is not None and symbol.get("d", d) != d:
                report.add_error(f"symbol dimension {symbol.get('d')} != grid dimension {d}", "params.symbol.d")

        mask = params.get("mask")
        if isinstance(mask, Mapping):
            self._check_mask(mask, "params.mask", report)

        x0 = params.get("x0")
        if isinstance(x0, Mapping):
            self._check_tagged(x0, "kind", X0_KINDS, "params.x0", report)

        if command == "cert" and ("d0" in params) == ("log_d0" in params):
            report.add_error("give exactly one of d0 and log_d0", "params.d0")
        if command == "cert" and params.get("d1") == 0 and not params.get("allow_zero_d1", False):
            report.add_warning("d1 = 0 needs allow_zero_d1: true", "params.d1")
        if command == "elliptic-cert" and "symbol" not in params and not ("c" in params and "m" in params):
            report.add_error("give a symbol, or both c and m", "params.symbol")
        if command == "elliptic-cert" and "symbol" not in params and "d" not in params:
            if not isinstance(params.get("L"), (list, tuple)):
                report.add_error("scalar L needs the dimension d", "params.d")
        if command in ("verify-obs", "control") and "fit_samples" in params and "fit_lambdas" not in params:
            report.add_warning("fit_samples has no effect without fit_lambdas", "params.fit_samples")
        if isinstance(grid, Mapping) and command in ("verify-ur", "verify-obs", "control"):
            self._check_nyquist(grid, params, report)

    def _check_grid(self, grid: Mapping, report: ValidationReport) -> Optional[int]:
        self._check_params(grid, GRID_KEYS, "params.grid", report)
        d = grid.get("d")
        if _posint(d) is None and not 1 <= d <= 3:
            report.add_error(f"grid dimension must be 1, 2 or 3, got {d}", "params.grid.d")
        box = grid.get("box")
        if isinstance(box, (list, tuple)) and isinstance(d, int) and len(box) != d:
            report.add_error(f"box has {len(box)} entries for d = {d}", "params.grid.box")
        N = grid.get("N")
        if isinstance(N, int) and not isinstance(N, bool) and (N < 8 or N & (N - 1)):
            report.add_error(f"N must be a power of two >= 8, got {N}", "params.grid.N")
        return d if isinstance(d, int) else None

    def _check_mask(self, mask: Mapping, path: str, report: ValidationReport) -> None:
        self._check_tagged(mask, "family", MASK_KEYS, path, report)
        base = mask.get("base")
        if isinstance(base, Mapping):
            self._check_mask(base, _join(path, "base"), report)

    def _check_tagged(
        self,
        data: Mapping,
        tag: str,
        kinds: Mapping[str, ParamSchema],
        path: str,
        report: ValidationReport,
        extra: Optional[ParamSchema] = None,
    ) -> None:
        kind = data.get(tag)
        if kind not in kinds:
            report.add_error(f"{tag} must be one of {', '.join(kinds)}, got {kind!r}", _join(path, tag))
            return
        schema = {tag: (_choice(*kinds), True), **kinds[kind], **(extra or {})}
        self._check_params(data, schema, path, report)

    def _check_nyquist(self, grid: Mapping, params: Mapping, report: ValidationReport) -> None:
        try:
            d, N = int(grid["d"]), int(grid["N"])
            box = grid["box"]
            dx = min(b / N for b in (box if isinstance(box, (list, tuple)) else [box] * d))
        except (KeyError, TypeError, ValueError, ZeroDivisionError):
            return
        nyquist = math.pi / dx
        lambdas = list(params.get("lambdas") or []) + list(params.get("fit_lambdas") or [])
        high = [lam for lam in lambdas if _is_number(lam) and lam >= nyquist / 4]
        if high:
            report.add_error(
                f"lambdas {high} reach nyquist/4 = {nyquist / 4:.6g}",
                "params.lambdas",
                "Increase N or shrink the box",
            )


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key
