"""
Experiment runner: config loading, dispatch to the numerical modules, CSV and
JSON artifacts, the run manifest and the run ledger.

Every command writes into one output directory:

    <command>.json     full result record
    <table>.csv        fixed column order, floats with 17 significant digits
    constants.csv      every certified or measured constant
    manifest.json      config hash, seeds, versions, artifact sha256, constants
    failure_report.json   only when the run fails

CSV files and the manifest carry no timestamps, so a rerun with the same
config and seed reproduces them byte for byte.
"""

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Mapping, Optional, Sequence, Tuple, Union

import yaml

from .base import (
    ArtifactIOError,
    HypothesisViolationError,
    InvalidConfigError,
    InvalidParamsError,
    ObscertError,
    format_float,
    parse_index,
    representable_exp,
    resolve_threads,
    to_jsonable,
)
from .cert_engine import (
    AbstractParams,
    CertBundle,
    DEFAULT_REL_TOL,
    certify,
    dissipation_constants,
    elliptic_cobs,
    log_elliptic_closed_form,
    ls_constants,
    p_sweep,
)
from .control import DEFAULT_CG_MAXITER, DEFAULT_CG_TOL, hum_control, write_trajectory
from .error_tracking import capture_error, capture_warning, track_operation
from .provenance import (
    Stage,
    config_hash,
    file_sha256,
    library_versions,
    run_iri,
    seed_sequence,
    validate_seed,
)
from .spectral_sim import (
    EllipticSymbol,
    Field,
    GridSpec,
    ellipticity_constant,
    estimate_M_and_Cd,
    from_coefficients,
    from_matrix,
    laplacian,
    polyharmonic,
    power_sum,
    sample_field,
)
from .storage import RunStore
from .thickness import (
    THICKNESS_COLUMNS,
    Mask,
    gen_mask,
    save_mask,
    thickness_rho,
    thickness_rho_bruteforce,
)
from .validator import ConfigValidator, ValidationLevel
from .verify import (
    COUNTEREXAMPLE_COLUMNS,
    DISSIPATION_COLUMNS,
    FIT_COLUMNS,
    RATIO_COLUMNS,
    GridGrowth,
    assemble_bound,
    check_dissipation,
    counterexample_sweep,
    estimate_observability_ratio,
    fit_uncertainty,
)

logger = logging.getLogger(__name__)

SEED_RULE = "numpy.random.SeedSequence(entropy=seed, spawn_key=(stage, index))"
CONSTANT_COLUMNS = ["name", "value", "log_value"]


# =============================================================================
# Config
# =============================================================================


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated experiment: command, parameters, master seed, thread cap."""

    command: str
    params: Dict[str, Any]
    seed: int = 0
    threads: int = 1
    description: str = ""

    @classmethod
    def from_mapping(
        cls,
        data: Mapping[str, Any],
        command: Optional[str] = None,
        seed: Optional[int] = None,
        threads: Optional[int] = None,
    ) -> "ExperimentConfig":
        """
        Validate ``data`` and build a config. Explicit arguments override the
        file (the CLI flags); ``threads`` falls back to $OBSCERT_THREADS.

        Raises:
            InvalidConfigError: schema violations, listed in the attached report
        """
        if not isinstance(data, Mapping):
            raise InvalidConfigError("config must be a mapping")
        data = dict(data)
        if command is not None:
            if data.get("command", command) != command:
                raise InvalidConfigError(
                    f"config is for {data['command']!r}, invoked as {command!r}"
                )
            data["command"] = command
        if seed is not None:
            data["seed"] = seed
        if threads is not None:
            data["threads"] = threads
        data.setdefault("params", {})

        report = ConfigValidator().validate(data)
        if not report.is_valid():
            raise InvalidConfigError(
                "invalid config: " + "; ".join(report.errors()), report.to_dict()
            )
        for message in report.get_messages_by_level(ValidationLevel.WARNING):
            logger.warning("config: %s", message)
        try:
            resolved_threads = resolve_threads(data.get("threads"))
        except InvalidParamsError as exc:
            raise InvalidConfigError(str(exc)) from exc
        return cls(
            command=data["command"],
            params=dict(data["params"]),
            seed=validate_seed(data.get("seed", 0)),
            threads=resolved_threads,
            description=str(data.get("description", "")),
        )

    def canonical(self) -> Dict[str, Any]:
        """What the config hash covers: command and parameters."""
        return {"command": self.command, "params": self.params}

    @property
    def config_hash(self) -> str:
        return config_hash(self.canonical())

    @property
    def run_iri(self) -> str:
        return run_iri(self.config_hash, self.seed)

    def get(self, key: str, default: Any = None) -> Any:
        return self.params.get(key, default)


def load_config(path: Union[str, Path]) -> Dict[str, Any]:
    """Read a JSON or YAML config file (JSON is valid YAML)."""
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ArtifactIOError(f"cannot read config {path}: {exc}") from exc
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise InvalidConfigError(f"{path}: not valid JSON/YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidConfigError(f"{path}: top level must be a mapping")
    return data


# =============================================================================
# Builders for nested specs
# =============================================================================


def build_grid(spec: Mapping[str, Any]) -> GridSpec:
    return GridSpec(int(spec["d"]), int(spec["N"]), spec["box"])


def build_symbol(spec: Mapping[str, Any], d: int) -> EllipticSymbol:
    kind = spec["kind"]
    d = int(spec.get("d", d))
    if kind == "laplacian":
        return laplacian(d)
    if kind == "power_sum":
        return power_sum(d, int(spec["m"]))
    if kind == "polyharmonic":
        return polyharmonic(d, int(spec["k"]))
    if kind == "matrix":
        return from_matrix(spec["matrix"])
    if kind == "coefficients":
        coeffs = {}
        for entry in spec["coeffs"]:
            alpha = tuple(int(a) for a in entry["alpha"])
            coeffs[alpha] = complex(entry.get("re", 0.0), entry.get("im", 0.0))
        return from_coefficients(d, coeffs)
    raise InvalidParamsError(f"unknown symbol kind {kind!r}")


def build_mask(spec: Mapping[str, Any], grid: GridSpec, seed: int, index: int = 0) -> Mask:
    """Mask from a family spec; random families draw from the MASK seed stream."""
    params = {k: v for k, v in spec.items() if k != "family"}
    if "base" in params:
        params["base"] = build_mask(params["base"], grid, seed, index + 1)
    if "center" in params:
        params["center"] = tuple(float(v) for v in params["center"])
    return gen_mask(grid, spec["family"], seed_sequence(seed, Stage.MASK, index), **params)


def build_initial_state(spec: Optional[Mapping[str, Any]], grid: GridSpec, seed: int) -> Field:
    spec = dict(spec or {"kind": "white"})
    kind = spec.pop("kind")
    center = spec.pop("center", None)
    return sample_field(
        grid,
        kind,
        seed_sequence(seed, Stage.CONTROL, 0),
        lam=spec.get("lam"),
        s=spec.get("s", 1.0),
        x0=center,
    )


# =============================================================================
# Outcomes and artifacts
# =============================================================================

Table = Tuple[List[str], List[List[str]]]


@dataclass
class ExperimentOutcome:
    """
    What a runner produced. ``failure`` is raised by ``run_experiment`` only
    after every artifact is on disk, so failing runs still leave their data.
    """

    command: str
    summary: Dict[str, Any]
    tables: Dict[str, Table] = field(default_factory=dict)
    constants: Dict[str, Dict[str, Any]] = field(default_factory=dict)
    artifacts: List[Path] = field(default_factory=list)
    records: List[Any] = field(default_factory=list)
    failure: Optional[ObscertError] = None

    def add_constant(self, name: str, value: Optional[float], log_value: Optional[float] = None,
                     provenance: Optional[Dict[str, Any]] = None) -> None:
        if log_value is None and value is not None and value > 0 and math.isfinite(value):
            log_value = math.log(value)
        self.constants[name] = {"value": value, "log_value": log_value, "provenance": provenance or {}}

    def add_bundle(self, prefix: str, bundle: CertBundle) -> None:
        provenance = to_jsonable(bundle.inputs_provenance)
        self.add_constant(f"{prefix}C_obs", bundle.cobs, bundle.ln_cobs, provenance)
        self.add_constant(f"{prefix}C_obs_closed", bundle.cobs_closed, bundle.ln_cobs_closed, provenance)
        self.add_constant(f"{prefix}C1", bundle.C1, bundle.ln_C1)
        self.add_constant(f"{prefix}C2", bundle.C2)
        self.add_constant(f"{prefix}C3", bundle.C3)


def write_csv(path: Path, columns: Sequence[str], rows: Sequence[Sequence[str]]) -> Path:
    try:
        with open(path, "w", newline="") as handle:
            writer = csv.writer(handle, lineterminator="\n")
            writer.writerow(columns)
            writer.writerows(rows)
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path}: {exc}") from exc
    return path


def write_json(path: Path, data: Any) -> Path:
    try:
        path.write_text(json.dumps(to_jsonable(data), indent=2, sort_keys=True) + "\n")
    except OSError as exc:
        raise ArtifactIOError(f"cannot write {path}: {exc}") from exc
    return path


def _constant_rows(constants: Mapping[str, Mapping[str, Any]]) -> List[List[str]]:
    rows = []
    for name in sorted(constants):
        entry = constants[name]
        value, log_value = entry.get("value"), entry.get("log_value")
        rows.append([
            name,
            "" if value is None else format_float(value),
            "" if log_value is None else format_float(log_value),
        ])
    return rows


# =============================================================================
# Runners
# =============================================================================

Runner = Callable[[ExperimentConfig, Path, bool], ExperimentOutcome]
RUNNERS: Dict[str, Runner] = {}


def runner(command: str) -> Callable[[Runner], Runner]:
    def register(func: Runner) -> Runner:
        RUNNERS[command] = func
        return func

    return register


def _fit_and_bound(
    config: ExperimentConfig,
    grid: GridSpec,
    mask: Mask,
    symbol: EllipticSymbol,
    T: float,
    r: Any,
    p: Any,
    outcome: ExperimentOutcome,
    progress: bool,
) -> Optional[CertBundle]:
    """Envelope-fit (d0, d1) when ``fit_lambdas`` is given and assemble C_obs."""
    if "fit_lambdas" not in config.params:
        return None
    fit = fit_uncertainty(
        grid, mask, config.get("fit_lambdas"), config.get("fit_samples", 64), p,
        config.seed, config.threads, progress,
    )
    bounds = None if parse_index(p, "p") == 2.0 else estimate_M_and_Cd(symbol, grid)
    bundle = assemble_bound(fit, symbol, T, r, p, bounds)
    outcome.tables["fit"] = (FIT_COLUMNS, fit.rows())
    outcome.summary["fit"] = fit.to_dict()
    outcome.summary["certificate"] = bundle.to_dict()
    outcome.add_constant("d0", fit.d0, fit.ln_d0, {"source": "fitted"})
    outcome.add_constant("d1", fit.d1, None, {"source": "fitted"})
    outcome.add_bundle("", bundle)
    outcome.records.append(bundle)
    return bundle


@runner("cert")
def run_cert(config: ExperimentConfig, out_dir: Path, progress: bool) -> ExperimentOutcome:
    names = [
        "M", "omega", "lambda_star", "d0", "d1", "gamma1", "d2", "d3", "gamma2", "gamma3",
        "norm_C", "T", "log_d0",
    ]
    values = {name: config.params[name] for name in names if name in config.params}
    values.setdefault("omega", 0.0)
    values.setdefault("lambda_star", 0.0)
    values.setdefault("norm_C", 1.0)
    if "d0" not in values:
        values["d0"] = math.exp(min(values["log_d0"], 700.0))
    params = AbstractParams(r=parse_index(config.get("r", 1.0)), **values)
    bundle = certify(
        params, config.get("rel_tol", DEFAULT_REL_TOL), config.get("allow_zero_d1", False),
        {"source": "config"},
    )
    outcome = ExperimentOutcome("cert", bundle.to_dict(), records=[bundle])
    outcome.add_bundle("", bundle)
    return outcome


@runner("elliptic-cert")
def run_elliptic_cert(config: ExperimentConfig, out_dir: Path, progress: bool) -> ExperimentOutcome:
    symbol_spec = config.get("symbol")
    if symbol_spec is not None:
        L = config.get("L")
        d = int(symbol_spec.get("d", config.get("d", len(L) if isinstance(L, list) else 1)))
        symbol = build_symbol(symbol_spec, d)
        c = config.get("c")
        if c is None:
            c = ellipticity_constant(symbol)
        m = symbol.m
    else:
        c, m = config.get("c"), config.get("m")
        d = config.get("d")
    L = config.get("L")
    if not isinstance(L, list):
        L = [L] * int(d)
    p = parse_index(config.get("p", 2), "p")
    K = config.get("K", 1.0)
    T = config.get("T")
    r = parse_index(config.get("r", 2), "r")
    if p != 2.0 and ("M" not in config.params or "C_d" not in config.params):
        raise InvalidParamsError("p != 2 needs the semigroup bound M and projector bound C_d")
    M = config.get("M", 1.0)
    C_d = config.get("C_d", 1.0)

    bundle = elliptic_cobs(config.get("rho"), L, K, c, m, p, M, C_d, T, r,
                           config.get("rel_tol", DEFAULT_REL_TOL))
    unc = ls_constants(config.get("rho"), L, K)
    diss = dissipation_constants(c, m, p, M, C_d)
    ln_direct = log_elliptic_closed_form(unc, diss, M, T, r)
    summary = bundle.to_dict()
    summary["ln_elliptic_closed_form"] = ln_direct
    summary["closed_form_gap"] = abs(ln_direct - bundle.ln_cobs_closed)
    outcome = ExperimentOutcome("elliptic-cert", summary, records=[bundle])
    outcome.add_bundle("", bundle)
    outcome.add_constant("d0", None, unc.ln_d0, {"source": "uncertainty", "rho": unc.rho, "K": K})
    outcome.add_constant("d1", unc.d1)
    outcome.add_constant("d2", diss.d2)
    outcome.add_constant("d3", diss.d3)

    if config.get("p_values"):
        rows = p_sweep(config.get("p_values"), config.get("rho"), L, K, c, m, M, C_d, T, r)
        columns = ["p", "theta", "d2", "d3", "C2", "ln_cobs_closed"]
        outcome.tables["p_sweep"] = (columns, [[format_float(row[k]) for k in columns] for row in rows])
    return outcome


@runner("verify-ur")
def run_verify_ur(config: ExperimentConfig, out_dir: Path, progress: bool) -> ExperimentOutcome:
    grid = build_grid(config.get("grid"))
    mask = build_mask(config.get("mask"), grid, config.seed)
    fit = fit_uncertainty(
        grid, mask, config.get("lambdas"), config.get("samples", 64), config.get("p", 2),
        config.seed, config.threads, progress,
    )
    outcome = ExperimentOutcome("verify-ur", fit.to_dict())
    outcome.tables["fit"] = (FIT_COLUMNS, fit.rows())
    outcome.add_constant("d0", fit.d0, fit.ln_d0, {"source": "fitted", "samples": fit.samples})
    outcome.add_constant("d1", fit.d1, None, {"source": "fitted", "samples": fit.samples})
    if not fit.dominates():
        outcome.failure = HypothesisViolationError("fitted envelope does not dominate the data")
    return outcome


@runner("verify-diss")
def run_verify_diss(config: ExperimentConfig, out_dir: Path, progress: bool) -> ExperimentOutcome:
    grid = build_grid(config.get("grid"))
    symbol = build_symbol(config.get("symbol"), grid.d)
    report = check_dissipation(symbol, config.get("lambdas"), config.get("times"), grid, config.get("c"))
    outcome = ExperimentOutcome("verify-diss", report.to_dict())
    outcome.tables["dissipation"] = (DISSIPATION_COLUMNS, [e.row() for e in report.entries])
    outcome.add_constant("c", report.c, None, {"source": "sphere sampling" if config.get("c") is None else "config"})
    try:
        report.raise_for_violations()
    except HypothesisViolationError as exc:
        outcome.failure = exc
    return outcome


@runner("verify-obs")
def run_verify_obs(config: ExperimentConfig, out_dir: Path, progress: bool) -> ExperimentOutcome:
    grid = build_grid(config.get("grid"))
    symbol = build_symbol(config.get("symbol"), grid.d)
    mask = build_mask(config.get("mask"), grid, config.seed)
    T, r, p = config.get("T"), config.get("r", 2), config.get("p", 2)
    outcome = ExperimentOutcome("verify-obs", {})
    bundle = _fit_and_bound(config, grid, mask, symbol, T, r, p, outcome, progress)

    states = None
    if config.get("kind") == "band_limited":
        lam = config.get("lam")
        if lam is None:
            raise InvalidParamsError("kind band_limited needs lam")
        states = [
            sample_field(grid, "band_limited", seed_sequence(config.seed, Stage.OBSERVABILITY, i), lam=lam)
            for i in range(config.get("samples", 64))
        ]
    report = estimate_observability_ratio(
        symbol, mask, T, r, p, config.get("samples", 64), config.get("n_t", 256), config.seed,
        bound=bundle, initial_states=states, kind=config.get("kind", "white"),
        threads=config.threads, progress=progress,
    )
    outcome.summary["observability"] = report.to_dict()
    outcome.tables["ratios"] = (RATIO_COLUMNS, report.rows())
    outcome.add_constant("C_emp", report.c_emp, None, {"samples": len(report.ratios), "n_t": report.n_t})
    if report.ln_margin is not None:
        outcome.add_constant("margin", report.margin, report.ln_margin)
    outcome.records.append(report)
    if not report.acceptable:
        outcome.failure = HypothesisViolationError(
            f"ln margin {report.ln_margin:.6g} < 0: certified bound below the empirical ratio",
            report.to_dict(),
        )
    return outcome


@runner("counterexample")
def run_counterexample(config: ExperimentConfig, out_dir: Path, progress: bool) -> ExperimentOutcome:
    d = int(config.get("d", 1))
    symbol = build_symbol(config.get("symbol"), d)
    growth = GridGrowth(config.get("box_factor", 8.0), config.get("dx", 0.125))
    table = counterexample_sweep(
        symbol, config.get("radii"), config.get("T"), config.get("r", 2), config.get("p", 2),
        growth, config.get("n_t", 64), symbol.d, config.threads, progress,
    )
    ratios = table.ratios
    slack = config.get("monotone_slack", 0.01)
    summary = table.to_dict()
    summary["monotone"] = table.monotone(slack)
    summary["growth"] = ratios[-1] / ratios[0] if ratios[0] > 0 else math.inf
    summary["max_numerator_rel_error"] = table.max_numerator_rel_error
    summary["split_bound_holds"] = table.split_bound_holds
    failed = table.failed_checks(slack)
    summary["failed_checks"] = failed
    outcome = ExperimentOutcome("counterexample", summary)
    outcome.tables["counterexample"] = (COUNTEREXAMPLE_COLUMNS, [row.row() for row in table.rows])
    outcome.add_constant("ratio_growth", summary["growth"])
    if failed:
        outcome.failure = HypothesisViolationError(
            "counterexample checks failed: " + "; ".join(failed), summary
        )
    return outcome


@runner("thickness")
def run_thickness(config: ExperimentConfig, out_dir: Path, progress: bool) -> ExperimentOutcome:
    grid = build_grid(config.get("grid"))
    mask = build_mask(config.get("mask"), grid, config.seed)
    reports = [thickness_rho(mask, L) for L in config.get("L")]
    summary: Dict[str, Any] = {
        "grid": grid.to_dict(),
        "density": mask.density,
        "reports": [report.to_dict() for report in reports],
    }
    outcome = ExperimentOutcome("thickness", summary)
    outcome.tables["thickness"] = (THICKNESS_COLUMNS, [report.csv_row() for report in reports])
    for report in reports:
        label = "x".join(str(n) for n in report.window_cells)
        outcome.add_constant(f"rho[{label}]", report.rho)
    if config.get("brute_force", False):
        mismatches = [
            report.to_dict() for report, L in zip(reports, config.get("L"))
            if thickness_rho_bruteforce(mask, L).rho != report.rho
        ]
        summary["brute_force_agrees"] = not mismatches
        if mismatches:
            outcome.failure = HypothesisViolationError(
                "prefix-sum and brute-force thickness disagree", {"reports": mismatches}
            )
    if config.get("save_mask", False):
        suffix = ".obsf" if grid.d == 3 else ".pbm"
        outcome.artifacts.append(save_mask(mask, out_dir / f"mask{suffix}"))
    return outcome


@runner("control")
def run_control(config: ExperimentConfig, out_dir: Path, progress: bool) -> ExperimentOutcome:
    grid = build_grid(config.get("grid"))
    symbol = build_symbol(config.get("symbol"), grid.d)
    mask = build_mask(config.get("mask"), grid, config.seed)
    T = config.get("T")
    outcome = ExperimentOutcome("control", {})
    bundle = _fit_and_bound(config, grid, mask, symbol, T, 2, 2, outcome, progress)
    x0 = build_initial_state(config.get("x0"), grid, config.seed)
    result = hum_control(
        symbol, mask, x0, T, config.get("n_t", 64), config.get("cg_tol", DEFAULT_CG_TOL),
        config.get("cg_maxiter", DEFAULT_CG_MAXITER), bound=bundle,
        regularization=config.get("regularization", 0.0),
        auto_regularize=config.get("auto_regularize", False), threads=config.threads,
    )
    outcome.summary["control"] = result.to_dict()
    outcome.tables["cg_history"] = (
        ["iteration", "residual"],
        [[str(i), format_float(v)] for i, v in enumerate(result.residual_history)],
    )
    outcome.add_constant("cost", result.cost, None, {"certified": result.certified})
    outcome.add_constant("relative_residual", result.relative_residual)
    if result.ln_margin is not None:
        outcome.add_constant(
            "cost_margin", representable_exp(result.ln_margin, "cost margin"), result.ln_margin
        )
    if not result.certified:
        capture_warning(
            "control result is not certified",
            context={"regularization": result.regularization, "converged": result.converged},
        )
    outcome.records.append(result)
    if config.get("frames", False):
        outcome.artifacts.extend(
            write_trajectory(result, symbol, mask, x0, out_dir / "frames", config.get("frame_stride", 1))
        )
    if result.within_bound is False:
        outcome.failure = HypothesisViolationError(
            f"control cost {result.cost:.6g} exceeds C_obs ||x0|| = exp({result.ln_cost_bound:.6g})",
            result.to_dict(),
        )
    return outcome


# =============================================================================
# Orchestration
# =============================================================================


@dataclass
class RunResult:
    exit_code: int
    out_dir: Path
    manifest: Optional[Dict[str, Any]] = None
    outcome: Optional[ExperimentOutcome] = None
    error: Optional[ObscertError] = None


def build_manifest(
    config: ExperimentConfig, outcome: ExperimentOutcome, artifacts: Sequence[Path], out_dir: Path,
    exit_code: int,
) -> Dict[str, Any]:
    return {
        "command": config.command,
        "config": config.canonical(),
        "config_hash": config.config_hash,
        "run_iri": config.run_iri,
        "seed": config.seed,
        "seed_rule": SEED_RULE,
        "seed_stages": {stage.name.lower(): int(stage) for stage in Stage},
        "threads": config.threads,
        "versions": library_versions(),
        "exit_code": exit_code,
        "artifacts": [
            {"path": path.relative_to(out_dir).as_posix(), "sha256": file_sha256(path)}
            for path in sorted(artifacts)
        ],
        "constants": to_jsonable(outcome.constants),
    }


def _write_outcome(config: ExperimentConfig, outcome: ExperimentOutcome, out_dir: Path) -> List[Path]:
    written = [write_json(out_dir / f"{config.command}.json", outcome.summary)]
    for name, (columns, rows) in sorted(outcome.tables.items()):
        written.append(write_csv(out_dir / f"{name}.csv", columns, rows))
    written.append(write_csv(out_dir / "constants.csv", CONSTANT_COLUMNS, _constant_rows(outcome.constants)))
    return written + list(outcome.artifacts)


def _write_failure_report(out_dir: Path, config: Optional[ExperimentConfig], error: ObscertError) -> None:
    report = {"command": config.command if config else None, "error": error.to_dict()}
    try:
        write_json(out_dir / "failure_report.json", report)
    except ArtifactIOError as exc:
        logger.error("could not write failure report: %s", exc)


def run_experiment(
    config: ExperimentConfig,
    out_dir: Union[str, Path],
    store: Optional[RunStore] = None,
    progress: bool = False,
    print_summaries: bool = False,
) -> RunResult:
    """
    Run one experiment end to end and return its exit code.

    Exit codes follow the raised ``ObscertError``: 0 success, 2 invalid input,
    3 hypothesis violation, 4 non-convergence, 5 I/O.
    """
    out_dir = Path(out_dir)
    run_id = None
    outcome: Optional[ExperimentOutcome] = None
    manifest: Optional[Dict[str, Any]] = None
    try:
        try:
            out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as exc:
            raise ArtifactIOError(f"cannot create output directory {out_dir}: {exc}") from exc
        if store is not None:
            run_id = store.start_run(
                config.run_iri, config.command, config.config_hash, config.seed, config.threads,
                str(out_dir), library_versions(),
            )
        logger.info("running %s (seed %d, threads %d)", config.command, config.seed, config.threads)
        with track_operation(config.command, seed=config.seed, config_hash=config.config_hash):
            outcome = RUNNERS[config.command](config, out_dir, progress)
        if print_summaries:
            for record in outcome.records:
                record.print_summary()
        exit_code = outcome.failure.exit_code if outcome.failure else 0
        artifacts = _write_outcome(config, outcome, out_dir)
        manifest = build_manifest(config, outcome, artifacts, out_dir, exit_code)
        write_json(out_dir / "manifest.json", manifest)
        if store is not None:
            store.add_certificates(run_id, outcome.constants)
        if outcome.failure is not None:
            raise outcome.failure
        if store is not None:
            store.finish_run(run_id, 0)
    except ObscertError as exc:
        capture_error(exc, context={"command": config.command, "seed": config.seed})
        _write_failure_report(out_dir, config, exc)
        if manifest is not None and manifest["exit_code"] != exc.exit_code:
            manifest["exit_code"] = exc.exit_code
            try:
                write_json(out_dir / "manifest.json", manifest)
            except ArtifactIOError as manifest_exc:
                logger.error("could not update manifest: %s", manifest_exc)
        if store is not None and run_id is not None:
            try:
                store.finish_run(run_id, exc.exit_code, exc)
            except ArtifactIOError as ledger_exc:
                logger.error("could not record failed run %d: %s", run_id, ledger_exc)
        return RunResult(exc.exit_code, out_dir, manifest, outcome, exc)
    logger.info("%s finished; artifacts in %s", config.command, out_dir)
    return RunResult(0, out_dir, manifest, outcome)

