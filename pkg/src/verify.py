"""
Empirical verification harness.

Fits uncertainty constants from band-limited samples, checks the L2
dissipation inequality exactly at the multiplier level, measures empirical
observability ratios against a certificate, and runs the hole-growing sweep
that shows the ratio blowing up for masks that are not thick.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft as sp_fft
from scipy.optimize import linprog

from .base import (
    Index,
    HypothesisViolationError,
    InvalidParamsError,
    JsonRecord,
    NonConvergenceError,
    ObservationUnderflowError,
    format_float,
    format_index,
    is_infinite,
    parallel_map,
    parse_index,
    representable_exp,
)
from .cert_engine import (
    AbstractParams,
    CertBundle,
    DEFAULT_REL_TOL,
    certify,
    dissipation_constants,
)
from .provenance import Stage, seed_sequence
from .spectral_sim import (
    EllipticSymbol,
    Field,
    GridSpec,
    SemigroupBounds,
    cutoff_multiplier,
    ellipticity_constant,
    kernel_field,
    lp_norm,
    lp_norm_values,
    lr_time_norm,
    midpoints,
    next_power_of_two,
    projector_apply,
    sample_field,
    semigroup_apply,
    symbol_on_grid,
)
from .thickness import Mask, holed, torus_distance

logger = logging.getLogger(__name__)

DENOMINATOR_FLOOR = 1e-300
DISSIPATION_TOLERANCE = 1e-12
NUMERATOR_REL_TOL = 1e-8
MONOTONE_FROM_RADIUS = 2.0


# =============================================================================
# Uncertainty fit
# =============================================================================


@dataclass(frozen=True)
class FitResult(JsonRecord):
    """
    Upper-envelope fit ln d0 + d1 lam of the worst sampled log ratio per lam.

    The worst case over samples only bounds the true constant from below.
    """

    lambdas: Tuple[float, ...]
    worst_log_ratios: Tuple[float, ...]
    ln_d0: float
    d1: float
    residual_max: float
    samples: int
    p: float
    seed: int
    gamma1: float = 1.0

    @property
    def d0(self) -> float:
        return math.exp(self.ln_d0)

    def fitted_log_bound(self, lam: float) -> float:
        return self.ln_d0 + self.d1 * lam

    def dominates(self) -> bool:
        return all(
            self.fitted_log_bound(lam) >= y for lam, y in zip(self.lambdas, self.worst_log_ratios)
        )

    def rows(self) -> List[List[str]]:
        return [
            [format_float(lam), format_float(math.exp(y)), format_float(math.exp(self.fitted_log_bound(lam)))]
            for lam, y in zip(self.lambdas, self.worst_log_ratios)
        ]

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data["d0"] = self.d0
        return data


FIT_COLUMNS = ["lambda", "worst_ratio", "fitted_bound"]


def envelope_fit(x: Sequence[float], y: Sequence[float]) -> Tuple[float, float]:
    """
    Line a + b x with a, b >= 0 lying on or above every point, minimizing the
    total gap to the data. Solved as a linear program, then shifted up until
    domination holds exactly in floating point.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    result = linprog(
        c=[float(x.size), float(x.sum())],
        A_ub=-np.column_stack([np.ones_like(x), x]),
        b_ub=-y,
        bounds=[(0, None), (0, None)],
        method="highs",
    )
    if not result.success:
        raise NonConvergenceError(f"envelope fit failed: {result.message}")
    a, b = (float(v) for v in result.x)
    b = max(b, 0.0)
    a = max(a, 0.0, float(np.max(y - b * x)))
    while np.any(a + b * x < y):
        a = float(np.nextafter(a, math.inf))
    return a, b


def _projected_ratio(mask: Mask, f: Field, lam: float, p: Index, label: str) -> float:
    g = projector_apply(lam, f)
    numerator = lp_norm(g, p)
    denominator = lp_norm(mask.restrict(g), p)
    if denominator <= DENOMINATOR_FLOOR or numerator == 0:
        raise ObservationUnderflowError(
            f"{label}: restriction to the mask vanished (numerator {numerator:.3e}, "
            f"denominator {denominator:.3e})",
            {"sample": label},
        )
    return numerator / denominator


def fit_uncertainty(
    grid: GridSpec,
    mask: Mask,
    lambdas: Sequence[float],
    samples: int = 64,
    p: Any = 2,
    seed: int = 0,
    threads: int = 1,
    progress: bool = False,
) -> FitResult:
    """
    Worst ratio ||P_lam f||_p / ||1_omega P_lam f||_p over band-limited samples
    at each lam, and the envelope fit of its logarithm with gamma1 = 1.
    """
    if mask.grid != grid:
        raise InvalidParamsError("mask lives on a different grid")
    if mask.is_empty():
        raise InvalidParamsError("mask is empty")
    if samples < 1 or not lambdas:
        raise InvalidParamsError("need at least one lambda and one sample")
    p = parse_index(p, "p")
    limit = grid.nyquist / 4.0
    too_high = [lam for lam in lambdas if not 0 < lam < limit]
    if too_high:
        raise InvalidParamsError(f"lambdas must lie in (0, nyquist/4 = {limit:.6g}): {too_high}")

    def worst(item: Tuple[int, float]) -> float:
        i, lam = item
        ratios = []
        for s in range(samples):
            rng_seed = seed_sequence(seed, Stage.FIT, i * samples + s)
            f = sample_field(grid, "band_limited", rng_seed, lam=lam)
            ratios.append(_projected_ratio(mask, f, lam, p, f"lambda={lam:g} sample={s}"))
        return math.log(max(ratios))

    worst_logs = parallel_map(worst, list(enumerate(lambdas)), threads, "fit", progress)
    ln_d0, d1 = envelope_fit(lambdas, worst_logs)
    residual = max(ln_d0 + d1 * lam - y for lam, y in zip(lambdas, worst_logs))
    fit = FitResult(
        lambdas=tuple(float(v) for v in lambdas),
        worst_log_ratios=tuple(worst_logs),
        ln_d0=ln_d0,
        d1=d1,
        residual_max=residual,
        samples=samples,
        p=math.inf if is_infinite(p) else float(p),
        seed=seed,
    )
    logger.info("uncertainty fit: d0=%.6g d1=%.6g over %d lambdas", fit.d0, d1, len(lambdas))
    return fit


# =============================================================================
# Dissipation
# =============================================================================


@dataclass(frozen=True)
class DissipationEntry(JsonRecord):
    lam: float
    t: float
    sup: float
    bound: float
    margin: float  # bound - sup
    xi_at_sup: Tuple[float, ...]

    def row(self) -> List[str]:
        return [format_float(v) for v in (self.lam, self.t, self.sup, self.bound, self.margin)]


DISSIPATION_COLUMNS = ["lambda", "t", "sup", "bound", "margin"]


@dataclass(frozen=True)
class DissipationReport(JsonRecord):
    c: float
    m: int
    entries: Tuple[DissipationEntry, ...]
    tolerance: float = DISSIPATION_TOLERANCE

    @property
    def violations(self) -> List[DissipationEntry]:
        return [e for e in self.entries if e.margin < -self.tolerance]

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_for_violations(self) -> None:
        if self.violations:
            worst = min(self.violations, key=lambda e: e.margin)
            raise HypothesisViolationError(
                f"{len(self.violations)} dissipation violations; worst at lambda={worst.lam:g} "
                f"t={worst.t:g} xi={worst.xi_at_sup}",
                {"violations": [e.to_dict() for e in self.violations]},
            )

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data["ok"] = self.ok
        data["violation_count"] = len(self.violations)
        return data


def check_dissipation(
    symbol: EllipticSymbol,
    lambdas: Sequence[float],
    times: Sequence[float],
    grid: GridSpec,
    c: Optional[float] = None,
) -> DissipationReport:
    """sup over grid frequencies of |(1 - chi_lam) exp(-t a)| against exp(-c t (lam/2)^m)."""
    c = ellipticity_constant(symbol) if c is None else c
    a = symbol_on_grid(symbol, grid)
    xi = grid.frequency_mesh()
    entries = []
    for lam in lambdas:
        if not lam > 0:
            raise InvalidParamsError(f"lambda must be > 0, got {lam}")
        leak = 1.0 - cutoff_multiplier(grid, lam)
        for t in times:
            if not t > 0:
                raise InvalidParamsError(f"t must be > 0, got {t}")
            values = np.abs(leak * np.exp(-t * a))
            flat = int(np.argmax(values))
            idx = np.unravel_index(flat, values.shape)
            sup = float(values.flat[flat])
            bound = math.exp(-c * t * (lam / 2.0) ** symbol.m)
            entries.append(
                DissipationEntry(
                    lam=float(lam),
                    t=float(t),
                    sup=sup,
                    bound=bound,
                    margin=bound - sup,
                    xi_at_sup=tuple(float(component[idx]) for component in xi),
                )
            )
    return DissipationReport(c=c, m=symbol.m, entries=tuple(entries))


# =============================================================================
# Observability ratio
# =============================================================================


@dataclass(frozen=True)
class ObsRatioReport(JsonRecord):
    T: float
    r: Index
    p: Index
    n_t: int
    ratios: Tuple[float, ...]
    c_emp: float
    c_obs: Optional[float] = None
    ln_c_obs: Optional[float] = None
    margin: Optional[float] = None  # C_obs / C_emp, None when only its log fits
    ln_margin: Optional[float] = None
    seed: Optional[int] = None

    @property
    def acceptable(self) -> bool:
        return self.ln_margin is None or self.ln_margin >= 0.0

    def raise_for_margin(self) -> None:
        if not self.acceptable:
            raise HypothesisViolationError(
                f"certified bound exp({self.ln_c_obs:.6g}) is below the empirical ratio {self.c_emp:.6g}",
                self.to_dict(),
            )

    def rows(self) -> List[List[str]]:
        return [[str(i), format_float(v)] for i, v in enumerate(self.ratios)]

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data["r"] = format_index(self.r)
        data["p"] = format_index(self.p)
        data["acceptable"] = self.acceptable
        return data

    def print_summary(self) -> None:
        print(f"\n{'=' * 60}")
        print("Empirical observability ratio")
        print(f"{'=' * 60}")
        print(f"  T={self.T:g} r={format_index(self.r)} p={format_index(self.p)} n_t={self.n_t}")
        print(f"  samples: {len(self.ratios)}  C_emp = {self.c_emp:.6e}")
        if self.ln_c_obs is not None:
            print(f"  ln C_obs = {self.ln_c_obs:.6f}  ln margin = {self.ln_margin:.6f}")
            print(f"  Status: {'OK' if self.acceptable else 'VIOLATED'}")
        print(f"{'=' * 60}\n")


RATIO_COLUMNS = ["sample_id", "ratio"]


def _observation_profile(
    symbol: EllipticSymbol,
    mask: Mask,
    x0: Field,
    T: float,
    times: np.ndarray,
    p: Index,
) -> Tuple[float, List[float]]:
    """||S_T x0||_p and ||1_omega S_t x0||_p at each time node, from one forward FFT."""
    grid = x0.grid
    a = symbol_on_grid(symbol, grid)
    spectrum = sp_fft.fftn(x0.values)
    dv = grid.cell_volume
    final = lp_norm_values(sp_fft.ifftn(np.exp(-T * a) * spectrum), dv, p)
    observed = [
        lp_norm_values(np.where(mask.bits, sp_fft.ifftn(np.exp(-t * a) * spectrum), 0.0), dv, p)
        for t in times
    ]
    return final, observed


def observability_ratio(
    symbol: EllipticSymbol,
    mask: Mask,
    x0: Field,
    T: float,
    r: Index,
    p: Index,
    n_t: int,
    label: str = "x0",
) -> float:
    """||S_T x0||_p / ||1_omega S_. x0||_{L_r((0,T); L_p)}."""
    if x0.is_zero():
        raise InvalidParamsError(f"{label}: zero initial state")
    final, observed = _observation_profile(symbol, mask, x0, T, midpoints(T, n_t), p)
    denominator = lr_time_norm(observed, r, T)
    if denominator < DENOMINATOR_FLOOR:
        raise ObservationUnderflowError(
            f"{label}: observation norm {denominator:.3e} underflows", {"sample": label}
        )
    return final / denominator


def estimate_observability_ratio(
    symbol: EllipticSymbol,
    mask: Mask,
    T: float,
    r: Any = 2,
    p: Any = 2,
    samples: int = 64,
    n_t: int = 256,
    seed: int = 0,
    bound: Optional[CertBundle] = None,
    initial_states: Optional[Sequence[Field]] = None,
    kind: str = "white",
    threads: int = 1,
    progress: bool = False,
) -> ObsRatioReport:
    """
    Worst empirical ratio over random initial states (or the given ones), with
    the margin C_obs / C_emp when a certificate is supplied.
    """
    if not T > 0:
        raise InvalidParamsError(f"T must be > 0, got {T}")
    if mask.is_empty():
        raise InvalidParamsError("mask is empty")
    r = parse_index(r, "r")
    p = parse_index(p, "p")
    grid = mask.grid
    if initial_states is None:
        initial_states = [
            sample_field(grid, kind, seed_sequence(seed, Stage.OBSERVABILITY, i))
            for i in range(samples)
        ]

    def one(item: Tuple[int, Field]) -> float:
        i, x0 = item
        return observability_ratio(symbol, mask, x0, T, r, p, n_t, f"sample {i}")

    ratios = parallel_map(one, list(enumerate(initial_states)), threads, "ratios", progress)
    c_emp = max(ratios)
    report = ObsRatioReport(T=T, r=r, p=p, n_t=n_t, ratios=tuple(ratios), c_emp=c_emp, seed=seed)
    if bound is None:
        return report
    ln_margin = bound.ln_cobs - math.log(c_emp)
    return dataclasses.replace(
        report,
        c_obs=bound.cobs,
        ln_c_obs=bound.ln_cobs,
        margin=representable_exp(ln_margin, "C_obs / C_emp"),
        ln_margin=ln_margin,
    )


def assemble_bound(
    fit: FitResult,
    symbol: EllipticSymbol,
    T: float,
    r: Any,
    p: Any = 2,
    bounds: Optional[SemigroupBounds] = None,
    c: Optional[float] = None,
    rel_tol: float = DEFAULT_REL_TOL,
) -> CertBundle:
    """
    Certificate from fitted uncertainty constants and exact dissipation constants.

    For p = 2 the semigroup is a contraction and d2 = 1, d3 = c / 2^m exactly;
    other p need ``bounds`` (M, C_d) for the interpolated constants.
    """
    c = ellipticity_constant(symbol) if c is None else c
    p_value = parse_index(p, "p")
    if p_value == 2.0:
        M, d2, d3 = 1.0, 1.0, c / 2.0 ** symbol.m
    else:
        if bounds is None:
            raise InvalidParamsError("p != 2 needs semigroup bounds (M, C_d)")
        diss = dissipation_constants(c, symbol.m, p_value, bounds.M, bounds.C_d)
        M, d2, d3 = bounds.M, diss.d2, diss.d3
    params = AbstractParams(
        M=M, omega=0.0, lambda_star=0.0, d0=fit.d0, d1=fit.d1, gamma1=1.0, d2=d2, d3=d3,
        gamma2=float(symbol.m), gamma3=1.0, norm_C=1.0, T=T, r=r, log_d0=fit.ln_d0,
    )
    provenance = {
        "source": "fitted",
        "fit_samples": fit.samples,
        "fit_seed": fit.seed,
        "fit_lambdas": list(fit.lambdas),
        "c": c,
        "p": format_index(p_value),
    }
    return certify(params, rel_tol, allow_zero_d1=True, provenance=provenance)


# =============================================================================
# Counterexample sweep
# =============================================================================


@dataclass(frozen=True)
class GridGrowth(JsonRecord):
    """Box grows as box_factor * n; N is the next power of two keeping dx <= target."""

    box_factor: float = 8.0
    dx: float = 0.125

    def grid_for(self, n: float, d: int = 1) -> GridSpec:
        box = self.box_factor * max(n, 1.0)
        return GridSpec(d, next_power_of_two(box / self.dx), box)


@dataclass(frozen=True)
class CounterexampleRow(JsonRecord):
    n: float
    box: float
    N: int
    numerator: float
    kernel_norm: float
    denominator: float
    ratio: float
    split_bound: float

    @property
    def numerator_rel_error(self) -> float:
        return abs(self.numerator - self.kernel_norm) / self.kernel_norm

    def row(self) -> List[str]:
        return [
            format_float(self.n), format_float(self.box), str(self.N),
            format_float(self.numerator), format_float(self.kernel_norm),
            format_float(self.denominator), format_float(self.ratio),
            format_float(self.split_bound),
        ]


COUNTEREXAMPLE_COLUMNS = [
    "n", "box", "N", "numerator", "kernel_norm", "denominator", "ratio", "split_bound",
]


@dataclass(frozen=True)
class CounterexampleTable(JsonRecord):
    T: float
    r: Index
    p: Index
    growth: GridGrowth
    rows: Tuple[CounterexampleRow, ...] = field(default_factory=tuple)

    @property
    def ratios(self) -> List[float]:
        return [row.ratio for row in self.rows]

    @property
    def max_numerator_rel_error(self) -> float:
        return max((row.numerator_rel_error for row in self.rows), default=0.0)

    @property
    def split_bound_holds(self) -> bool:
        return all(row.denominator <= row.split_bound * (1.0 + 1e-12) for row in self.rows)

    def monotone(self, slack: float = 0.01) -> bool:
        """Ratios nondecreasing in n over radii >= 2, up to ``slack``."""
        rows = sorted((row for row in self.rows if row.n >= MONOTONE_FROM_RADIUS), key=lambda row: row.n)
        return is_monotone_nondecreasing([row.ratio for row in rows], slack)

    def failed_checks(self, slack: float = 0.01) -> List[str]:
        failed = []
        if not self.monotone(slack):
            failed.append(f"ratios not monotone within slack {slack}")
        if self.max_numerator_rel_error > NUMERATOR_REL_TOL:
            failed.append(
                f"numerator differs from ||p_(T+1)|| by {self.max_numerator_rel_error:.3g} relative"
            )
        if not self.split_bound_holds:
            failed.append("observed norm exceeds the split bound")
        return failed

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data["r"] = format_index(self.r)
        data["p"] = format_index(self.p)
        return data


def _split_bound(values: np.ndarray, mask: Mask, ball: np.ndarray, dv: float, p: Index) -> float:
    """
    Upper bound on ||1_omega g||_p from splitting at the ball B:
    |omega cap B| ||g||_inf^p + ||(1 - 1_B) g||_p^p.
    """
    magnitude = np.abs(values)
    inside = np.count_nonzero(mask.bits & ball) * dv
    outside = np.where(ball, 0.0, magnitude)
    if is_infinite(p):
        return float(max(outside.max(), magnitude.max() if inside else 0.0))
    p = float(p)
    total = inside * float(magnitude.max()) ** p + float(np.sum(outside ** p)) * dv
    return total ** (1.0 / p)


def counterexample_sweep(
    symbol: EllipticSymbol,
    radii: Sequence[float],
    T: float,
    r: Any = 2,
    p: Any = 2,
    growth: Optional[GridGrowth] = None,
    n_t: int = 64,
    d: int = 1,
    threads: int = 1,
    progress: bool = False,
) -> CounterexampleTable:
    """
    Initial state p_1 centered in a hole of radius n on a box of side
    box_factor * n. The numerator ||S_T p_1||_p equals ||p_{T+1}||_p for every
    n while the observed part of the trajectory shrinks, so the ratio grows.
    """
    growth = growth or GridGrowth()
    r = parse_index(r, "r")
    p = parse_index(p, "p")
    if not T > 0:
        raise InvalidParamsError(f"T must be > 0, got {T}")
    times = midpoints(T, n_t)

    def one(n: float) -> CounterexampleRow:
        if n < 0:
            raise InvalidParamsError(f"hole radius must be >= 0, got {n}")
        grid = growth.grid_for(n, d)
        if 2.0 * n > min(grid.box):
            raise InvalidParamsError(f"box {grid.box} too small for radius {n}")
        mask = holed(grid, n)
        f_n = kernel_field(symbol, 1.0, grid)
        numerator = lp_norm(semigroup_apply(symbol, T, f_n), p)
        kernel_norm = lp_norm(kernel_field(symbol, T + 1.0, grid), p)
        ball = torus_distance(grid, (0.0,) * d) <= n
        observed, split = [], []
        for t in times:
            values = semigroup_apply(symbol, float(t), f_n).values
            observed.append(lp_norm_values(np.where(mask.bits, values, 0.0), grid.cell_volume, p))
            split.append(_split_bound(values, mask, ball, grid.cell_volume, p))
        denominator = lr_time_norm(observed, r, T)
        if denominator < DENOMINATOR_FLOOR:
            raise ObservationUnderflowError(f"n={n}: observation underflows")
        return CounterexampleRow(
            n=float(n), box=grid.box[0], N=grid.N, numerator=numerator, kernel_norm=kernel_norm,
            denominator=denominator, ratio=numerator / denominator,
            split_bound=lr_time_norm(split, r, T),
        )

    rows = parallel_map(one, list(radii), threads, "counterexample", progress)
    return CounterexampleTable(T=T, r=r, p=p, growth=growth, rows=tuple(rows))


def is_monotone_nondecreasing(values: Sequence[float], slack: float = 0.01) -> bool:
    """values[i+1] >= (1 - slack) values[i] for every i."""
    return all(b >= (1.0 - slack) * a for a, b in zip(values, values[1:]))
