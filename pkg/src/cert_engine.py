"""
Certified observability constants.

Turns an uncertainty relation

    ||P_lam x|| <= d0 exp(d1 lam^gamma1) ||C P_lam x||      (lam > lambda_star)

and a dissipation estimate

    ||(id - P_lam) S_t x|| <= d2 exp(-d3 lam^gamma2 t^gamma3) ||x||

for a semigroup with ||S_t|| <= M exp(omega t) into a final-state
observability constant C_obs over the horizon T with time index r. Two values
are produced: the closed form and the sharper series bound, which must never
exceed it.

Also hosts the constant pipelines for strongly elliptic operators on R^d:
thick-set uncertainty constants, the interpolation exponents used to move
the L2 dissipation estimate to L_p, and the resulting dissipation constants.

Every quantity that can overflow is carried as a logarithm. Intermediate
constants go through ``checked_exp`` and raise on overflow; the certified
constants keep their plain value only when it fits a double (otherwise None,
with the log as the value of record).
"""

import dataclasses
import logging
import math
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.special import logsumexp

from .base import (
    INF,
    CertificationError,
    Index,
    InvalidParamsError,
    JsonRecord,
    NonConvergenceError,
    checked_exp,
    format_index,
    is_infinite,
    parse_index,
    reciprocal,
    representable_exp,
    require_finite,
)

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1"

LN2 = math.log(2.0)
LN4 = math.log(4.0)
E_LN2 = math.e * LN2

SERIES_TERM_CAP = 10_000
# Beyond exp(700) the decay factor exp(-K3 q^k) underflows every term.
MAX_DECAY_LOG = 700.0
DEFAULT_REL_TOL = 1e-12

# Relative slack for inequalities that are tight in exact arithmetic.
_INEQ_SLACK = 1e-12


# =============================================================================
# Records
# =============================================================================


@dataclass(frozen=True)
class AbstractParams(JsonRecord):
    """
    Inputs of the abstract observability estimate.

    ``log_d0`` may be supplied instead of a representable ``d0`` (pass
    ``d0=math.inf``) when d0 overflows double precision.
    """

    M: float
    omega: float
    lambda_star: float
    d0: float
    d1: float
    gamma1: float
    d2: float
    d3: float
    gamma2: float
    gamma3: float
    norm_C: float
    T: float
    r: Index = 1.0
    log_d0: Optional[float] = None

    def __post_init__(self) -> None:
        object.__setattr__(self, "r", parse_index(self.r, "r"))

    @property
    def ln_d0(self) -> float:
        if self.log_d0 is not None:
            return float(self.log_d0)
        return math.log(self.d0)

    @property
    def omega_plus(self) -> float:
        return max(self.omega, 0.0)

    @property
    def gap(self) -> float:
        """gamma2 - gamma1."""
        return self.gamma2 - self.gamma1

    def violations(self, allow_zero_d1: bool = False) -> List[str]:
        problems = []
        values = {f.name: getattr(self, f.name) for f in dataclasses.fields(self)}
        for name, value in values.items():
            if name in ("r", "log_d0", "d0") or value is None:
                continue
            if not math.isfinite(value):
                problems.append(f"{name} must be finite, got {value!r}")
        if problems:
            return problems
        if self.log_d0 is not None:
            if not math.isfinite(self.log_d0):
                problems.append("log_d0 must be finite")
        elif not (self.d0 > 0 and math.isfinite(self.d0)):
            problems.append(f"d0 must be a finite positive number, got {self.d0!r}")
        if self.M < 1:
            problems.append(f"M must be >= 1, got {self.M}")
        if self.d2 < 1:
            problems.append(f"d2 must be >= 1, got {self.d2}")
        if self.lambda_star < 0:
            problems.append(f"lambda_star must be >= 0, got {self.lambda_star}")
        if self.d1 < 0 or (self.d1 == 0 and not allow_zero_d1):
            problems.append(f"d1 must be > 0, got {self.d1}")
        for name in ("d3", "gamma1", "gamma2", "gamma3", "norm_C", "T"):
            if values[name] <= 0:
                problems.append(f"{name} must be > 0, got {values[name]}")
        if self.gamma1 >= self.gamma2:
            problems.append(f"gamma1 must be < gamma2, got {self.gamma1} >= {self.gamma2}")
        return problems

    def validate(self, allow_zero_d1: bool = False) -> "AbstractParams":
        problems = self.violations(allow_zero_d1)
        if problems:
            raise InvalidParamsError(problems)
        return self

    def with_r(self, r: Index) -> "AbstractParams":
        return dataclasses.replace(self, r=r)

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data["r"] = format_index(self.r)
        data["ln_d0"] = self.ln_d0
        return data


@dataclass(frozen=True)
class DerivedConstants(JsonRecord):
    """Intermediate constants of the proof, for one parameter set."""

    alpha0: float
    nu0: float
    T0: float
    alpha: float
    nu: float
    ln_K1: float
    K2: float
    K3: float
    omega_plus: float
    q: float  # alpha^gamma2 / 4^gamma3
    short_horizon: bool  # T <= T0 branch

    @property
    def K1(self) -> float:
        return checked_exp(self.ln_K1, "K1")

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        if self.ln_K1 < 700:
            data["K1"] = self.K1
        return data


def _fmt(value: Optional[float]) -> str:
    return "(beyond double range)" if value is None else f"{value:.6e}"


@dataclass(frozen=True)
class CertBundle(JsonRecord):
    """Closed-form and series observability constants with their provenance."""

    params: AbstractParams
    derived: Optional[DerivedConstants]
    C1: Optional[float]  # None beyond double range; ln_C1 is authoritative
    C2: float
    C3: float
    ln_C1: float
    cobs_closed: Optional[float]
    ln_cobs_closed: float
    cobs_series: Optional[float] = None
    ln_cobs_series: Optional[float] = None
    series_terms_used: int = 0
    inputs_provenance: Dict[str, Any] = field(default_factory=dict)
    schema_version: str = SCHEMA_VERSION

    @property
    def cobs(self) -> Optional[float]:
        """Best certified value: the series bound when present. None beyond double range."""
        return self.cobs_series if self.ln_cobs_series is not None else self.cobs_closed

    @property
    def ln_cobs(self) -> float:
        return self.ln_cobs_series if self.ln_cobs_series is not None else self.ln_cobs_closed

    def print_summary(self) -> None:
        p = self.params
        print(f"\n{'=' * 60}")
        print("Observability certificate")
        print(f"{'=' * 60}")
        print(f"  T = {p.T:g}, r = {format_index(p.r)}")
        print(f"  C1 = {_fmt(self.C1)}  C2 = {self.C2:.6e}  C3 = {self.C3:.6e}")
        print(f"  C_obs (closed) = {_fmt(self.cobs_closed)}  [ln {self.ln_cobs_closed:.6f}]")
        if self.ln_cobs_series is not None:
            print(
                f"  C_obs (series) = {_fmt(self.cobs_series)}  [ln {self.ln_cobs_series:.6f}]"
                f"  terms={self.series_terms_used}"
            )
        for key, value in self.inputs_provenance.items():
            print(f"  {key}: {value}")
        print(f"{'=' * 60}\n")


@dataclass(frozen=True)
class ContinuousConstants(JsonRecord):
    d0: float
    d1: float
    d2: float
    d3: float
    lambda_star: float = 0.0


@dataclass(frozen=True)
class UncertaintyConstants(JsonRecord):
    """Thick-set uncertainty constants, d0 carried as a logarithm."""

    ln_d0: float
    d1: float
    gamma1: float = 1.0
    rho: float = 1.0
    L: Tuple[float, ...] = ()
    K: float = 1.0

    @property
    def d0(self) -> float:
        return checked_exp(self.ln_d0, "d0 = (K^d / rho)^(K d)")

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        if self.ln_d0 < 700:
            data["d0"] = self.d0
        return data


@dataclass(frozen=True)
class DissipationConstants(JsonRecord):
    d2: float
    d3: float
    gamma2: float
    gamma3: float = 1.0
    p0: float = 2.0
    theta: float = 1.0


# =============================================================================
# Abstract certificate
# =============================================================================


def _ln_k1(params: AbstractParams) -> float:
    ln_c = math.log(params.norm_C)
    return (
        float(np.logaddexp(params.ln_d0 + ln_c, 0.0))
        + math.log(params.d2)
        + 2.0 * math.log(params.M)
        + 1.25 * params.omega_plus * params.T
    )


def derived_constants(params: AbstractParams) -> DerivedConstants:
    """
    Evaluate alpha0, nu0, T0, the horizon-dependent (alpha, nu) and K1, K2, K3.

    The T <= T0 branch includes T = T0.

    Raises:
        InvalidParamsError: parameters violate their invariants
        NonFiniteConstantError: an intermediate overflows
        CertificationError: a derived invariant fails
    """
    params.validate()
    g = params.gap
    g1, g2, g3 = params.gamma1, params.gamma2, params.gamma3
    d1, d3, T = params.d1, params.d3, params.T

    ln_k1 = _ln_k1(params)
    ln_4k1 = LN4 + ln_k1

    ln_alpha0 = (LN2 + g3 * LN4) / g
    alpha0 = checked_exp(ln_alpha0, "alpha0")

    nu0_uncertainty = checked_exp(
        (math.log(2.0 * ln_4k1 / E_LN2) - math.log(d1)) / g1, "nu0 (uncertainty branch)"
    )
    nu0 = max(nu0_uncertainty, 2.0 * params.lambda_star)
    ln_nu0 = math.log(nu0)

    ln_T0 = (LN2 + math.log(d1) + g2 * ln_alpha0 - math.log(d3) - g * ln_nu0) / g3
    T0 = checked_exp(ln_T0, "T0")

    ln_T = math.log(T)
    short = T <= T0
    if short:
        ln_alpha = ln_alpha0
        ln_nu = ln_nu0 + (g3 / g) * (ln_T0 - ln_T)
    else:
        ln_alpha = ln_alpha0 + (g3 / g2) * (ln_T - ln_T0)
        ln_nu = ln_nu0
    alpha = checked_exp(ln_alpha, "alpha")
    nu = checked_exp(ln_nu, "nu")
    logger.debug("branch %s: T=%g T0=%g alpha=%g nu=%g", "T<=T0" if short else "T>T0", T, T0,
                 alpha, nu)

    q = checked_exp(g2 * ln_alpha - g3 * LN4, "alpha^gamma2 / 4^gamma3")
    d1_nu = d1 * checked_exp(g1 * ln_nu, "nu^gamma1")
    K2 = d3 * checked_exp(g3 * (ln_T - LN4) + g2 * ln_nu, "d3 (T/4)^gamma3 nu^gamma2") - d1_nu
    K3 = K2 / (q - 1.0) - d1_nu
    require_finite(K2, "K2")
    require_finite(K3, "K3")

    derived = DerivedConstants(
        alpha0=alpha0,
        nu0=nu0,
        T0=T0,
        alpha=alpha,
        nu=nu,
        ln_K1=ln_k1,
        K2=K2,
        K3=K3,
        omega_plus=params.omega_plus,
        q=q,
        short_horizon=short,
    )
    problems = invariant_violations(derived, params)
    if problems:
        raise CertificationError("derived constants violate their invariants", {"violations": problems})
    return derived


def averaging_identity_residual(derived: DerivedConstants, params: AbstractParams) -> float:
    """Relative gap in d3 T^gamma3 nu^(gamma2-gamma1) = 2 d1 alpha^gamma2."""
    ln_lhs = (
        math.log(params.d3) + params.gamma3 * math.log(params.T) + params.gap * math.log(derived.nu)
    )
    ln_rhs = LN2 + math.log(params.d1) + params.gamma2 * math.log(derived.alpha)
    return abs(math.expm1(ln_lhs - ln_rhs))


def k3_floor(derived: DerivedConstants) -> float:
    """2 ln(4 K1) / (e ln 2)."""
    return 2.0 * (LN4 + derived.ln_K1) / E_LN2


def k2_bound_check(derived: DerivedConstants, params: AbstractParams) -> bool:
    """K2 / (q - 1) <= 4 d1 nu^gamma1."""
    lhs = derived.K2 / (derived.q - 1.0)
    return lhs <= 4.0 * params.d1 * derived.nu ** params.gamma1 * (1.0 + _INEQ_SLACK)


def invariant_violations(derived: DerivedConstants, params: AbstractParams) -> List[str]:
    problems = []
    residual = averaging_identity_residual(derived, params)
    if residual > 1e-9:
        problems.append(f"averaging identity off by {residual:.3e}")
    if not derived.K2 > derived.K3 > 0:
        problems.append(f"need K2 > K3 > 0, got K2={derived.K2!r} K3={derived.K3!r}")
    if derived.K3 < k3_floor(derived) * (1.0 - _INEQ_SLACK):
        problems.append(f"K3={derived.K3!r} below 2 ln(4 K1)/(e ln 2)={k3_floor(derived)!r}")
    if derived.q < 2.0 * (1.0 - _INEQ_SLACK):
        problems.append(f"alpha^gamma2/4^gamma3 = {derived.q!r} < 2")
    if derived.nu < derived.nu0 * (1.0 - _INEQ_SLACK):
        problems.append("nu < nu0")
    if derived.alpha < derived.alpha0 * (1.0 - _INEQ_SLACK):
        problems.append("alpha < alpha0")
    if not k2_bound_check(derived, params):
        problems.append("K2/(q-1) exceeds 4 d1 nu^gamma1")
    return problems


def _closed_form_logs(params: AbstractParams) -> Tuple[float, float, float, float]:
    """ln C1, C2, C3 and ln C_obs. d1 = 0 is allowed (C2 = 0)."""
    g = params.gap
    g1, g2, g3 = params.gamma1, params.gamma2, params.gamma3
    ln_m = math.log(params.M)
    ln_c = math.log(params.norm_C)

    ln_k1_core = (
        LN4 + math.log(params.d2) + 2.0 * ln_m + float(np.logaddexp(params.ln_d0 + ln_c, 0.0))
    )
    first = (8.0 / E_LN2) * ln_k1_core
    second = 4.0 * params.d1 * (2.0 * params.lambda_star) ** g1
    ln_C1 = LN4 + ln_m + params.ln_d0 + max(first, second)

    if params.d1 > 0:
        inner = (
            g1 * LN2
            + (g1 * g2 / g) * (LN2 + g3 * LN4)
            + g2 * math.log(params.d1)
            - g1 * math.log(params.d3)
        )
        C2 = checked_exp(LN4 + inner / g, "C2")
    else:
        C2 = 0.0
    C3 = params.omega_plus * (1.0 + 10.0 / E_LN2)

    T = params.T
    blowup = C2 * T ** (-g1 * g3 / g) if C2 > 0 else 0.0
    ln_cobs = ln_C1 - reciprocal(params.r) * math.log(T) + blowup + C3 * T
    require_finite(ln_cobs, "ln C_obs")
    return ln_C1, C2, C3, ln_cobs


def cobs_closed_form(params: AbstractParams, allow_zero_d1: bool = False) -> CertBundle:
    """
    Closed-form C_obs = (C1 / T^(1/r)) exp(C2 / T^(gamma1 gamma3/(gamma2-gamma1)) + C3 T).

    r = inf uses T^(1/r) = 1.
    """
    params.validate(allow_zero_d1)
    ln_C1, C2, C3, ln_cobs = _closed_form_logs(params)
    return CertBundle(
        params=params,
        derived=None,
        C1=representable_exp(ln_C1, "C1"),
        C2=C2,
        C3=C3,
        ln_C1=ln_C1,
        cobs_closed=representable_exp(ln_cobs, "C_obs (closed form)"),
        ln_cobs_closed=ln_cobs,
    )


def series_term(derived: DerivedConstants, k: int) -> float:
    """(4 K1)^k exp(-K3 q^k)."""
    return math.exp(_ln_series_term(derived, k))


def _ln_series_term(derived: DerivedConstants, k: int) -> float:
    ln_growth = math.log(derived.K3) + k * math.log(derived.q)
    if ln_growth > MAX_DECAY_LOG:
        return -math.inf
    return k * (LN4 + derived.ln_K1) - math.exp(ln_growth)


def _ln_series_sum(derived: DerivedConstants, rel_tol: float) -> Tuple[float, int]:
    """ln sum_{k>=1} (4K1)^k exp(-K3 q^k) and the number of terms used."""
    ln_rel_tol = math.log(rel_tol)
    ln_sum = -math.inf
    previous = math.inf
    for k in range(1, SERIES_TERM_CAP + 1):
        ln_term = _ln_series_term(derived, k)
        if math.isnan(ln_term):
            raise NonConvergenceError(f"series term {k} is NaN")
        if ln_term == -math.inf:
            # every later term underflows as well
            return ln_sum, k
        ln_sum = float(np.logaddexp(ln_sum, ln_term))
        if math.isinf(ln_sum) and ln_sum > 0:
            raise NonConvergenceError(f"series partial sum overflowed at term {k}")
        decreasing = ln_term < previous
        if decreasing and ln_term < ln_rel_tol + ln_sum:
            return ln_sum, k
        previous = ln_term
    raise NonConvergenceError(
        f"series did not settle within {SERIES_TERM_CAP} terms "
        f"(K3={derived.K3!r}, q={derived.q!r})"
    )


def _holder_log_factor(params: AbstractParams) -> float:
    """ln T^(1 - 1/r)."""
    return (1.0 - reciprocal(params.r)) * math.log(params.T)


def cobs_series_bound(params: AbstractParams, rel_tol: float = DEFAULT_REL_TOL) -> CertBundle:
    """
    Series bound on C_obs, returned together with the closed form.

    The r = 1 value is

        2 M d0 e^(omega+ T) / T * (e^(d1 nu^gamma1)
            + exp(K2/(q-1)) sum_{k>=1} (4 K1)^k exp(-K3 q^k)),

    and general r multiplies by T^(1 - 1/r). Summation stops once a term is
    below ``rel_tol`` times the partial sum and terms are decreasing.

    Raises:
        CertificationError: the series value exceeds the closed form
        NonConvergenceError: the series did not settle within the term cap
    """
    if not 0 < rel_tol < 1:
        raise InvalidParamsError(f"rel_tol must lie in (0, 1), got {rel_tol}")
    derived = derived_constants(params)
    closed = cobs_closed_form(params)

    ln_sum, terms = _ln_series_sum(derived, rel_tol)
    d1_nu = params.d1 * derived.nu ** params.gamma1
    ln_bracket = float(np.logaddexp(d1_nu, derived.K2 / (derived.q - 1.0) + ln_sum))
    ln_series = (
        LN2
        + math.log(params.M)
        + params.ln_d0
        + derived.omega_plus * params.T
        - math.log(params.T)
        + ln_bracket
        + _holder_log_factor(params)
    )
    logger.debug("series bound: %d terms, ln C~=%.6f, ln C=%.6f", terms, ln_series,
                 closed.ln_cobs_closed)
    _check_domination(ln_series, closed.ln_cobs_closed, params)
    return dataclasses.replace(
        closed,
        derived=derived,
        cobs_series=representable_exp(ln_series, "C_obs (series)"),
        ln_cobs_series=ln_series,
        series_terms_used=terms,
    )


def _check_domination(ln_series: float, ln_closed: float, params: AbstractParams) -> None:
    if ln_series > ln_closed + 1e-10 * max(1.0, abs(ln_closed)):
        raise CertificationError(
            "series bound exceeds closed form",
            {"ln_cobs_series": ln_series, "ln_cobs_closed": ln_closed, "params": params.to_dict()},
        )


def _zero_d1_bundle(params: AbstractParams) -> CertBundle:
    """
    d1 = 0: closed form evaluated at d1 = 0, series bound at its d1 -> 0+ limit
    2 M d0 e^(omega+ T) / T * (4 K1)^(2/(e ln 2)) * T^(1 - 1/r).
    """
    closed = cobs_closed_form(params, allow_zero_d1=True)
    ln_k1 = _ln_k1(params)
    ln_series = (
        LN2
        + math.log(params.M)
        + params.ln_d0
        + params.omega_plus * params.T
        - math.log(params.T)
        + (2.0 / E_LN2) * (LN4 + ln_k1)
        + _holder_log_factor(params)
    )
    _check_domination(ln_series, closed.ln_cobs_closed, params)
    return dataclasses.replace(
        closed,
        cobs_series=representable_exp(ln_series, "C_obs (series, d1 -> 0 limit)"),
        ln_cobs_series=ln_series,
        series_terms_used=0,
        inputs_provenance={"d1": "zero; series bound taken at the d1 -> 0+ limit"},
    )


def certify(
    params: AbstractParams,
    rel_tol: float = DEFAULT_REL_TOL,
    allow_zero_d1: bool = False,
    provenance: Optional[Dict[str, Any]] = None,
) -> CertBundle:
    """Full certificate; routes d1 = 0 to the limiting bound when allowed."""
    params.validate(allow_zero_d1)
    if params.d1 == 0:
        bundle = _zero_d1_bundle(params)
    else:
        bundle = cobs_series_bound(params, rel_tol)
    if provenance:
        merged = dict(bundle.inputs_provenance)
        merged.update(provenance)
        bundle = dataclasses.replace(bundle, inputs_provenance=merged)
    return bundle


def sum_estimate_bound(A: float, B: float) -> float:
    """Upper bound (2 ln A / (B e ln 2))^(ln A / ln 2) / B on sum A^k exp(-B 2^k)."""
    if A <= 1 or B <= 0:
        raise InvalidParamsError("sum estimate needs A > 1 and B > 0")
    ln_a = math.log(A)
    return (2.0 * ln_a / (B * E_LN2)) ** (ln_a / LN2) / B


def double_exponential_series(A: float, B: float, terms: int = 100) -> float:
    """sum_{k=1}^{terms} A^k exp(-B 2^k) by direct summation."""
    k = np.arange(1, terms + 1, dtype=float)
    with np.errstate(over="ignore"):
        ln_terms = k * math.log(A) - B * np.exp2(k)
    return float(np.exp(logsumexp(ln_terms)))


# =============================================================================
# Constant pipelines
# =============================================================================


def discrete_to_continuous(
    d0t: float, d1t: float, d2t: float, d3t: float, gamma1: float
) -> ContinuousConstants:
    """Constants for a discrete projector family (P_k) recast for lam > 0 with lambda_star = 0."""
    problems = [
        f"{name} must be > 0, got {value}"
        for name, value in (("d0t", d0t), ("d1t", d1t), ("d3t", d3t), ("gamma1", gamma1))
        if not value > 0
    ]
    if not d2t >= 1:
        problems.append(f"d2t must be >= 1, got {d2t}")
    if problems:
        raise InvalidParamsError(problems)
    return ContinuousConstants(
        d0=checked_exp(math.log(d0t) + d1t, "d0t e^d1t"),
        d1=2.0 ** gamma1 * d1t,
        d2=d2t,
        d3=d3t,
        lambda_star=0.0,
    )


def ls_constants(
    rho: float, L: Sequence[float], K: float = 1.0, d: Optional[int] = None
) -> UncertaintyConstants:
    """
    Uncertainty constants of a (rho, L)-thick set in R^d.

    ln d0 = K d (d ln K - ln rho) and d1 = 2 K |L|_1 (d ln K - ln rho), gamma1 = 1.
    """
    L = tuple(float(v) for v in L)
    d = len(L) if d is None else d
    problems = []
    if not 0 < rho <= 1:
        problems.append(f"rho must lie in (0, 1], got {rho}")
    if len(L) != d or d < 1:
        problems.append(f"L needs {d} positive entries, got {L}")
    if any(not v > 0 for v in L):
        problems.append(f"window lengths must be > 0, got {L}")
    if not K >= 1:
        problems.append(f"K must be >= 1, got {K}")
    if problems:
        raise InvalidParamsError(problems)
    log_ratio = d * math.log(K) - math.log(rho)
    return UncertaintyConstants(
        ln_d0=K * d * log_ratio,
        d1=2.0 * K * sum(L) * log_ratio,
        gamma1=1.0,
        rho=rho,
        L=L,
        K=K,
    )


def interpolation_params(p: float) -> Tuple[float, float]:
    """
    (p0, theta) with 1/p = (1 - theta)/p0 + theta/2.

    p = 2 gives (2, 1); p in (1, 2) interpolates with some p0 in (1, 2);
    p > 2 uses p0 = 2p, theta = 1/(p - 1).
    """
    try:
        p = float(p)
    except (TypeError, ValueError):
        raise InvalidParamsError(f"p must lie in (1, inf), got {p!r}") from None
    if not 1 < p < math.inf:
        raise InvalidParamsError(f"p must lie in (1, inf), got {p}")
    if p == 2.0:
        return 2.0, 1.0
    if p < 2.0:
        p0 = p * p - 2.0 * p + 2.0
        # (-2p^2 + 6p - 4) / (-p^3 + 2p^2) with the common factor (p - 2) cancelled
        theta = 2.0 * (p - 1.0) / (p * p)
        return p0, theta
    return 2.0 * p, 1.0 / (p - 1.0)


def dissipation_constants(
    c: float, m: int, p: float, M: float, C_d: float
) -> DissipationConstants:
    """d2 = ((1 + C_d) M)^(1 - theta), d3 = c theta / 2^m, gamma2 = m, gamma3 = 1."""
    problems = []
    if not c > 0:
        problems.append(f"ellipticity constant c must be > 0, got {c}")
    if int(m) != m or m < 2 or int(m) % 2:
        problems.append(f"degree m must be an even integer >= 2, got {m}")
    if not M >= 1:
        problems.append(f"M must be >= 1, got {M}")
    if not C_d > 0:
        problems.append(f"C_d must be > 0, got {C_d}")
    if problems:
        raise InvalidParamsError(problems)
    p0, theta = interpolation_params(p)
    m = int(m)
    return DissipationConstants(
        d2=((1.0 + C_d) * M) ** (1.0 - theta),
        d3=c * theta / 2.0 ** m,
        gamma2=float(m),
        gamma3=1.0,
        p0=p0,
        theta=theta,
    )


def elliptic_params(
    unc: UncertaintyConstants, diss: DissipationConstants, M: float, T: float, r: Index
) -> AbstractParams:
    """Abstract certificate inputs for an elliptic semigroup observed on a thick set."""
    return AbstractParams(
        M=M,
        omega=0.0,
        lambda_star=0.0,
        d0=math.exp(unc.ln_d0) if unc.ln_d0 < 700 else math.inf,
        log_d0=unc.ln_d0,
        d1=unc.d1,
        gamma1=unc.gamma1,
        d2=diss.d2,
        d3=diss.d3,
        gamma2=diss.gamma2,
        gamma3=diss.gamma3,
        norm_C=1.0,
        T=T,
        r=r,
    )


def elliptic_cobs(
    rho: float,
    L: Sequence[float],
    K: float,
    c: float,
    m: int,
    p: float,
    M: float,
    C_d: float,
    T: float,
    r: Index,
    rel_tol: float = DEFAULT_REL_TOL,
) -> CertBundle:
    """
    Certificate for du/dt + A u = 0 on L_p(R^d) observed on a (rho, L)-thick set.

    Chains ``ls_constants`` and ``dissipation_constants`` into the abstract
    certificate with omega = 0, lambda_star = 0 and ||C|| = 1.
    """
    unc = ls_constants(rho, L, K)
    diss = dissipation_constants(c, m, p, M, C_d)
    params = elliptic_params(unc, diss, M, T, r)
    provenance = {
        "source": "elliptic",
        "rho": rho,
        "L": list(unc.L),
        "K": K,
        "c": c,
        "m": int(m),
        "p": p,
        "M": M,
        "C_d": C_d,
        "p0": diss.p0,
        "theta": diss.theta,
    }
    return certify(params, rel_tol, allow_zero_d1=True, provenance=provenance)


def log_elliptic_closed_form(
    unc: UncertaintyConstants, diss: DissipationConstants, M: float, T: float, r: Index
) -> float:
    """
    ln of the elliptic closed form

        4 M d0 (4 K1)^(8/(e ln 2)) T^(-1/r)
            exp(4 (2 * 8^(m/(m-1)) d1^m / d3)^(1/(m-1)) T^(-1/(m-1))),

    with K1 = (d0 + 1) M^2 d2. Matches the abstract route for gamma1 = gamma3 = 1.
    """
    m = diss.gamma2
    ln_k1 = float(np.logaddexp(unc.ln_d0, 0.0)) + 2.0 * math.log(M) + math.log(diss.d2)
    value = LN4 + math.log(M) + unc.ln_d0 + (8.0 / E_LN2) * (LN4 + ln_k1)
    value -= reciprocal(parse_index(r)) * math.log(T)
    if unc.d1 > 0:
        inner = LN2 + (m / (m - 1.0)) * math.log(8.0) + m * math.log(unc.d1) - math.log(diss.d3)
        value += 4.0 * math.exp(inner / (m - 1.0)) * T ** (-1.0 / (m - 1.0))
    return value


def p_sweep(
    ps: Sequence[float],
    rho: float,
    L: Sequence[float],
    K: float,
    c: float,
    m: int,
    M: float,
    C_d: float,
    T: float,
    r: Index,
) -> List[Dict[str, float]]:
    """ln C_obs (closed form) across integrability indices p."""
    rows = []
    unc = ls_constants(rho, L, K)
    for p in ps:
        diss = dissipation_constants(c, m, p, M, C_d)
        params = elliptic_params(unc, diss, M, T, r)
        ln_C1, C2, C3, ln_cobs = _closed_form_logs(params.validate(allow_zero_d1=True))
        rows.append(
            {"p": float(p), "theta": diss.theta, "d2": diss.d2, "d3": diss.d3, "C2": C2,
             "ln_cobs_closed": ln_cobs}
        )
    return rows


__all__ = [
    "AbstractParams",
    "CertBundle",
    "ContinuousConstants",
    "DerivedConstants",
    "DissipationConstants",
    "INF",
    "UncertaintyConstants",
    "averaging_identity_residual",
    "certify",
    "cobs_closed_form",
    "cobs_series_bound",
    "derived_constants",
    "discrete_to_continuous",
    "dissipation_constants",
    "double_exponential_series",
    "elliptic_cobs",
    "elliptic_params",
    "interpolation_params",
    "invariant_violations",
    "is_infinite",
    "k2_bound_check",
    "k3_floor",
    "log_elliptic_closed_form",
    "ls_constants",
    "p_sweep",
    "series_term",
    "sum_estimate_bound",
]
