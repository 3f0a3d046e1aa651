"""
Minimal-norm null control for p = r = 2.

The controlled system x' = -A x + 1_omega u is discretized with the midpoint
rule in time. The Gramian uses the same nodes, so at the discrete level

    x(T) = S_T x0 + Lambda phi

holds exactly when u(t_j) = 1_omega S*_{T - t_j} phi. Solving
Lambda phi = -S_T x0 by conjugate gradient therefore drives x(T) to the CG
residual.
"""

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft as sp_fft

from .base import (
    GridMismatchError,
    InvalidParamsError,
    JsonRecord,
    NonConvergenceError,
    parallel_map,
    representable_exp,
)
from .cert_engine import CertBundle
from .spectral_sim import (
    EllipticSymbol,
    Field,
    midpoints,
    semigroup_apply,
    symbol_on_grid,
    write_frames,
)
from .thickness import Mask

logger = logging.getLogger(__name__)

DEFAULT_CG_TOL = 1e-8
DEFAULT_CG_MAXITER = 200
AUTO_REGULARIZATION = 1e-8


# =============================================================================
# Duhamel solver
# =============================================================================


def _check_inputs(symbol: EllipticSymbol, mask: Mask, x0: Field, T: float, n_t: int) -> float:
    if symbol.d != mask.grid.d or x0.grid != mask.grid:
        raise GridMismatchError("symbol, mask and initial state must share one grid")
    if not T > 0:
        raise InvalidParamsError(f"T must be > 0, got {T}")
    if n_t < 1:
        raise InvalidParamsError(f"n_t must be >= 1, got {n_t}")
    return T / n_t


def duhamel_solve(
    symbol: EllipticSymbol,
    mask: Mask,
    x0: Field,
    u: Sequence[Field],
    T: float,
    n_t: int,
) -> Field:
    """
    x(T) = S_T x0 + sum_j h S_{T - t_j} 1_omega u(t_j), t_j = (j + 1/2) h.

    ``u`` holds one field per time node.
    """
    h = _check_inputs(symbol, mask, x0, T, n_t)
    if len(u) != n_t:
        raise InvalidParamsError(f"control has {len(u)} samples, time grid has {n_t}")
    state = semigroup_apply(symbol, T, x0)
    for t_j, u_j in zip(midpoints(T, n_t), u):
        if u_j.grid != x0.grid:
            raise GridMismatchError("control sample lives on a different grid")
        state = state + h * semigroup_apply(symbol, T - float(t_j), mask.restrict(u_j))
    return state


# =============================================================================
# Gramian
# =============================================================================


class Gramian:
    """
    Lambda phi = sum_j h S_{s_j} 1_omega S*_{s_j} phi over the midpoint nodes s_j.

    The adjoint semigroup uses the conjugate symbol. Each application costs two
    FFTs per time node; nodes run on ``threads`` workers and are summed in
    order.
    """

    def __init__(
        self,
        symbol: EllipticSymbol,
        mask: Mask,
        T: float,
        n_t: int,
        threads: int = 1,
    ):
        if symbol.d != mask.grid.d:
            raise GridMismatchError("symbol and mask dimensions differ")
        if not T > 0 or n_t < 1:
            raise InvalidParamsError(f"need T > 0 and n_t >= 1, got T={T}, n_t={n_t}")
        self.symbol = symbol
        self.mask = mask
        self.grid = mask.grid
        self.T = T
        self.n_t = n_t
        self.h = T / n_t
        self.nodes = midpoints(T, n_t)
        self.threads = threads
        self._a = symbol_on_grid(symbol, self.grid)
        self._a_adjoint = symbol_on_grid(symbol.conjugate(), self.grid)

    def _node_term(self, spectrum: np.ndarray, s: float) -> np.ndarray:
        observed = np.where(self.mask.bits, sp_fft.ifftn(np.exp(-s * self._a_adjoint) * spectrum), 0.0)
        return np.exp(-s * self._a) * sp_fft.fftn(observed)

    def apply(self, phi: Field) -> Field:
        if phi.grid != self.grid:
            raise GridMismatchError("phi lives on a different grid")
        if phi.is_zero():
            return Field.zeros(self.grid)
        spectrum = sp_fft.fftn(phi.values)
        terms = parallel_map(lambda s: self._node_term(spectrum, float(s)), self.nodes, self.threads)
        total = np.zeros(self.grid.shape, dtype=np.complex128)
        for term in terms:
            total += term
        return Field(self.grid, self.h * sp_fft.ifftn(total))

    __call__ = apply

    def observed_adjoint(self, phi: Field) -> List[Field]:
        """1_omega S*_{T - t_j} phi at every forward node t_j, i.e. the HUM control."""
        spectrum = sp_fft.fftn(phi.values)
        out = []
        for t_j in self.nodes:
            values = sp_fft.ifftn(np.exp(-(self.T - float(t_j)) * self._a_adjoint) * spectrum)
            out.append(Field(self.grid, np.where(self.mask.bits, values, 0.0)))
        return out

    def quadratic_form(self, phi: Field) -> float:
        """int_0^T ||1_omega S*_s phi||^2 ds by the midpoint rule, evaluated directly."""
        return self.h * sum(u.norm(2) ** 2 for u in self.observed_adjoint(phi))


def gramian_apply(
    symbol: EllipticSymbol, mask: Mask, T: float, n_t: int, phi: Field, threads: int = 1
) -> Field:
    return Gramian(symbol, mask, T, n_t, threads).apply(phi)


# =============================================================================
# Conjugate gradient
# =============================================================================


@dataclass
class CGOutcome:
    solution: Field
    iterations: int
    converged: bool
    history: List[float] = field(default_factory=list)


def conjugate_gradient(
    operator: Callable[[Field], Field],
    rhs: Field,
    tol: float,
    maxiter: int,
    scale: Optional[float] = None,
    shift: float = 0.0,
) -> CGOutcome:
    """
    CG for (operator + shift I) x = rhs in the grid L2 inner product.

    Stops once ||r|| <= tol * scale (default scale: ||rhs||). ``history`` holds
    ||r|| before each iteration and after the last one.
    """
    scale = rhs.norm(2) if scale is None else scale
    target = tol * scale
    x = Field.zeros(rhs.grid)
    r = rhs
    p = r
    rr = r.inner(r).real
    history = [math.sqrt(rr)]
    if history[-1] <= target:
        return CGOutcome(x, 0, True, history)
    for iteration in range(1, maxiter + 1):
        Ap = operator(p)
        if shift:
            Ap = Ap + shift * p
        curvature = p.inner(Ap).real
        if not curvature > 0:
            logger.warning("CG hit non-positive curvature %.3e at iteration %d", curvature, iteration)
            return CGOutcome(x, iteration, False, history)
        step = rr / curvature
        x = x + step * p
        r = r - step * Ap
        rr_next = r.inner(r).real
        history.append(math.sqrt(rr_next))
        if history[-1] <= target:
            logger.debug("CG converged in %d iterations (residual %.3e)", iteration, history[-1])
            return CGOutcome(x, iteration, True, history)
        p = r + (rr_next / rr) * p
        rr = rr_next
    return CGOutcome(x, maxiter, False, history)


# =============================================================================
# HUM control
# =============================================================================


@dataclass(frozen=True)
class ControlResult(JsonRecord):
    """
    Outcome of a minimal-norm control run.

    ``controls`` and ``phi`` stay out of the JSON form; use
    ``write_trajectory`` for the fields themselves.
    """

    T: float
    n_t: int
    controls: Tuple[Field, ...]
    phi: Field
    final_state: Field
    initial_norm: float
    final_norm: float
    cost: float  # ||u||_{L2((0,T); L2(omega))}
    cost_gramian: float  # <Lambda phi, phi>
    cost_dual: float  # -<S_T x0, phi>
    iterations: int
    converged: bool
    residual_history: Tuple[float, ...]
    cg_tol: float
    regularization: float = 0.0
    ln_bound: Optional[float] = None  # ln C_obs

    _json_exclude = ("controls", "phi", "final_state")

    @property
    def relative_residual(self) -> float:
        return self.final_norm / self.initial_norm if self.initial_norm else 0.0

    @property
    def certified(self) -> bool:
        return self.converged and self.regularization == 0.0

    @property
    def ln_cost_bound(self) -> Optional[float]:
        """ln(C_obs ||x0||)."""
        if self.ln_bound is None or self.initial_norm == 0:
            return None
        return self.ln_bound + math.log(self.initial_norm)

    @property
    def cost_bound(self) -> Optional[float]:
        if self.ln_cost_bound is None:
            return None
        return representable_exp(self.ln_cost_bound, "C_obs ||x0||")

    @property
    def ln_margin(self) -> Optional[float]:
        """ln(C_obs ||x0|| / cost); >= 0 means the cost respects the bound."""
        if self.ln_cost_bound is None or self.cost == 0:
            return None
        return self.ln_cost_bound - math.log(self.cost)

    @property
    def within_bound(self) -> Optional[bool]:
        if self.ln_bound is None:
            return None
        return self.ln_margin is None or self.ln_margin >= 0.0

    def cost_identity_error(self) -> float:
        """Largest relative gap among the three evaluations of cost^2."""
        values = (self.cost ** 2, self.cost_gramian, self.cost_dual)
        reference = max(abs(v) for v in values)
        if reference == 0:
            return 0.0
        return max(abs(a - b) for a in values for b in values) / reference

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data.update(
            relative_residual=self.relative_residual,
            certified=self.certified,
            cost_bound=self.cost_bound,
            ln_cost_bound=self.ln_cost_bound,
            ln_margin=self.ln_margin,
            within_bound=self.within_bound,
            cost_identity_error=self.cost_identity_error(),
        )
        return data

    def print_summary(self) -> None:
        print(f"\n{'=' * 60}")
        print("Minimal-norm control")
        print(f"{'=' * 60}")
        print(f"  T={self.T:g}  n_t={self.n_t}  CG iterations: {self.iterations}")
        print(f"  ||x0|| = {self.initial_norm:.6e}   ||x(T)|| = {self.final_norm:.6e}")
        print(f"  relative residual: {self.relative_residual:.3e}")
        print(f"  cost: {self.cost:.6e}   identity gap: {self.cost_identity_error():.3e}")
        if self.ln_margin is not None:
            print(f"  ln(C_obs ||x0||) = {self.ln_cost_bound:.6f}   ln margin: {self.ln_margin:.6f}")
        if not self.certified:
            print("  Status: NOT CERTIFIED (regularized or not converged)")
        print(f"{'=' * 60}\n")


def hum_control(
    symbol: EllipticSymbol,
    mask: Mask,
    x0: Field,
    T: float,
    n_t: int = 64,
    cg_tol: float = DEFAULT_CG_TOL,
    cg_maxiter: int = DEFAULT_CG_MAXITER,
    bound: Optional[CertBundle] = None,
    regularization: float = 0.0,
    auto_regularize: bool = False,
    threads: int = 1,
) -> ControlResult:
    """
    Solve Lambda phi = -S_T x0 by CG (stopping at ||r|| <= cg_tol ||x0||) and
    return u(t_j) = 1_omega S*_{T - t_j} phi.

    Raises:
        NonConvergenceError: CG did not reach the tolerance within
            ``cg_maxiter`` iterations and ``auto_regularize`` is off
    """
    _check_inputs(symbol, mask, x0, T, n_t)
    if regularization < 0:
        raise InvalidParamsError(f"regularization must be >= 0, got {regularization}")
    if mask.is_empty():
        raise InvalidParamsError("mask is empty")
    ln_c_obs = bound.ln_cobs if bound is not None else None
    grid = x0.grid
    initial_norm = x0.norm(2)
    if x0.is_zero():
        zero = Field.zeros(grid)
        return ControlResult(
            T=T, n_t=n_t, controls=tuple(zero for _ in range(n_t)), phi=zero, final_state=zero,
            initial_norm=0.0, final_norm=0.0, cost=0.0, cost_gramian=0.0, cost_dual=0.0,
            iterations=0, converged=True, residual_history=(0.0,), cg_tol=cg_tol,
            regularization=regularization, ln_bound=ln_c_obs,
        )

    gramian = Gramian(symbol, mask, T, n_t, threads)
    free_state = semigroup_apply(symbol, T, x0)
    rhs = -free_state
    outcome = conjugate_gradient(gramian, rhs, cg_tol, cg_maxiter, initial_norm, regularization)
    if not outcome.converged and auto_regularize and regularization == 0.0:
        regularization = AUTO_REGULARIZATION * T
        logger.warning(
            "CG stalled at %.3e after %d iterations; retrying with regularization %.3e "
            "(result will not be certified)",
            outcome.history[-1], outcome.iterations, regularization,
        )
        outcome = conjugate_gradient(gramian, rhs, cg_tol, cg_maxiter, initial_norm, regularization)
    if not outcome.converged:
        raise NonConvergenceError(
            f"CG reached {outcome.history[-1]:.3e} > {cg_tol * initial_norm:.3e} after "
            f"{outcome.iterations} iterations; the mask may be too thin for T={T}",
            outcome.history,
        )

    phi = outcome.solution
    controls = gramian.observed_adjoint(phi)
    final_state = duhamel_solve(symbol, mask, x0, controls, T, n_t)
    cost_squared = gramian.h * sum(u.norm(2) ** 2 for u in controls)
    result = ControlResult(
        T=T,
        n_t=n_t,
        controls=tuple(controls),
        phi=phi,
        final_state=final_state,
        initial_norm=initial_norm,
        final_norm=final_state.norm(2),
        cost=math.sqrt(cost_squared),
        cost_gramian=gramian.apply(phi).inner(phi).real,
        cost_dual=-free_state.inner(phi).real,
        iterations=outcome.iterations,
        converged=outcome.converged,
        residual_history=tuple(outcome.history),
        cg_tol=cg_tol,
        regularization=regularization,
        ln_bound=ln_c_obs,
    )
    logger.info(
        "control: %d CG iterations, residual %.3e, cost %.6g",
        result.iterations, result.relative_residual, result.cost,
    )
    return result


def trajectory(
    symbol: EllipticSymbol,
    mask: Mask,
    x0: Field,
    controls: Sequence[Field],
    T: float,
    stride: int = 1,
) -> List[Field]:
    """
    Controlled states at t_k = k h for k = 0, stride, 2 stride, ..., n_t.

    Node j contributes h S_{t_k - t_j} 1_omega u_j for every t_j < t_k, so the
    last frame equals ``duhamel_solve``.
    """
    n_t = len(controls)
    h = _check_inputs(symbol, mask, x0, T, n_t)
    if stride < 1:
        raise InvalidParamsError(f"stride must be >= 1, got {stride}")
    a = symbol_on_grid(symbol, x0.grid)
    initial = sp_fft.fftn(x0.values)
    forced = [sp_fft.fftn(mask.restrict(u).values) for u in controls]
    steps = list(range(0, n_t + 1, stride))
    if steps[-1] != n_t:
        steps.append(n_t)
    frames = []
    for k in steps:
        spectrum = np.exp(-k * h * a) * initial
        for j in range(k):
            spectrum = spectrum + h * np.exp(-(k - j - 0.5) * h * a) * forced[j]
        frames.append(Field(x0.grid, sp_fft.ifftn(spectrum)))
    return frames


def write_trajectory(
    result: ControlResult,
    symbol: EllipticSymbol,
    mask: Mask,
    x0: Field,
    directory: Union[str, Path],
    stride: int = 1,
) -> List[Path]:
    """Dump the controlled trajectory as numbered binary field frames."""
    frames = trajectory(symbol, mask, x0, result.controls, result.T, stride)
    return write_frames(directory, frames, stem="state")
