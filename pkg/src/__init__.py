"""
obscert: certified final-state observability constants for elliptic
semigroups, with spectral simulation, thick-set analysis, empirical
verification and minimal-norm null control.
"""

__version__ = "0.1.0"

from .base import (
    INF,
    ArtifactIOError,
    CertificationError,
    HypothesisViolationError,
    InvalidConfigError,
    InvalidParamsError,
    NonConvergenceError,
    NonFiniteConstantError,
    ObscertError,
)
from .cert_engine import AbstractParams, CertBundle, certify, elliptic_cobs
from .control import ControlResult, duhamel_solve, gramian_apply, hum_control
from .spectral_sim import EllipticSymbol, Field, GridSpec, kernel_field, semigroup_apply
from .thickness import Mask, gen_mask, thickness_rho
from .verify import (
    check_dissipation,
    counterexample_sweep,
    estimate_observability_ratio,
    fit_uncertainty,
)

__all__ = [
    "INF",
    "AbstractParams",
    "ArtifactIOError",
    "CertBundle",
    "CertificationError",
    "ControlResult",
    "EllipticSymbol",
    "Field",
    "GridSpec",
    "HypothesisViolationError",
    "InvalidConfigError",
    "InvalidParamsError",
    "Mask",
    "NonConvergenceError",
    "NonFiniteConstantError",
    "ObscertError",
    "certify",
    "check_dissipation",
    "counterexample_sweep",
    "duhamel_solve",
    "elliptic_cobs",
    "estimate_observability_ratio",
    "fit_uncertainty",
    "gen_mask",
    "gramian_apply",
    "hum_control",
    "kernel_field",
    "semigroup_apply",
    "thickness_rho",
]
