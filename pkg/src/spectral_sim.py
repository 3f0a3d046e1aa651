"""
Fourier-multiplier backend on a periodic box approximating R^d.

Grids are centered (x_j = -box/2 + j dx per axis) and frequencies are angular
(xi_k = 2 pi k / box). The discrete transforms are scaled so they approximate
the unitary continuum transform

    F f(xi) = (2 pi)^(-d/2) int f(x) exp(-i x.xi) dx,

which makes kernel formulas such as p_t = (2 pi)^(-d/2) F^-1 exp(-t a) hold
as written. Multiplier operators (semigroup, cutoff projectors) only need the
raw FFT pair, since the scalings and phases cancel.
"""

import itertools
import json
import logging
import math
import struct
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft as sp_fft

from .base import (
    ArtifactIOError,
    GridMismatchError,
    Index,
    InvalidParamsError,
    JsonRecord,
    NotStronglyEllipticError,
    is_infinite,
    parse_index,
)

logger = logging.getLogger(__name__)

FIELD_MAGIC = b"OBSF"
FIELD_VERSION = 1

DEFAULT_SPHERE_SAMPLES = 1024

SeedLike = Union[None, int, np.random.SeedSequence, np.random.Generator]


# =============================================================================
# Grid
# =============================================================================


@dataclass(frozen=True)
class GridSpec(JsonRecord):
    """Periodic lattice with N points per axis on a box of the given side lengths."""

    d: int
    N: int
    box: Tuple[float, ...]

    def __post_init__(self) -> None:
        box = self.box
        if isinstance(box, (int, float, np.floating, np.integer)):
            box = (float(box),) * int(self.d)
        object.__setattr__(self, "box", tuple(float(b) for b in box))
        problems = []
        if int(self.d) != self.d or not 1 <= self.d <= 3:
            problems.append(f"dimension d must be 1, 2 or 3, got {self.d}")
        if int(self.N) != self.N or self.N < 8 or (int(self.N) & (int(self.N) - 1)):
            problems.append(f"N must be a power of two >= 8, got {self.N}")
        if len(self.box) != self.d:
            problems.append(f"box needs {self.d} side lengths, got {self.box}")
        if any(not (b > 0 and math.isfinite(b)) for b in self.box):
            problems.append(f"box side lengths must be positive, got {self.box}")
        if problems:
            raise InvalidParamsError(problems)
        object.__setattr__(self, "d", int(self.d))
        object.__setattr__(self, "N", int(self.N))

    @property
    def shape(self) -> Tuple[int, ...]:
        return (self.N,) * self.d

    @property
    def dx(self) -> Tuple[float, ...]:
        return tuple(b / self.N for b in self.box)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.dx))

    @property
    def volume(self) -> float:
        return float(np.prod(self.box))

    @property
    def nyquist(self) -> float:
        """Smallest per-axis Nyquist frequency pi N / box."""
        return min(math.pi * self.N / b for b in self.box)

    @property
    def origin(self) -> Tuple[float, ...]:
        """Coordinates of cell 0."""
        return tuple(-b / 2.0 for b in self.box)

    def axes(self) -> List[np.ndarray]:
        return [o + np.arange(self.N) * h for o, h in zip(self.origin, self.dx)]

    def frequency_axes(self) -> List[np.ndarray]:
        return [2.0 * np.pi * sp_fft.fftfreq(self.N, d=h) for h in self.dx]

    def mesh(self) -> Tuple[np.ndarray, ...]:
        return _coordinate_mesh(self)

    def frequency_mesh(self) -> Tuple[np.ndarray, ...]:
        return _frequency_mesh(self)

    def xi_norm(self) -> np.ndarray:
        return _xi_norm(self)

    def index_of(self, point: Sequence[float]) -> Tuple[int, ...]:
        """Nearest cell index to a point, wrapped onto the torus."""
        return tuple(
            int(round((p - o) / h)) % self.N for p, o, h in zip(point, self.origin, self.dx)
        )


def _frozen(array: np.ndarray) -> np.ndarray:
    array.flags.writeable = False
    return array


@lru_cache(maxsize=32)
def _coordinate_mesh(grid: GridSpec) -> Tuple[np.ndarray, ...]:
    return tuple(_frozen(a) for a in np.meshgrid(*grid.axes(), indexing="ij"))


@lru_cache(maxsize=32)
def _frequency_mesh(grid: GridSpec) -> Tuple[np.ndarray, ...]:
    return tuple(_frozen(a) for a in np.meshgrid(*grid.frequency_axes(), indexing="ij"))


@lru_cache(maxsize=32)
def _xi_norm(grid: GridSpec) -> np.ndarray:
    return _frozen(np.sqrt(sum(xi ** 2 for xi in _frequency_mesh(grid))))


def next_power_of_two(n: float, minimum: int = 8) -> int:
    return max(minimum, 1 << max(0, math.ceil(math.log2(max(n, 1.0)))))


# =============================================================================
# Fields
# =============================================================================


@dataclass(frozen=True, eq=False)
class Field:
    """Complex samples on a grid. Values are copied and made read-only."""

    grid: GridSpec
    values: np.ndarray

    def __post_init__(self) -> None:
        values = np.array(self.values, dtype=np.complex128)
        if values.shape != self.grid.shape:
            if values.size == self.grid.N ** self.grid.d:
                values = values.reshape(self.grid.shape)
            else:
                raise GridMismatchError(
                    f"field has {values.size} samples, grid needs {self.grid.N ** self.grid.d}"
                )
        if not np.all(np.isfinite(values)):
            raise InvalidParamsError("field contains non-finite samples")
        object.__setattr__(self, "values", _frozen(values))

    @classmethod
    def zeros(cls, grid: GridSpec) -> "Field":
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128))

    def with_values(self, values: np.ndarray) -> "Field":
        return Field(self.grid, values)

    def _same_grid(self, other: "Field") -> None:
        if other.grid != self.grid:
            raise GridMismatchError(f"grid mismatch: {self.grid} vs {other.grid}")

    def __add__(self, other: "Field") -> "Field":
        self._same_grid(other)
        return Field(self.grid, self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        self._same_grid(other)
        return Field(self.grid, self.values - other.values)

    def __mul__(self, scalar: complex) -> "Field":
        return Field(self.grid, self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return Field(self.grid, -self.values)

    def inner(self, other: "Field") -> complex:
        """L2 inner product, conjugate-linear in the first slot."""
        self._same_grid(other)
        return complex(np.vdot(self.values, other.values) * self.grid.cell_volume)

    def norm(self, p: Any = 2) -> float:
        return lp_norm(self, p)

    def is_zero(self) -> bool:
        return not np.any(self.values)


def lp_norm_values(values: np.ndarray, cell_volume: float, p: Index) -> float:
    magnitude = np.abs(values)
    if is_infinite(p):
        return float(magnitude.max()) if magnitude.size else 0.0
    p = float(p)
    if p == 2.0:
        return float(math.sqrt(np.sum(magnitude * magnitude) * cell_volume))
    return float((np.sum(magnitude ** p) * cell_volume) ** (1.0 / p))


def lp_norm(f: Field, p: Any = 2) -> float:
    """Riemann-sum L_p norm; p = inf gives max |f|."""
    return lp_norm_values(f.values, f.grid.cell_volume, parse_index(p, "p"))


def lr_time_norm(samples: Sequence[float], r: Any, T: float) -> float:
    """
    L_r((0, T)) norm of g from samples at uniform midpoints.

    Composite midpoint rule for finite r, the sample maximum for r = inf.
    """
    g = np.abs(np.asarray(samples, dtype=float))
    if g.size == 0:
        raise InvalidParamsError("time norm needs at least one sample")
    if not T > 0:
        raise InvalidParamsError(f"horizon T must be > 0, got {T}")
    r = parse_index(r, "r")
    if is_infinite(r):
        return float(g.max())
    h = T / g.size
    return float((np.sum(g ** r) * h) ** (1.0 / r))


def midpoints(T: float, n_t: int) -> np.ndarray:
    """(j + 1/2) T / n_t for j = 0..n_t-1."""
    if n_t < 1:
        raise InvalidParamsError(f"n_t must be >= 1, got {n_t}")
    return (np.arange(n_t) + 0.5) * (T / n_t)


# =============================================================================
# Elliptic symbols
# =============================================================================

MultiIndex = Tuple[int, ...]


@dataclass(frozen=True)
class EllipticSymbol(JsonRecord):
    """
    Homogeneous polynomial symbol a(xi) = sum_alpha a_alpha i^|alpha| xi^alpha.

    ``coeffs`` pairs each multi-index (|alpha| = m) with a_alpha, so the
    generated operator is A = sum_alpha a_alpha d^alpha. The negative
    Laplacian has a_alpha = -1 on every 2 e_j.
    """

    d: int
    m: int
    coeffs: Tuple[Tuple[MultiIndex, complex], ...]
    name: str = ""

    def __post_init__(self) -> None:
        merged: Dict[MultiIndex, complex] = {}
        for alpha, value in self.coeffs:
            alpha = tuple(int(a) for a in alpha)
            merged[alpha] = merged.get(alpha, 0.0) + complex(value)
        coeffs = tuple(sorted((a, v) for a, v in merged.items() if v != 0))
        object.__setattr__(self, "coeffs", coeffs)
        problems = []
        if int(self.m) != self.m or self.m < 2 or int(self.m) % 2:
            problems.append(f"degree m must be an even integer >= 2, got {self.m}")
        if not 1 <= self.d <= 3:
            problems.append(f"dimension d must be 1, 2 or 3, got {self.d}")
        if not coeffs:
            problems.append("symbol has no nonzero coefficients")
        for alpha, _ in coeffs:
            if len(alpha) != self.d or any(a < 0 for a in alpha):
                problems.append(f"multi-index {alpha} does not fit dimension {self.d}")
            elif sum(alpha) != self.m:
                problems.append(f"multi-index {alpha} has order {sum(alpha)}, expected {self.m}")
        if problems:
            raise InvalidParamsError(problems)

    @property
    def i_power(self) -> int:
        """i^m, which is +-1 for even m."""
        return -1 if (self.m // 2) % 2 else 1

    def __call__(self, xi: Sequence[np.ndarray]) -> np.ndarray:
        """Evaluate on frequency components xi[0], ..., xi[d-1] (broadcastable)."""
        if len(xi) != self.d:
            raise GridMismatchError(f"symbol is {self.d}-dimensional, got {len(xi)} components")
        comps = [np.asarray(x, dtype=float) for x in xi]
        out = np.zeros(np.broadcast(*comps).shape, dtype=np.complex128)
        for alpha, value in self.coeffs:
            term = np.ones_like(out, dtype=float)
            for x, a in zip(comps, alpha):
                if a:
                    term = term * x ** a
            out += value * self.i_power * term
        return out

    def conjugate(self) -> "EllipticSymbol":
        """Symbol of the Hilbert adjoint."""
        return EllipticSymbol(
            self.d, self.m, tuple((a, v.conjugate()) for a, v in self.coeffs), self.name
        )

    @property
    def is_real(self) -> bool:
        return all(v.imag == 0 for _, v in self.coeffs)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "d": self.d,
            "m": self.m,
            "name": self.name,
            "coeffs": [
                {"alpha": list(alpha), "re": value.real, "im": value.imag}
                for alpha, value in self.coeffs
            ],
        }


def laplacian(d: int) -> EllipticSymbol:
    """a(xi) = |xi|^2, i.e. A = -Laplacian."""
    return EllipticSymbol(d, 2, tuple((_unit(d, j, 2), -1.0) for j in range(d)), "laplacian")


def power_sum(d: int, m: int) -> EllipticSymbol:
    """a(xi) = xi_1^m + ... + xi_d^m."""
    sign = -1.0 if (m // 2) % 2 else 1.0
    return EllipticSymbol(d, m, tuple((_unit(d, j, m), sign) for j in range(d)), f"power_sum_{m}")


def polyharmonic(d: int, k: int) -> EllipticSymbol:
    """a(xi) = |xi|^(2k)."""
    sign = -1.0 if k % 2 else 1.0
    coeffs = []
    for beta in _compositions(k, d):
        multinomial = math.factorial(k)
        for b in beta:
            multinomial //= math.factorial(b)
        coeffs.append((tuple(2 * b for b in beta), sign * multinomial))
    return EllipticSymbol(d, 2 * k, tuple(coeffs), f"polyharmonic_{k}")


def from_matrix(matrix: Sequence[Sequence[float]]) -> EllipticSymbol:
    """a(xi) = xi^T A xi for a symmetric coefficient matrix A (divergence form)."""
    A = np.asarray(matrix, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidParamsError(f"coefficient matrix must be square, got shape {A.shape}")
    if not np.allclose(A, A.T):
        raise InvalidParamsError("coefficient matrix must be symmetric")
    d = A.shape[0]
    coeffs: List[Tuple[MultiIndex, complex]] = []
    for j in range(d):
        for k in range(j, d):
            alpha = [0] * d
            alpha[j] += 1
            alpha[k] += 1
            weight = A[j, k] if j == k else 2.0 * A[j, k]
            coeffs.append((tuple(alpha), -weight))
    return EllipticSymbol(d, 2, tuple(coeffs), "matrix")


def from_coefficients(d: int, coeffs: Mapping[Sequence[int], complex]) -> EllipticSymbol:
    """Raw a_alpha map; the degree is read off the multi-indices."""
    items = [(tuple(int(a) for a in alpha), complex(v)) for alpha, v in coeffs.items()]
    if not items:
        raise InvalidParamsError("symbol has no coefficients")
    m = sum(items[0][0])
    return EllipticSymbol(d, m, tuple(items), "coefficients")


def _unit(d: int, j: int, power: int) -> MultiIndex:
    alpha = [0] * d
    alpha[j] = power
    return tuple(alpha)


def _compositions(total: int, parts: int) -> Iterable[Tuple[int, ...]]:
    for combo in itertools.product(range(total + 1), repeat=parts):
        if sum(combo) == total:
            yield combo


@lru_cache(maxsize=64)
def symbol_on_grid(symbol: EllipticSymbol, grid: GridSpec) -> np.ndarray:
    """a(xi_k) on the grid's frequency lattice (read-only, cached)."""
    if symbol.d != grid.d:
        raise GridMismatchError(f"symbol dimension {symbol.d} != grid dimension {grid.d}")
    return _frozen(symbol(grid.frequency_mesh()))


def sphere_directions(d: int, samples: int = DEFAULT_SPHERE_SAMPLES) -> np.ndarray:
    """
    Unit vectors, shape (d, n).

    d = 2 uses equally spaced angles (a multiple of 8, so diagonals are hit),
    d = 3 a Fibonacci lattice of samples^2 points. Axis and diagonal
    directions are always included.
    """
    lattice = np.array(
        [v for v in itertools.product((-1.0, 0.0, 1.0), repeat=d) if any(v)], dtype=float
    ).T
    lattice /= np.linalg.norm(lattice, axis=0)
    if d == 1:
        return lattice
    if d == 2:
        n = 8 * math.ceil(samples / 8)
        theta = 2.0 * np.pi * np.arange(n) / n
        dirs = np.vstack([np.cos(theta), np.sin(theta)])
    else:
        n = samples * samples
        k = np.arange(n) + 0.5
        z = 1.0 - 2.0 * k / n
        radius = np.sqrt(1.0 - z * z)
        phi = np.pi * (1.0 + math.sqrt(5.0)) * k
        dirs = np.vstack([radius * np.cos(phi), radius * np.sin(phi), z])
    return np.hstack([dirs, lattice])


@lru_cache(maxsize=64)
def ellipticity_constant(
    symbol: EllipticSymbol, sphere_samples: int = DEFAULT_SPHERE_SAMPLES
) -> float:
    """
    c = min over the unit sphere of re a(xi), by sampling.

    Raises:
        NotStronglyEllipticError: the sampled minimum is not positive
    """
    dirs = sphere_directions(symbol.d, sphere_samples)
    c = float(np.min(symbol(list(dirs)).real))
    if not c > 0:
        raise NotStronglyEllipticError(
            f"symbol {symbol.name or symbol.coeffs} is not strongly elliptic: "
            f"min re a on the unit sphere is {c:.6g}"
        )
    return c


# =============================================================================
# Transforms and multipliers
# =============================================================================


def _phase(grid: GridSpec, shift: Sequence[float]) -> np.ndarray:
    """exp(-i xi . shift) on the frequency lattice."""
    xi = grid.frequency_mesh()
    return np.exp(-1j * sum(k * s for k, s in zip(xi, shift)))


def fourier_transform(f: Field) -> np.ndarray:
    """Samples of the unitary continuum transform at xi_k (FFT ordering)."""
    grid = f.grid
    scale = grid.cell_volume / (2.0 * np.pi) ** (grid.d / 2.0)
    return scale * _phase(grid, grid.origin) * sp_fft.fftn(f.values)


def inverse_fourier_transform(grid: GridSpec, spectrum: np.ndarray) -> Field:
    dxi = np.prod([2.0 * np.pi / b for b in grid.box])
    scale = dxi * grid.N ** grid.d / (2.0 * np.pi) ** (grid.d / 2.0)
    return Field(grid, scale * sp_fft.ifftn(spectrum / _phase(grid, grid.origin)))


def apply_multiplier(f: Field, multiplier: np.ndarray) -> Field:
    """F^-1 (m F f) with m sampled on the FFT-ordered frequency lattice."""
    return Field(f.grid, sp_fft.ifftn(multiplier * sp_fft.fftn(f.values)))


def semigroup_multiplier(symbol: EllipticSymbol, grid: GridSpec, t: float) -> np.ndarray:
    return np.exp(-t * symbol_on_grid(symbol, grid))


def _check_symbol_grid(symbol: EllipticSymbol, grid: GridSpec) -> None:
    if symbol.d != grid.d:
        raise GridMismatchError(f"symbol dimension {symbol.d} != grid dimension {grid.d}")


def semigroup_apply(symbol: EllipticSymbol, t: float, f: Field) -> Field:
    """S_t f = F^-1 exp(-t a) F f. t = 0 returns ``f`` itself."""
    if not t >= 0:
        raise InvalidParamsError(f"time must be >= 0, got {t}")
    _check_symbol_grid(symbol, f.grid)
    if t == 0:
        return f
    return apply_multiplier(f, semigroup_multiplier(symbol, f.grid, t))


def smooth_cutoff(r: np.ndarray) -> np.ndarray:
    """
    eta: 1 on [0, 1/2], 0 on [1, inf), C-infinity in between.

    eta(r) = phi(1 - u) / (phi(1 - u) + phi(u)), u = 2r - 1, phi(s) = exp(-1/s).
    """
    r = np.asarray(r, dtype=float)
    u = np.clip(2.0 * r - 1.0, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        phi_u = np.where(u > 0, np.exp(-1.0 / np.where(u > 0, u, 1.0)), 0.0)
        v = 1.0 - u
        phi_v = np.where(v > 0, np.exp(-1.0 / np.where(v > 0, v, 1.0)), 0.0)
    eta = phi_v / (phi_v + phi_u)
    return np.where(r <= 0.5, 1.0, np.where(r >= 1.0, 0.0, eta))


def cutoff_multiplier(grid: GridSpec, lam: float) -> np.ndarray:
    """chi_lam(xi) = eta(|xi| / lam)."""
    if not lam > 0:
        raise InvalidParamsError(f"spectral cutoff must be > 0, got {lam}")
    return smooth_cutoff(grid.xi_norm() / lam)


def projector_apply(lam: float, f: Field) -> Field:
    """P_lam f = F^-1 chi_lam F f."""
    return apply_multiplier(f, cutoff_multiplier(f.grid, lam))


def multiplier_kernel(
    grid: GridSpec, multiplier: np.ndarray, center: Optional[Sequence[float]] = None
) -> Field:
    """(2 pi)^(-d) int m(xi) exp(i (x - center).xi) dxi sampled on the grid."""
    center = tuple(center) if center is not None else (0.0,) * grid.d
    shift = tuple(c - o for c, o in zip(center, grid.origin))
    return Field(grid, sp_fft.ifftn(multiplier * _phase(grid, shift)) / grid.cell_volume)


def kernel_field(
    symbol: EllipticSymbol,
    t: float,
    grid: GridSpec,
    center: Optional[Sequence[float]] = None,
) -> Field:
    """Convolution kernel p_t = (2 pi)^(-d/2) F^-1 exp(-t a), centered at ``center``."""
    if not t > 0:
        raise InvalidParamsError(f"kernel time must be > 0, got {t}")
    _check_symbol_grid(symbol, grid)
    return multiplier_kernel(grid, semigroup_multiplier(symbol, grid, t), center)


def shift_field(f: Field, shift: Sequence[float]) -> Field:
    """f(. - shift) by exact Fourier translation."""
    return apply_multiplier(f, _phase(f.grid, shift))


def projector_kernel_l1(grid: GridSpec, lam: float = 1.0) -> float:
    """(2 pi)^(-d/2) ||F^-1 chi_lam||_L1, the uniform bound on ||P_lam||."""
    kernel = multiplier_kernel(grid, cutoff_multiplier(grid, lam))
    return lp_norm(kernel, 1)


class SemigroupBounds(NamedTuple):
    M: float
    C_d: float


def estimate_M_and_Cd(
    symbol: EllipticSymbol, grid: GridSpec, eta_grid: Optional[GridSpec] = None
) -> SemigroupBounds:
    """
    M = ||p_1||_L1 (clamped to >= 1) and C_d = (2 pi)^(-d/2) ||F^-1 chi_1||_L1.

    Young's inequality with the scaling of p_t gives ||S_t||_{p->p} <= ||p_1||_L1
    for every t and p.
    """
    ellipticity_constant(symbol)
    kernel_mass = lp_norm(kernel_field(symbol, 1.0, grid), 1)
    if kernel_mass < 1.0:
        logger.debug("kernel L1 mass %.17g below 1 by quadrature error; clamping", kernel_mass)
    C_d = projector_kernel_l1(eta_grid or grid, 1.0)
    return SemigroupBounds(M=max(kernel_mass, 1.0), C_d=C_d)


# =============================================================================
# Test vectors
# =============================================================================


def make_rng(seed: SeedLike) -> np.random.Generator:
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_field(
    grid: GridSpec,
    kind: str = "white",
    seed: SeedLike = None,
    lam: Optional[float] = None,
    s: float = 1.0,
    x0: Optional[Sequence[float]] = None,
) -> Field:
    """
    Deterministic test fields.

    kind:
        white: i.i.d. standard normal samples
        band_limited: white noise with every mode |xi| > lam removed
        gaussian_bump: exp(-|x - x0|^2 / (4 s))
    """
    if kind == "white":
        return Field(grid, make_rng(seed).standard_normal(grid.shape))
    if kind == "band_limited":
        if lam is None or not lam > 0:
            raise InvalidParamsError(f"band_limited needs lam > 0, got {lam}")
        noise = make_rng(seed).standard_normal(grid.shape)
        spectrum = sp_fft.fftn(noise)
        spectrum[grid.xi_norm() > lam] = 0.0
        return Field(grid, sp_fft.ifftn(spectrum).real)
    if kind == "gaussian_bump":
        if not s > 0:
            raise InvalidParamsError(f"gaussian_bump needs s > 0, got {s}")
        center = tuple(x0) if x0 is not None else (0.0,) * grid.d
        dist2 = sum((x - c) ** 2 for x, c in zip(grid.mesh(), center))
        return Field(grid, np.exp(-dist2 / (4.0 * s)))
    raise InvalidParamsError(f"unknown field kind {kind!r}")


# =============================================================================
# Binary field dump
# =============================================================================


def write_field(path: Union[str, Path], field: Field, metadata: Optional[Dict[str, Any]] = None) -> Path:
    """
    Write ``OBSF`` binary: magic, u32 version, u32 d, u32 N per axis, f64 box per
    axis, then little-endian complex128 samples in C order. A JSON sidecar with
    the grid metadata is written next to it.
    """
    path = Path(path)
    grid = field.grid
    header = struct.pack("<4sII", FIELD_MAGIC, FIELD_VERSION, grid.d)
    header += struct.pack(f"<{grid.d}I", *grid.shape)
    header += struct.pack(f"<{grid.d}d", *grid.box)
    sidecar = {
        "format": FIELD_MAGIC.decode(),
        "version": FIELD_VERSION,
        "d": grid.d,
        "N": list(grid.shape),
        "box": list(grid.box),
        "dtype": "<c16",
        "count": int(field.values.size),
    }
    if metadata:
        sidecar["metadata"] = metadata
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as handle:
            handle.write(header)
            handle.write(np.ascontiguousarray(field.values, dtype="<c16").tobytes())
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(sidecar, indent=2))
    except OSError as exc:
        raise ArtifactIOError(f"cannot write field {path}: {exc}") from exc
    return path


def read_field(path: Union[str, Path]) -> Field:
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ArtifactIOError(f"cannot read field {path}: {exc}") from exc
    head = struct.calcsize("<4sII")
    if len(raw) < head:
        raise ArtifactIOError(f"{path}: truncated header")
    magic, version, d = struct.unpack_from("<4sII", raw, 0)
    if magic != FIELD_MAGIC or version != FIELD_VERSION:
        raise ArtifactIOError(f"{path}: not an OBSF v{FIELD_VERSION} file")
    if not 1 <= d <= 3:
        raise ArtifactIOError(f"{path}: unsupported dimension {d}")
    shape = struct.unpack_from(f"<{d}I", raw, head)
    offset = head + 4 * d
    box = struct.unpack_from(f"<{d}d", raw, offset)
    offset += 8 * d
    if len(set(shape)) != 1:
        raise ArtifactIOError(f"{path}: non-cubic grids are not supported ({shape})")
    count = int(np.prod(shape))
    if len(raw) - offset != 16 * count:
        raise ArtifactIOError(f"{path}: expected {count} samples")
    values = np.frombuffer(raw, dtype="<c16", count=count, offset=offset).reshape(shape)
    return Field(GridSpec(d, shape[0], box), values)


def write_frames(
    directory: Union[str, Path], fields: Sequence[Field], stem: str = "frame"
) -> List[Path]:
    """One OBSF file per frame, numbered in order."""
    directory = Path(directory)
    return [
        write_field(directory / f"{stem}_{index:05d}.obsf", f, {"frame": index})
        for index, f in enumerate(fields)
    ]
