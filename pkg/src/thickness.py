"""
Thickness of observation masks on the periodic grid.

A set omega is (rho, L)-thick when every axis-aligned box with side lengths L
holds at least a rho fraction of its volume in omega. On the torus every cell
anchor is a valid box position, so rho is the minimum over all N^d anchors of
the window's mask density. Windows are whole numbers of cells.
"""

import itertools
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from PIL import Image

from .base import (
    ArtifactIOError,
    GridMismatchError,
    InvalidParamsError,
    JsonRecord,
    format_float,
)
from .spectral_sim import Field, GridSpec, SeedLike, make_rng, read_field, write_field

logger = logging.getLogger(__name__)

# Window lengths within this many cells of an integer count are not reported as snapped.
SNAP_TOLERANCE = 1e-9

MASK_FAMILIES = ("full", "periodic_stripes", "random", "holed")


@dataclass(frozen=True, eq=False)
class Mask:
    """Boolean observation set on a grid."""

    grid: GridSpec
    bits: np.ndarray

    def __post_init__(self) -> None:
        bits = np.array(self.bits, dtype=bool)
        if bits.shape != self.grid.shape:
            raise GridMismatchError(f"mask shape {bits.shape} != grid shape {self.grid.shape}")
        bits.flags.writeable = False
        object.__setattr__(self, "bits", bits)

    @property
    def count(self) -> int:
        return int(np.count_nonzero(self.bits))

    @property
    def measure(self) -> float:
        return self.count * self.grid.cell_volume

    @property
    def density(self) -> float:
        return self.count / self.bits.size

    def is_empty(self) -> bool:
        return self.count == 0

    def shifted(self, cells: Sequence[int]) -> "Mask":
        return Mask(self.grid, np.roll(self.bits, tuple(cells), axis=tuple(range(self.grid.d))))

    def union(self, other: "Mask") -> "Mask":
        if other.grid != self.grid:
            raise GridMismatchError("masks live on different grids")
        return Mask(self.grid, self.bits | other.bits)

    def complement(self) -> "Mask":
        return Mask(self.grid, ~self.bits)

    def indicator(self) -> np.ndarray:
        return self.bits.astype(float)

    def restrict(self, f: Field) -> Field:
        """1_omega f."""
        if f.grid != self.grid:
            raise GridMismatchError("field and mask live on different grids")
        return Field(self.grid, np.where(self.bits, f.values, 0.0))

    def __eq__(self, other: object) -> bool:
        return (
            isinstance(other, Mask)
            and other.grid == self.grid
            and bool(np.array_equal(other.bits, self.bits))
        )

    __hash__ = None  # type: ignore[assignment]


@dataclass(frozen=True)
class ThicknessReport(JsonRecord):
    L: Tuple[float, ...]
    window_cells: Tuple[int, ...]
    rho: float
    argmin: Tuple[int, ...]
    min_count: int
    window_size: int
    snapped: bool = False

    @property
    def is_thick(self) -> bool:
        return self.rho > 0

    def to_dict(self) -> Dict[str, Any]:
        data = super().to_dict()
        data["is_thick"] = self.is_thick
        return data

    def csv_row(self) -> List[str]:
        return [
            ";".join(format_float(v) for v in self.L),
            ";".join(str(v) for v in self.window_cells),
            format_float(self.rho),
            str(self.min_count),
            str(self.window_size),
            ";".join(str(v) for v in self.argmin),
            "1" if self.is_thick else "0",
        ]


THICKNESS_COLUMNS = ["L", "window_cells", "rho", "min_count", "window_size", "argmin", "is_thick"]


def snap_window(grid: GridSpec, L: Union[float, Sequence[float]]) -> Tuple[Tuple[int, ...], bool]:
    """Window side lengths in whole cells, and whether any length had to move."""
    if isinstance(L, (int, float, np.floating, np.integer)):
        L = (float(L),) * grid.d
    L = tuple(float(v) for v in L)
    if len(L) != grid.d:
        raise InvalidParamsError(f"window needs {grid.d} lengths, got {L}")
    cells = []
    snapped = False
    for length, h, box in zip(L, grid.dx, grid.box):
        if not length > 0:
            raise InvalidParamsError(f"window lengths must be > 0, got {L}")
        if length > box * (1.0 + SNAP_TOLERANCE):
            raise InvalidParamsError(f"window length {length} exceeds box side {box}")
        exact = length / h
        count = max(1, int(round(exact)))
        if abs(exact - count) > SNAP_TOLERANCE * max(1.0, exact):
            snapped = True
        cells.append(min(count, grid.N))
    if snapped:
        logger.warning(
            "window %s is not a whole number of cells (dx=%s); snapped to %s cells",
            L, grid.dx, cells,
        )
    return tuple(cells), snapped


def integral_image(values: np.ndarray) -> np.ndarray:
    """Summed volume table with a leading zero row along every axis."""
    table = values
    for axis in range(values.ndim):
        table = table.cumsum(axis=axis)
    return np.pad(table, [(1, 0)] * values.ndim, mode="constant")


def window_counts(bits: np.ndarray, window: Sequence[int]) -> np.ndarray:
    """
    Number of set cells in the window anchored at every cell, with periodic
    wraparound. Entry i counts cells i .. i + w - 1 (mod N) on each axis.
    """
    n = bits.shape
    padded = np.pad(bits.astype(np.int64), [(0, w - 1) for w in window], mode="wrap")
    table = integral_image(padded)
    counts = np.zeros(n, dtype=np.int64)
    for corner in itertools.product((0, 1), repeat=bits.ndim):
        index = tuple(
            slice(w, w + size) if upper else slice(0, size)
            for upper, w, size in zip(corner, window, n)
        )
        sign = 1 if (bits.ndim - sum(corner)) % 2 == 0 else -1
        counts += sign * table[index]
    return counts


def _report(
    L: Tuple[float, ...], window: Tuple[int, ...], min_count: int, argmin: Tuple[int, ...],
    snapped: bool,
) -> ThicknessReport:
    size = int(np.prod(window))
    return ThicknessReport(
        L=L,
        window_cells=window,
        rho=min_count / size,
        argmin=argmin,
        min_count=int(min_count),
        window_size=size,
        snapped=snapped,
    )


def _lengths(grid: GridSpec, window: Sequence[int]) -> Tuple[float, ...]:
    return tuple(w * h for w, h in zip(window, grid.dx))


def thickness_rho(mask: Mask, L: Union[float, Sequence[float]]) -> ThicknessReport:
    """
    Exact minimum window density over all periodic anchors via prefix sums.

    ``L`` is snapped to whole cells (with a warning when it moves). The
    reported argmin is the first minimizing anchor in C order.
    """
    window, snapped = snap_window(mask.grid, L)
    counts = window_counts(mask.bits, window)
    flat = int(np.argmin(counts))
    argmin = tuple(int(i) for i in np.unravel_index(flat, counts.shape))
    return _report(_lengths(mask.grid, window), window, int(counts.flat[flat]), argmin, snapped)


def thickness_rho_bruteforce(mask: Mask, L: Union[float, Sequence[float]]) -> ThicknessReport:
    """Direct count over every anchor and every cell of its window."""
    window, snapped = snap_window(mask.grid, L)
    n = mask.grid.N
    best: Optional[int] = None
    best_anchor: Tuple[int, ...] = (0,) * mask.grid.d
    for anchor in itertools.product(range(n), repeat=mask.grid.d):
        index = np.ix_(*[(a + np.arange(w)) % n for a, w in zip(anchor, window)])
        count = int(np.count_nonzero(mask.bits[index]))
        if best is None or count < best:
            best, best_anchor = count, anchor
    assert best is not None
    return _report(_lengths(mask.grid, window), window, best, tuple(best_anchor), snapped)


# =============================================================================
# Mask families
# =============================================================================


def full_mask(grid: GridSpec) -> Mask:
    return Mask(grid, np.ones(grid.shape, dtype=bool))


def periodic_stripes(grid: GridSpec, duty: float, period: float, axis: int = 0) -> Mask:
    """Slabs along ``axis``: the first ``duty`` fraction of every period is observed."""
    if not 0 < duty <= 1:
        raise InvalidParamsError(f"duty must lie in (0, 1], got {duty}")
    if not 0 <= axis < grid.d:
        raise InvalidParamsError(f"axis {axis} out of range for d={grid.d}")
    h = grid.dx[axis]
    period_cells = int(round(period / h))
    if period_cells < 1 or abs(period / h - period_cells) > SNAP_TOLERANCE * max(1, period_cells):
        raise InvalidParamsError(f"stripe period {period} must be a whole number of cells (dx={h})")
    on_cells = int(round(duty * period_cells))
    if on_cells < 1:
        raise InvalidParamsError(f"duty {duty} leaves no observed cell in a period")
    line = (np.arange(grid.N) % period_cells) < on_cells
    shape = [1] * grid.d
    shape[axis] = grid.N
    return Mask(grid, np.broadcast_to(line.reshape(shape), grid.shape))


def random_mask(grid: GridSpec, density: float, seed: SeedLike = None) -> Mask:
    if not 0 <= density <= 1:
        raise InvalidParamsError(f"density must lie in [0, 1], got {density}")
    return Mask(grid, make_rng(seed).random(grid.shape) < density)


def torus_distance(grid: GridSpec, center: Sequence[float]) -> np.ndarray:
    """Minimum-image Euclidean distance from every cell to ``center``."""
    dist2 = np.zeros(grid.shape)
    for x, c, box in zip(grid.mesh(), center, grid.box):
        delta = np.abs(x - c) % box
        delta = np.minimum(delta, box - delta)
        dist2 = dist2 + delta ** 2
    return np.sqrt(dist2)


def holed(
    grid: GridSpec,
    radius: float,
    center: Optional[Sequence[float]] = None,
    base: Optional[Mask] = None,
) -> Mask:
    """``base`` (default: full) with every cell within ``radius`` of ``center`` cleared."""
    if radius < 0:
        raise InvalidParamsError(f"hole radius must be >= 0, got {radius}")
    if any(radius > b / 2.0 for b in grid.box):
        raise InvalidParamsError(f"hole radius {radius} exceeds half the box {grid.box}")
    center = tuple(center) if center is not None else (0.0,) * grid.d
    base_bits = base.bits if base is not None else np.ones(grid.shape, dtype=bool)
    if base is not None and base.grid != grid:
        raise GridMismatchError("base mask lives on a different grid")
    if radius == 0:
        return Mask(grid, base_bits)
    return Mask(grid, base_bits & (torus_distance(grid, center) > radius))


def gen_mask(grid: GridSpec, family: str, seed: SeedLike = None, **params: Any) -> Mask:
    """
    Build a mask from a family name.

    full; periodic_stripes(duty, period[, axis]); random(density) with ``seed``;
    holed(radius[, center, base]).
    """
    if family == "full":
        return full_mask(grid)
    if family == "periodic_stripes":
        return periodic_stripes(grid, params["duty"], params["period"], params.get("axis", 0))
    if family == "random":
        return random_mask(grid, params["density"], seed)
    if family == "holed":
        return holed(grid, params["radius"], params.get("center"), params.get("base"))
    raise InvalidParamsError(f"unknown mask family {family!r}; expected one of {MASK_FAMILIES}")


# =============================================================================
# I/O
# =============================================================================


def save_mask(mask: Mask, path: Union[str, Path]) -> Path:
    """PBM bitmap for d <= 2 (observed cells white), OBSF with 0/1 samples for d = 3."""
    path = Path(path)
    if mask.grid.d == 3:
        return write_field(path, Field(mask.grid, mask.indicator()), {"kind": "mask"})
    pixels = mask.bits.reshape(1, -1) if mask.grid.d == 1 else mask.bits
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        image = Image.fromarray(np.where(pixels, 255, 0).astype(np.uint8)).convert("1")
        image.save(path, format="PPM")
    except OSError as exc:
        raise ArtifactIOError(f"cannot write mask {path}: {exc}") from exc
    return path


def load_mask(path: Union[str, Path], grid: Optional[GridSpec] = None) -> Mask:
    """Read a mask written by ``save_mask``. PBM files need the grid."""
    path = Path(path)
    if path.suffix == ".obsf":
        field = read_field(path)
        if grid is not None and field.grid != grid:
            raise GridMismatchError(f"{path} holds grid {field.grid}, expected {grid}")
        return Mask(field.grid, field.values.real > 0.5)
    if grid is None:
        raise InvalidParamsError("loading a bitmap mask needs the grid it lives on")
    try:
        with Image.open(path) as image:
            pixels = np.asarray(image.convert("L")) > 127
    except OSError as exc:
        raise ArtifactIOError(f"cannot read mask {path}: {exc}") from exc
    if grid.d == 1:
        pixels = pixels.reshape(-1)
    return Mask(grid, pixels)
