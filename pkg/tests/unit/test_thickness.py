"""
Unit tests for thickness analysis and mask families.
"""

import logging

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.base import GridMismatchError, InvalidParamsError
from src.spectral_sim import Field, GridSpec
from src.thickness import (
    THICKNESS_COLUMNS,
    Mask,
    full_mask,
    gen_mask,
    holed,
    load_mask,
    periodic_stripes,
    random_mask,
    save_mask,
    snap_window,
    thickness_rho,
    thickness_rho_bruteforce,
    torus_distance,
    window_counts,
)


class TestThicknessRho:
    """Tests for thickness_rho."""

    def test_stripes_half_density(self, stripes_1d):
        """Test that stripes of duty 1/2 are (1/2, period)-thick."""
        report = thickness_rho(stripes_1d, 1.0)
        assert report.rho == 0.5
        assert report.window_cells == (4,)
        assert report.min_count == 2
        assert report.is_thick
        assert not report.snapped

    def test_short_window_sees_a_gap(self, stripes_1d):
        """Test that a window shorter than the gap can miss the stripes entirely."""
        report = thickness_rho(stripes_1d, 0.5)
        assert report.rho == 0.0
        assert not report.is_thick
        assert not stripes_1d.bits[report.argmin[0]]

    def test_full_mask(self, grid_2d):
        """Test that the full mask has rho = 1 for any window."""
        assert thickness_rho(full_mask(grid_2d), (1.0, 2.0)).rho == 1.0

    def test_hole_larger_than_window(self, grid_1d):
        """Test that a hole wider than the window gives rho = 0."""
        mask = holed(grid_1d, 2.0)
        assert thickness_rho(mask, 1.0).rho == 0.0
        assert thickness_rho(mask, 16.0).rho == pytest.approx(1 - 17 / 64)

    def test_wraparound(self):
        """Test that windows wrap across the periodic boundary."""
        bits = np.zeros(8, dtype=bool)
        bits[7] = True
        counts = window_counts(bits, (2,))
        np.testing.assert_array_equal(counts, [0, 0, 0, 0, 0, 0, 1, 1])
        bits = np.zeros(8, dtype=bool)
        bits[0] = True
        np.testing.assert_array_equal(window_counts(bits, (3,)), [1, 0, 0, 0, 0, 0, 1, 1])

    @pytest.mark.parametrize("window", [(1.0, 1.0), (0.75, 2.0), (3.0, 0.25), (8.0, 8.0)])
    def test_prefix_sums_match_bruteforce_2d(self, grid_2d, window):
        """Test the prefix-sum minimum against direct counting on random masks."""
        for seed in range(3):
            mask = random_mask(grid_2d, 0.6, seed=seed)
            fast = thickness_rho(mask, window)
            slow = thickness_rho_bruteforce(mask, window)
            assert fast.min_count == slow.min_count
            assert fast.rho == slow.rho
            assert fast.argmin == slow.argmin

    def test_prefix_sums_match_bruteforce_3d(self):
        """Test the same agreement in three dimensions."""
        grid = GridSpec(3, 8, 4.0)
        mask = random_mask(grid, 0.5, seed=9)
        for window in ((1.0, 1.0, 1.0), (1.5, 0.5, 2.0)):
            assert thickness_rho(mask, window).rho == thickness_rho_bruteforce(mask, window).rho

    def test_csv_row(self, stripes_1d):
        """Test the CSV row layout."""
        row = thickness_rho(stripes_1d, 1.0).csv_row()
        assert len(row) == len(THICKNESS_COLUMNS)
        assert row[2] == "0.5"
        assert row[-1] == "1"


class TestSnapWindow:
    """Tests for snap_window."""

    def test_exact_window(self, grid_1d):
        """Test that a whole number of cells is not snapped."""
        assert snap_window(grid_1d, 1.0) == ((4,), False)

    def test_snapped_window_warns(self, grid_1d, caplog):
        """Test that a fractional window is rounded and logged."""
        with caplog.at_level(logging.WARNING, logger="src.thickness"):
            cells, snapped = snap_window(grid_1d, 0.3)
        assert cells == (1,)
        assert snapped
        assert "snapped" in caplog.text

    @pytest.mark.parametrize("L", [0.0, -1.0, 32.0])
    def test_invalid_window(self, grid_1d, L):
        """Test that nonpositive or oversized windows are rejected."""
        with pytest.raises(InvalidParamsError):
            snap_window(grid_1d, L)

    def test_wrong_arity(self, grid_2d):
        """Test that a window needs one length per axis."""
        with pytest.raises(InvalidParamsError):
            snap_window(grid_2d, (1.0, 1.0, 1.0))


class TestMaskFamilies:
    """Tests for mask constructors."""

    def test_stripes_layout(self, grid_1d):
        """Test that each period starts with its observed cells."""
        mask = periodic_stripes(grid_1d, duty=0.25, period=2.0)
        assert list(mask.bits[:8]) == [True, True, False, False, False, False, False, False]
        assert mask.density == 0.25

    def test_stripes_along_second_axis(self, grid_2d):
        """Test that axis = 1 varies along the second index only."""
        mask = periodic_stripes(grid_2d, duty=0.5, period=1.0, axis=1)
        assert np.all(mask.bits == mask.bits[0:1, :])
        assert not np.all(mask.bits == mask.bits[:, 0:1])

    @pytest.mark.parametrize(
        "duty, period, axis", [(0.0, 1.0, 0), (1.5, 1.0, 0), (0.5, 0.3, 0), (0.5, 1.0, 1)]
    )
    def test_stripes_invalid(self, grid_1d, duty, period, axis):
        """Test that bad duty, off-grid period or axis is rejected."""
        with pytest.raises(InvalidParamsError):
            periodic_stripes(grid_1d, duty=duty, period=period, axis=axis)

    def test_random_mask_is_seeded(self, grid_2d):
        """Test that the same seed gives the same mask."""
        assert random_mask(grid_2d, 0.3, seed=1) == random_mask(grid_2d, 0.3, seed=1)
        assert random_mask(grid_2d, 0.3, seed=1) != random_mask(grid_2d, 0.3, seed=2)

    def test_holed_clears_ball(self, grid_2d):
        """Test that the hole removes exactly the cells within the radius."""
        mask = holed(grid_2d, 1.0, center=(0.5, 0.5))
        distance = torus_distance(grid_2d, (0.5, 0.5))
        np.testing.assert_array_equal(mask.bits, distance > 1.0)

    def test_torus_distance_wraps(self, grid_1d):
        """Test that distance uses the minimum image."""
        distance = torus_distance(grid_1d, (7.75,))
        assert distance[0] == pytest.approx(0.25)

    def test_holed_on_base(self, stripes_1d, grid_1d):
        """Test that a hole is carved out of a base mask."""
        mask = holed(grid_1d, 1.0, base=stripes_1d)
        assert mask.count < stripes_1d.count
        assert not np.any(mask.bits & ~stripes_1d.bits)

    def test_hole_too_large(self, grid_1d):
        """Test that radius > box/2 is rejected."""
        with pytest.raises(InvalidParamsError):
            holed(grid_1d, 9.0)

    def test_gen_mask_dispatch(self, grid_1d, stripes_1d):
        """Test family dispatch by name."""
        assert gen_mask(grid_1d, "full").count == 64
        assert gen_mask(grid_1d, "periodic_stripes", duty=0.5, period=1.0) == stripes_1d
        assert gen_mask(grid_1d, "random", seed=3, density=0.5) == random_mask(grid_1d, 0.5, seed=3)
        assert gen_mask(grid_1d, "holed", radius=0.0) == full_mask(grid_1d)
        with pytest.raises(InvalidParamsError):
            gen_mask(grid_1d, "checkerboard")


class TestMask:
    """Tests for Mask operations."""

    def test_shape_checked(self, grid_1d):
        """Test that bits must match the grid shape."""
        with pytest.raises(GridMismatchError):
            Mask(grid_1d, np.ones(10, dtype=bool))

    def test_measure_and_complement(self, stripes_1d):
        """Test the measure of a mask and its complement."""
        assert stripes_1d.measure == pytest.approx(8.0)
        assert stripes_1d.complement().count == 32
        assert stripes_1d.union(stripes_1d.complement()).count == 64

    def test_restrict(self, stripes_1d, grid_1d):
        """Test that restriction zeroes unobserved cells."""
        f = Field(grid_1d, np.ones(grid_1d.shape))
        restricted = stripes_1d.restrict(f)
        assert restricted.norm() ** 2 == pytest.approx(stripes_1d.measure)

    def test_shift(self, stripes_1d):
        """Test that shifting by half a period swaps the stripes."""
        assert stripes_1d.shifted((2,)) == stripes_1d.complement()

    @settings(max_examples=25, deadline=None)
    @given(
        seed=st.integers(0, 2**32 - 1),
        density=st.floats(0.2, 0.9),
        shift=st.tuples(st.integers(-31, 31), st.integers(-31, 31)),
        cells=st.tuples(st.integers(1, 8), st.integers(1, 8)),
    )
    def test_rho_is_shift_invariant(self, seed, density, shift, cells):
        """Test that translating a mask on the torus leaves rho unchanged."""
        grid = GridSpec(2, 32, 8.0)
        mask = random_mask(grid, density, seed=seed)
        L = [n * grid.dx[0] for n in cells]
        before = thickness_rho(mask, L)
        after = thickness_rho(mask.shifted(shift), L)
        assert after.rho == before.rho
        assert after.min_count == before.min_count


class TestMaskIO:
    """Tests for save_mask and load_mask."""

    def test_bitmap_2d(self, temp_dir, grid_2d):
        """Test that a 2D mask survives a PBM round trip."""
        mask = random_mask(grid_2d, 0.5, seed=4)
        path = save_mask(mask, temp_dir / "mask.pbm")
        assert path.read_bytes().startswith(b"P4")
        assert load_mask(path, grid_2d) == mask

    def test_bitmap_1d(self, temp_dir, stripes_1d, grid_1d):
        """Test that a 1D mask is stored as a single-row bitmap."""
        path = save_mask(stripes_1d, temp_dir / "stripes.pbm")
        assert load_mask(path, grid_1d) == stripes_1d

    def test_volume_3d(self, temp_dir):
        """Test that 3D masks are stored as OBSF fields."""
        grid = GridSpec(3, 8, 2.0)
        mask = random_mask(grid, 0.5, seed=5)
        path = save_mask(mask, temp_dir / "mask.obsf")
        assert load_mask(path) == mask

    def test_bitmap_needs_grid(self, temp_dir, stripes_1d):
        """Test that loading a bitmap without its grid is rejected."""
        path = save_mask(stripes_1d, temp_dir / "stripes.pbm")
        with pytest.raises(InvalidParamsError):
            load_mask(path)

    def test_report_rows(self, stripes_1d):
        """Test that report rows line up with the thickness CSV columns."""
        reports = [thickness_rho(stripes_1d, L) for L in (0.5, 1.0, 2.0)]
        rows = [report.csv_row() for report in reports]
        assert all(len(row) == len(THICKNESS_COLUMNS) for row in rows)
        assert [row[THICKNESS_COLUMNS.index("rho")] for row in rows] == ["0", "0.5", "0.5"]


class TestThicknessOracle:
    """Prefix-sum thickness against direct counting at full scale."""

    @pytest.mark.slow
    def test_random_masks_64(self):
        """Test exact agreement on 100 random 64 x 64 masks."""
        grid = GridSpec(2, 64, 16.0)
        rng = np.random.default_rng(0)
        for seed in range(100):
            mask = random_mask(grid, float(rng.uniform(0.2, 0.9)), seed=seed)
            window = tuple(float(v) for v in rng.integers(1, 9, size=2) * 0.25)
            assert thickness_rho(mask, window).min_count == thickness_rho_bruteforce(mask, window).min_count

    @pytest.mark.slow
    def test_structured_masks_64(self):
        """Test exact agreement on stripes and holed masks."""
        grid = GridSpec(2, 64, 16.0)
        masks = [
            periodic_stripes(grid, duty, period, axis)
            for duty in (0.25, 0.5)
            for period in (1.0, 2.0, 4.0)
            for axis in (0, 1)
        ]
        masks += [holed(grid, radius) for radius in (0.5, 1.0, 2.0, 3.0)]
        masks += [holed(grid, 1.5, base=masks[i]) for i in range(4)]
        assert len(masks) == 20
        for mask in masks:
            for window in ((1.0, 1.0), (2.0, 0.5)):
                fast, slow = thickness_rho(mask, window), thickness_rho_bruteforce(mask, window)
                assert fast.rho == slow.rho
