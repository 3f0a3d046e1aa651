"""
Unit tests for the empirical verification harness.
"""

import dataclasses
import math

import numpy as np
import pytest

from src.base import HypothesisViolationError, InvalidParamsError
from src.cert_engine import elliptic_cobs
from src.spectral_sim import Field, GridSpec, laplacian, power_sum, sample_field
from src.thickness import full_mask, holed
from src.verify import (
    CounterexampleRow,
    CounterexampleTable,
    FitResult,
    GridGrowth,
    assemble_bound,
    check_dissipation,
    counterexample_sweep,
    envelope_fit,
    estimate_observability_ratio,
    fit_uncertainty,
    is_monotone_nondecreasing,
    observability_ratio,
)


@pytest.fixture
def lattice_2d():
    """8 x 8 frequency lattice."""
    return GridSpec(2, 8, 8.0)


@pytest.fixture
def stripes_bound():
    """Certificate for the heat semigroup observed on the 1D stripes."""
    return elliptic_cobs(0.5, [1.0], 1.0, 1.0, 2, 2, 1.0, 1.0, 0.5, 2)


class TestEnvelopeFit:
    """Tests for envelope_fit."""

    def test_line_dominates_points(self):
        """Test that the fitted line lies on or above every point."""
        x = [1.0, 2.0, 3.0, 4.0]
        y = [1.0, 3.0, 2.0, 3.5]
        a, b = envelope_fit(x, y)
        assert a >= 0 and b >= 0
        assert all(a + b * xi >= yi for xi, yi in zip(x, y))

    def test_exact_line_recovered(self):
        """Test that points on a line with nonnegative coefficients give that line back."""
        x = np.array([0.5, 1.0, 2.0])
        a, b = envelope_fit(x, 0.5 + 2.0 * x)
        assert a == pytest.approx(0.5, abs=1e-9)
        assert b == pytest.approx(2.0, abs=1e-9)

    def test_flat_zero(self):
        """Test that all-zero data gives a = b = 0."""
        assert envelope_fit([1.0, 2.0], [0.0, 0.0]) == (0.0, 0.0)


class TestFitUncertainty:
    """Tests for fit_uncertainty."""

    def test_full_mask_has_unit_constants(self, grid_1d):
        """Test that observing everything gives d0 = 1 and d1 = 0."""
        fit = fit_uncertainty(grid_1d, full_mask(grid_1d), [0.5, 1.0, 2.0], samples=4)
        assert fit.worst_log_ratios == (0.0, 0.0, 0.0)
        assert fit.d0 == 1.0
        assert fit.d1 == 0.0

    def test_stripes_fit_dominates(self, grid_1d, stripes_1d):
        """Test that the envelope dominates the worst ratio at every lambda."""
        fit = fit_uncertainty(grid_1d, stripes_1d, [0.5, 1.0, 2.0], samples=8, seed=3)
        assert fit.dominates()
        assert all(y >= 0 for y in fit.worst_log_ratios)
        assert fit.residual_max >= 0
        assert len(fit.rows()) == 3

    def test_threads_do_not_change_result(self, grid_1d, stripes_1d):
        """Test identical fits for one and four threads."""
        one = fit_uncertainty(grid_1d, stripes_1d, [0.5, 1.0, 2.0], samples=6, seed=5, threads=1)
        four = fit_uncertainty(grid_1d, stripes_1d, [0.5, 1.0, 2.0], samples=6, seed=5, threads=4)
        assert one == four

    def test_lambda_above_quarter_nyquist(self, grid_1d, stripes_1d):
        """Test that lambdas too close to the grid resolution are rejected."""
        with pytest.raises(InvalidParamsError):
            fit_uncertainty(grid_1d, stripes_1d, [1.0, 4.0])

    def test_empty_mask(self, grid_1d):
        """Test that an empty mask is rejected."""
        with pytest.raises(InvalidParamsError):
            fit_uncertainty(grid_1d, full_mask(grid_1d).complement(), [1.0])

    def test_mask_on_other_grid(self, grid_1d, grid_2d):
        """Test that the mask must live on the fit grid."""
        with pytest.raises(InvalidParamsError):
            fit_uncertainty(grid_1d, full_mask(grid_2d), [1.0])


class TestDissipation:
    """Tests for check_dissipation."""

    def test_heat_on_lattice(self, lattice_2d):
        """Test the L2 dissipation estimate for |xi|^2 on every lattice point."""
        report = check_dissipation(laplacian(2), [1.0, 2.0, 4.0], [0.1, 0.5, 2.0], lattice_2d)
        assert report.ok
        assert len(report.entries) == 9
        assert all(len(e.xi_at_sup) == 2 for e in report.entries)
        report.raise_for_violations()

    def test_fourth_order_on_lattice(self, lattice_2d):
        """Test the estimate for xi_1^4 + xi_2^4 with its sampled c = 1/2."""
        report = check_dissipation(power_sum(2, 4), [1.0, 2.0], [0.05, 0.5], lattice_2d)
        assert report.c == pytest.approx(0.5)
        assert report.ok

    def test_overstated_c_is_caught(self, lattice_2d):
        """Test that an ellipticity constant larger than the truth shows violations."""
        report = check_dissipation(laplacian(2), [1.0], [1.0], lattice_2d, c=10.0)
        assert not report.ok
        assert report.to_dict()["violation_count"] == 1
        with pytest.raises(HypothesisViolationError):
            report.raise_for_violations()

    def test_rejects_nonpositive_inputs(self, lattice_2d):
        """Test that lambda and t must be positive."""
        with pytest.raises(InvalidParamsError):
            check_dissipation(laplacian(2), [0.0], [1.0], lattice_2d)
        with pytest.raises(InvalidParamsError):
            check_dissipation(laplacian(2), [1.0], [0.0], lattice_2d)


class TestObservabilityRatio:
    """Tests for the empirical observability ratio."""

    def test_full_mask_bounded_by_contraction(self, grid_1d, heat_1d):
        """Test that full observation of a contraction gives ratio <= T^(-1/2) for r = 2."""
        T = 0.5
        report = estimate_observability_ratio(
            heat_1d, full_mask(grid_1d), T, r=2, samples=8, n_t=32
        )
        assert report.c_emp <= (1.0 / math.sqrt(T)) * (1 + 1e-12)
        assert report.ln_c_obs is None
        assert report.acceptable

    def test_r_infinity_full_mask(self, grid_1d, heat_1d):
        """Test that r = inf with full observation gives ratio <= 1."""
        x0 = sample_field(grid_1d, "white", seed=1)
        ratio = observability_ratio(heat_1d, full_mask(grid_1d), x0, 0.5, "inf", 2, 16)
        assert ratio <= 1.0 + 1e-12

    def test_certificate_dominates_stripes(self, heat_1d, stripes_1d, stripes_bound):
        """Test that the certified constant dominates the worst sampled ratio."""
        report = estimate_observability_ratio(
            heat_1d, stripes_1d, 0.5, r=2, samples=16, n_t=64, seed=7, bound=stripes_bound
        )
        assert report.ln_margin >= 0
        assert report.ln_c_obs == stripes_bound.ln_cobs
        assert report.acceptable
        report.raise_for_margin()

    def test_weak_bound_is_flagged(self, heat_1d, stripes_1d, stripes_bound):
        """Test that a bound below the empirical ratio fails the margin check."""
        weak = dataclasses.replace(stripes_bound, ln_cobs_series=-10.0, cobs_series=math.exp(-10.0))
        report = estimate_observability_ratio(
            heat_1d, stripes_1d, 0.5, samples=4, n_t=16, bound=weak
        )
        assert report.margin < 1
        assert not report.acceptable
        with pytest.raises(HypothesisViolationError):
            report.raise_for_margin()

    def test_seeded_and_thread_independent(self, heat_1d, stripes_1d):
        """Test identical ratios for the same seed across thread counts."""
        one = estimate_observability_ratio(heat_1d, stripes_1d, 0.5, samples=8, n_t=16, seed=2)
        four = estimate_observability_ratio(
            heat_1d, stripes_1d, 0.5, samples=8, n_t=16, seed=2, threads=4
        )
        other = estimate_observability_ratio(heat_1d, stripes_1d, 0.5, samples=8, n_t=16, seed=3)
        assert one.ratios == four.ratios
        assert one.ratios != other.ratios

    def test_given_initial_states(self, grid_1d, heat_1d, stripes_1d):
        """Test that supplied initial states are used in order."""
        states = [sample_field(grid_1d, "gaussian_bump", s=s) for s in (0.5, 1.0)]
        report = estimate_observability_ratio(
            heat_1d, stripes_1d, 0.5, initial_states=states, n_t=16
        )
        assert len(report.ratios) == 2
        assert report.ratios[0] == observability_ratio(heat_1d, stripes_1d, states[0], 0.5, 2, 2, 16)

    def test_zero_state_rejected(self, grid_1d, heat_1d, stripes_1d):
        """Test that x0 = 0 is rejected."""
        with pytest.raises(InvalidParamsError):
            observability_ratio(heat_1d, stripes_1d, Field.zeros(grid_1d), 0.5, 2, 2, 8)

    def test_empty_mask_rejected(self, grid_1d, heat_1d):
        """Test that an empty mask is rejected."""
        with pytest.raises(InvalidParamsError):
            estimate_observability_ratio(heat_1d, full_mask(grid_1d).complement(), 0.5)


class TestAssembleBound:
    """Tests for assemble_bound."""

    def test_from_full_mask_fit(self, grid_1d, heat_1d):
        """Test a certificate from d0 = 1, d1 = 0 with p = 2 constants."""
        fit = fit_uncertainty(grid_1d, full_mask(grid_1d), [0.5, 1.0], samples=2)
        bundle = assemble_bound(fit, heat_1d, 0.5, 2)
        assert bundle.C2 == 0.0
        assert bundle.params.d3 == pytest.approx(0.25)
        assert bundle.inputs_provenance["source"] == "fitted"
        assert bundle.ln_cobs_series <= bundle.ln_cobs_closed

    def test_fitted_constants_flow_through(self, heat_1d):
        """Test that fitted ln d0 and d1 reach the abstract parameters."""
        fit = FitResult(
            lambdas=(1.0,), worst_log_ratios=(0.5,), ln_d0=0.2, d1=0.4, residual_max=0.1,
            samples=1, p=2.0, seed=0,
        )
        bundle = assemble_bound(fit, heat_1d, 1.0, 1)
        assert bundle.params.ln_d0 == 0.2
        assert bundle.params.d1 == 0.4
        assert bundle.inputs_provenance["fit_lambdas"] == [1.0]

    def test_lp_needs_semigroup_bounds(self, heat_1d):
        """Test that p != 2 without (M, C_d) is rejected."""
        fit = FitResult((1.0,), (0.5,), 0.2, 0.4, 0.1, 1, 4.0, 0)
        with pytest.raises(InvalidParamsError):
            assemble_bound(fit, heat_1d, 1.0, 1, p=4)


class TestCounterexample:
    """Tests for the hole-growing sweep."""

    def test_grid_growth(self):
        """Test box = factor * n and N rounded up to keep dx."""
        grid = GridGrowth(box_factor=8.0, dx=0.125).grid_for(4.0)
        assert grid.box == (32.0,)
        assert grid.N == 256
        assert GridGrowth().grid_for(0.0).box == (8.0,)

    def test_small_sweep(self, heat_1d):
        """Test the numerator identity, the split bound and growth on small radii."""
        table = counterexample_sweep(
            heat_1d, [0.0, 1.0, 2.0], T=0.1, growth=GridGrowth(8.0, 0.25), n_t=16
        )
        assert len(table.rows) == 3
        for row in table.rows:
            assert row.numerator_rel_error < 1e-8
            assert row.split_bound >= row.denominator * (1 - 1e-12)
        assert table.rows[0].ratio <= (1.0 / math.sqrt(0.1)) * (1 + 1e-12)
        assert is_monotone_nondecreasing(table.ratios)
        assert table.to_dict()["r"] == "2.0"

    def test_negative_radius(self, heat_1d):
        """Test that a negative radius is rejected."""
        with pytest.raises(InvalidParamsError):
            counterexample_sweep(heat_1d, [-1.0], T=0.1)

    @pytest.mark.slow
    def test_ratio_blows_up(self, heat_1d):
        """Test that the ratio grows at least tenfold from n = 2 to n = 16."""
        table = counterexample_sweep(heat_1d, [2.0, 4.0, 8.0, 16.0], T=0.1, n_t=64)
        assert all(row.numerator_rel_error < 1e-8 for row in table.rows)
        assert is_monotone_nondecreasing(table.ratios)
        assert table.rows[-1].ratio >= 10 * table.rows[0].ratio

    def test_monotone_check(self):
        """Test the monotonicity helper and its slack."""
        assert is_monotone_nondecreasing([1.0, 2.0, 1.995])
        assert not is_monotone_nondecreasing([1.0, 0.5])

    @staticmethod
    def _table(*rows):
        return CounterexampleTable(
            T=0.1, r=2.0, p=2.0, growth=GridGrowth(),
            rows=tuple(
                CounterexampleRow(n=n, box=8.0, N=64, numerator=num, kernel_norm=1.0,
                                  denominator=den, ratio=num / den, split_bound=split)
                for n, num, den, split in rows
            ),
        )

    def test_checks_pass_on_growing_ratios(self):
        """Test that a well-behaved sweep reports no failed checks."""
        table = self._table((2.0, 1.0, 0.5, 1.0), (4.0, 1.0, 0.1, 1.0))
        assert table.monotone()
        assert table.split_bound_holds
        assert table.failed_checks() == []

    def test_monotone_ignores_small_radii_and_order(self):
        """Test that monotonicity is judged in n over radii of at least 2."""
        table = self._table((4.0, 1.0, 0.1, 1.0), (1.0, 1.0, 0.01, 1.0), (2.0, 1.0, 0.5, 1.0))
        assert table.monotone()
        assert not is_monotone_nondecreasing(table.ratios)

    def test_failed_checks(self):
        """Test that each broken invariant is reported."""
        table = self._table((2.0, 1.0, 0.1, 1.0), (4.0, 1.0 + 1e-6, 0.5, 0.4))
        failed = table.failed_checks()
        assert len(failed) == 3
        assert table.max_numerator_rel_error == pytest.approx(1e-6)
        assert not table.split_bound_holds
        assert table.failed_checks(slack=1.0)[0].startswith("numerator")


class TestObservationOnHoles:
    """Tests for ratios on masks with holes."""

    def test_hole_increases_ratio(self, grid_1d, heat_1d):
        """Test that removing observed cells cannot decrease the ratio."""
        x0 = sample_field(grid_1d, "gaussian_bump", s=0.25)
        whole = observability_ratio(heat_1d, full_mask(grid_1d), x0, 0.2, 2, 2, 16)
        holey = observability_ratio(heat_1d, holed(grid_1d, 2.0), x0, 0.2, 2, 2, 16)
        assert holey > whole
