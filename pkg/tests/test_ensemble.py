"""Tests for fensemble.ensemble module."""

import math
from fractions import Fraction

import numpy as np
import pytest

from fensemble.errors import DomainError, IntegrityError, ResourceLimitError
from fensemble.ensemble import (
    Ensemble,
    PrimeContext,
    build_ensemble,
    cardinality_asymptote,
    cardinality_exact,
    cardinality_report,
    e_max_check,
    pi_difference_counts,
    predicted_x3_band,
    step_structure,
    verify_identities,
)
from tests.conftest import brute_force_semiprimes, gap_typical_n


@pytest.fixture(scope="module")
def small(counter):
    return build_ensemble(77, counter)


@pytest.fixture(scope="module")
def near_million(counter):
    return build_ensemble(gap_typical_n(10**6, counter), counter, threads=4)


class TestPrimeContext:
    def test_from_n(self, counter):
        ctx = PrimeContext.from_n(77, counter)
        assert (ctx.j, ctx.x_j, ctx.x_j1) == (4, 7, 11)
        assert (ctx.lower, ctx.upper) == (49, 121)
        assert ctx.gamma == pytest.approx(4 / math.sqrt(77))
        assert ctx.q_max == pytest.approx(math.sqrt(77) / 8)

    def test_perfect_square(self, counter):
        ctx = PrimeContext.from_n(10**8, counter)
        assert ctx.j == 1229
        assert ctx.gamma == pytest.approx(0.1229)

    def test_too_small(self, counter):
        with pytest.raises(DomainError):
            PrimeContext.from_n(8, counter)


class TestSmallEnsemble:
    def test_cardinality(self, small, counter):
        assert small.cardinality == 23
        assert cardinality_exact(small, counter) == 23

    def test_matches_trial_division(self, small):
        assert sorted(small.n_sigma.tolist()) == brute_force_semiprimes(49, 121)

    def test_square_entry(self, small):
        entry = next(e for e in small.entries if e.n_sigma == 49)
        assert (entry.x, entry.y) == (7, 7)
        assert entry.e == 1
        assert entry.p == 0
        assert entry.q == 1

    def test_entry_77(self, small):
        entry = next(e for e in small.entries if e.n_sigma == 77)
        assert (entry.pi_x, entry.pi_y) == (4, 5)
        assert entry.e == Fraction(5, 4)
        assert entry.p == Fraction(1, 8)
        assert entry.q == Fraction(9, 8)

    def test_rank_order(self, small):
        e = small.e
        assert np.all(np.diff(e) >= 0)
        assert small.k.tolist() == list(range(1, 24))
        for a, b in zip(small.entries, small.entries[1:]):
            if a.e == b.e:
                assert a.x > b.x or (a.x == b.x and a.n_sigma < b.n_sigma)

    def test_pi_difference_counts(self, small, counter):
        counts = pi_difference_counts(small.context, counter)
        assert counts == {2: 8, 3: 6, 5: 5, 7: 4}

    def test_step_structure(self, small, counter):
        blocks = step_structure(small, counter)
        assert blocks[2].count == 8
        assert blocks[7].e_min == 1.0
        assert sum(b.count for b in blocks.values()) == 23

    def test_identities(self, small, counter):
        assert verify_identities(small, counter) == 23

    def test_exclude_squares(self, counter):
        ensemble = build_ensemble(77, counter, include_squares=False)
        assert ensemble.cardinality == 22
        assert 49 not in ensemble.n_sigma.tolist()
        assert cardinality_exact(ensemble, counter) == 22
        assert verify_identities(ensemble, counter) == 22

    def test_kappa_ends_at_one(self, small):
        assert small.kappa[-1] == 1.0
        assert small.entries[-1].kappa == 1.0


class TestEnumeration:
    @pytest.mark.parametrize("n", [9, 10, 100, 1000, 5000, 10**4 + 7])
    def test_matches_trial_division(self, n, counter):
        ensemble = build_ensemble(n, counter)
        ctx = ensemble.context
        assert sorted(ensemble.n_sigma.tolist()) == brute_force_semiprimes(ctx.lower, ctx.upper)
        assert np.all(ensemble.x * ensemble.y == ensemble.n_sigma)
        assert np.all(ensemble.x <= ensemble.y)

    def test_threads_do_not_change_result(self, counter):
        one = build_ensemble(10**6 + 3, counter, threads=1)
        many = build_ensemble(10**6 + 3, counter, threads=4)
        for name, column in one.columns().items():
            assert np.array_equal(column, many.columns()[name])

    def test_interval_bound(self, counter):
        with pytest.raises(ResourceLimitError):
            build_ensemble(77, counter, interval_bound=10)

    def test_integrity_error_on_mismatch(self, small, counter):
        broken = Ensemble(
            context=small.context,
            n_sigma=small.n_sigma[1:],
            x=small.x[1:],
            pi_x=small.pi_x[1:],
            pi_y=small.pi_y[1:],
        )
        with pytest.raises(IntegrityError):
            cardinality_exact(broken, counter)

    @pytest.mark.parametrize("n", [10**4 + 7, 10**6 + 3])
    def test_identities(self, n, counter):
        ensemble = build_ensemble(n, counter)
        assert verify_identities(ensemble, counter) == ensemble.cardinality

    @pytest.mark.slow
    def test_identities_near_1e8(self, counter):
        ensemble = build_ensemble(10**8 + 7, counter, threads=4)
        assert verify_identities(ensemble, counter) == ensemble.cardinality


class TestCardinality:
    def test_asymptote_value(self):
        assert cardinality_asymptote(10**6) == pytest.approx(2.50e3, rel=1e-2)

    def test_asymptote_grows(self):
        values = [cardinality_asymptote(10**e) for e in range(4, 14)]
        assert values == sorted(values)

    def test_asymptote_domain(self):
        with pytest.raises(DomainError):
            cardinality_asymptote(9999)

    def test_asymptote_within_30_percent(self, near_million):
        exact = near_million.cardinality
        assert abs(cardinality_asymptote(near_million.context.n) - exact) / exact < 0.3

    @pytest.mark.slow
    def test_relative_error_trend(self, counter):
        errors = []
        for target in (10**6, 10**8, 10**10):
            ensemble = build_ensemble(gap_typical_n(target, counter), counter, threads=4)
            exact = ensemble.cardinality
            errors.append(abs(cardinality_asymptote(ensemble.context.n) - exact) / exact)
        assert errors == pytest.approx([0.030, 0.182, 0.145], abs=0.01)
        # rises between 1e6 and 1e8, so the trend is not non-increasing
        assert errors[1] > errors[0]

    def test_report(self, small, counter):
        report = cardinality_report(small, counter)
        assert report.exact == report.from_pi_differences == 23
        assert report.asymptote is None
        assert report.telescoped_discrepancy == report.telescoped - 23
        data = report.as_dict()
        assert data["interval"] == [49, 121]
        assert data["hilbert_dimension"] == 23
        assert data["x3_band_observed"] is not None

    def test_x3_band_predicted(self, counter):
        ctx = PrimeContext.from_n(10**6, counter)
        lo, hi = predicted_x3_band(ctx, 2500)
        assert lo == pytest.approx(2500 - 5000 / 6)
        assert hi == pytest.approx(2000)


class TestEMax:
    def test_attained_at_three(self, near_million):
        check = e_max_check(near_million)
        assert check.x_at_max == (3,)
        assert 0.8 < check.scaled < 1.3

    @pytest.mark.parametrize(
        "n", [10**6 + 3, pytest.param(10**8 + 7, marks=pytest.mark.slow)]
    )
    def test_scaled_maximum(self, n, counter):
        check = e_max_check(build_ensemble(n, counter, threads=4))
        assert check.x_at_max == (3,)
        assert 0.7 <= check.scaled <= 1.3

    def test_small_n_peaks_elsewhere(self, small):
        assert e_max_check(small).x_at_max == (7,)
