"""Rows, gap profiles, softmax and the collapse observables."""
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gapcount.errors import DomainError, InputError
from gapcount.row_core import (RowMeta, ScoreRow, counting_function, gap_profile, observables,
                               partition_by_parts, softmax)
from gapcount.synth import SimplexConfig, simplex_row

from conftest import score_rows

ROW3 = np.array([0.0, -1.0, -2.0])


def _direct(scores, beta):
    """Reference softmax in extended precision, independent of the library."""
    z = np.asarray(scores, dtype=np.longdouble)
    w = np.exp(beta * (z - z.max()))
    return w / w.sum(), float(w.sum())


class TestScoreRow:
    def test_meta_n_filled(self):
        row = ScoreRow(np.arange(5.0))
        assert row.n == 5 and row.meta.n == 5

    def test_read_only_float64(self):
        row = ScoreRow(np.arange(3, dtype=np.float32))
        assert row.scores.dtype == np.float64
        with pytest.raises(ValueError):
            row.scores[0] = 1.0

    @pytest.mark.parametrize("bad", [np.nan, np.inf, -np.inf])
    def test_non_finite_names_row(self, bad):
        with pytest.raises(InputError, match="index 1.*cell='c7'"):
            ScoreRow.from_scores([0.0, bad], cell_id="c7", layer=2)

    def test_length_mismatch(self):
        with pytest.raises(InputError):
            ScoreRow(np.zeros(3), RowMeta(n=4))

    def test_empty(self):
        with pytest.raises(InputError):
            ScoreRow(np.zeros(0))


class TestGapProfile:
    def test_simple(self):
        p = gap_profile(ROW3)
        assert p.z_star == 0.0 and p.n_max == 1 and p.n == 3
        np.testing.assert_array_equal(p.gaps, [1.0, 2.0])
        np.testing.assert_array_equal(p.cum_counts, [2, 3])

    def test_all_tied(self):
        p = gap_profile([5.0, 5.0, 5.0])
        assert p.n_max == 3 and p.gaps.size == 0 and p.is_tie

    def test_finite_contact_values(self):
        n = 10 ** 6
        log_n = math.log(n)
        p = gap_profile([0.0, -math.log(2) / log_n, -log_n])
        np.testing.assert_allclose(p.gaps, [math.log(2) / log_n, log_n], rtol=1e-15)
        np.testing.assert_allclose(p.gaps, [0.050171, 13.8155], atol=1e-5)
        np.testing.assert_array_equal(p.cum_counts, [2, 3])

    def test_tie_tolerance(self):
        p = gap_profile([1.0, 1.0 - 1e-9, 0.0], tie_abs_tol=1e-8)
        assert p.n_max == 2
        assert gap_profile([1.0, 1.0 - 1e-9, 0.0]).n_max == 1

    def test_single_token(self):
        p = gap_profile([3.0])
        assert p.degenerate and p.n_max == 1 and p.gaps.size == 0

    def test_float_noise_merged(self):
        z = np.array([10.0, 9.0, 9.0 + 1e-13, 8.0])
        p = gap_profile(z)
        np.testing.assert_array_equal(p.cum_counts, [3, 4])

    @given(score_rows(ties=True))
    def test_counts_match_brute_force(self, z):
        p = gap_profile(z)
        g = z.max() - z
        assert p.n_max == int(np.sum(g == 0))
        assert np.all(np.diff(p.gaps) > 0) and np.all(np.diff(p.cum_counts) > 0)
        assert (p.cum_counts[-1] if p.gaps.size else p.n_max) == z.size
        for u, c in zip(p.gaps, p.cum_counts):
            assert abs(c - int(np.sum(g <= u))) <= int(np.sum(np.abs(g - u) <= 1e-9))


class TestCountingFunction:
    @pytest.mark.parametrize("t,expected", [(0.0, 1), (0.5, 1), (1.0, 2), (1.5, 2),
                                            (2.0, 3), (10.0, 3)])
    def test_steps(self, t, expected):
        assert counting_function(gap_profile(ROW3), t) == expected

    def test_negative(self):
        with pytest.raises(DomainError):
            counting_function(gap_profile(ROW3), -0.1)

    def test_tied(self):
        assert counting_function(gap_profile([2.0, 2.0, 0.0]), 0.0) == 2


class TestSoftmax:
    def test_uniform_at_zero(self):
        sm = softmax(ROW3, 0.0)
        np.testing.assert_allclose(sm.probs, 1 / 3, rtol=1e-15)
        assert sm.Z == 3.0

    def test_beta_one(self):
        sm = softmax(ROW3, 1.0)
        np.testing.assert_allclose(sm.probs, [0.66524096, 0.24472847, 0.09003057], atol=1e-8)
        assert sm.Z == pytest.approx(1.5032147244080551, rel=1e-14)
        assert sm.logZ == pytest.approx(math.log(1.5032147244080551), rel=1e-14)

    def test_large_beta(self):
        sm = softmax(ROW3, 1e3)
        np.testing.assert_allclose(sm.probs, [1, 0, 0], atol=1e-300)
        assert sm.Z == 1.0

    def test_huge_scores_no_overflow(self):
        sm = softmax([1e300, 1e300 - 1e290, -1e300], 1e10)
        assert np.isfinite(sm.probs).all() and sm.Z == 1.0

    @pytest.mark.parametrize("beta", [-1.0, math.inf, math.nan])
    def test_bad_beta(self, beta):
        with pytest.raises(DomainError):
            softmax(ROW3, beta)

    @given(score_rows(ties=True), st.floats(0, 50))
    def test_matches_reference(self, z, beta):
        p_ref, z_ref = _direct(z, beta)
        sm = softmax(z, beta)
        np.testing.assert_allclose(sm.probs, p_ref.astype(float), rtol=1e-10, atol=1e-300)
        assert sm.Z == pytest.approx(z_ref, rel=1e-12)


class TestObservables:
    def test_uniform_four(self):
        o = observables(softmax(np.zeros(4), 1.0))
        assert o.H == pytest.approx(math.log(4), rel=1e-15)
        assert (o.D, o.G, o.p_star) == (0.0, 0.0, 0.25)

    def test_beta_one(self):
        o = observables(softmax(ROW3, 1.0))
        assert o.H == pytest.approx(0.8323955818399389, rel=1e-12)
        assert o.D == pytest.approx(0.4205124847200241, rel=1e-12)
        assert o.G == pytest.approx(0.5752103826044414, rel=1e-12)
        assert o.p_star == pytest.approx(0.6652409557748219, rel=1e-12)

    @pytest.mark.parametrize("beta", [0.0, 0.1, 10.0, 1e4])
    def test_tied_triple(self, beta):
        o = observables(softmax([5.0, 5.0, 5.0], beta))
        assert o.H == pytest.approx(math.log(3), rel=1e-15)
        assert o.p_star == pytest.approx(1 / 3, rel=1e-15)

    def test_single_token_degenerate(self):
        o = observables(softmax([1.0], 2.0))
        assert o.degenerate and o.H == 0.0 and o.D == 0.0 and o.p_star == 1.0

    @given(score_rows(ties=True), st.floats(0, 100))
    def test_invariants(self, z, beta):
        sm = softmax(z, beta)
        o = observables(sm)
        assert abs(sm.probs.sum() - 1) <= 1e-12
        assert sm.Z >= 1.0
        assert abs(o.p_star - 1 / sm.Z) <= 1e-12
        assert o.G <= o.p_star + 1e-15 and o.D <= o.G + 1e-15
        assert -1e-15 <= o.H <= math.log(z.size) + 1e-12

    @given(score_rows(ties=True), st.floats(0, 20), st.floats(0, 20))
    def test_entropy_monotone(self, z, b1, b2):
        lo, hi = sorted((b1, b2))
        assert observables(softmax(z, hi)).H <= observables(softmax(z, lo)).H + 1e-10

    @given(score_rows(ties=True), st.floats(0.01, 1e3))
    def test_tie_entropy_bound(self, z, beta):
        assert observables(softmax(z, beta)).H >= math.log(gap_profile(z).n_max) - 1e-12

    @given(score_rows(), st.floats(-100, 100), st.floats(0, 10))
    def test_shift_invariance(self, z, c, beta):
        a, b = softmax(z, beta), softmax(z + c, beta)
        # shifting can move scores by one ulp of |c|, which beta then amplifies
        tol = 1e-9 + 8 * beta * np.spacing(max(1.0, np.abs(z).max() + abs(c)))
        assert abs(a.Z - b.Z) <= tol * a.Z
        oa, ob = observables(a), observables(b)
        for x, y in zip(oa[:4], ob[:4]):
            assert x == pytest.approx(y, abs=tol * 10)


class TestPartitionByParts:
    def test_row3(self):
        assert partition_by_parts(gap_profile(ROW3), 1.0) == pytest.approx(
            1.5032147244080551, rel=1e-14)

    @pytest.mark.parametrize("beta", [0.01, 1.0, 100.0])
    def test_all_tied(self, beta):
        assert partition_by_parts(gap_profile(np.full(7, 2.5)), beta) == pytest.approx(7.0)

    @pytest.mark.parametrize("n,delta,beta", [(4, 1.0, 1.0), (100, 0.3, 2.0), (2 ** 12, 2.0, 0.7)])
    def test_simplex_closed_form(self, n, delta, beta):
        prof = gap_profile(simplex_row(SimplexConfig(n, delta)))
        expected = 1 + (n - 1) * math.exp(-beta * delta)
        assert partition_by_parts(prof, beta) == pytest.approx(expected, rel=1e-12)

    @pytest.mark.parametrize("beta", [0.0, -2.0])
    def test_bad_beta(self, beta):
        with pytest.raises(DomainError):
            partition_by_parts(gap_profile(ROW3), beta)

    @given(score_rows(ties=True), st.floats(1e-2, 1e2))
    def test_equals_direct_sum(self, z, beta):
        Z = softmax(z, beta).Z
        assert abs(partition_by_parts(gap_profile(z), beta) - Z) <= 1e-10 * Z

    def test_ten_thousand_rows(self):
        from gapcount.verify import random_rows
        rng = np.random.default_rng(7)
        worst = 0.0
        for row in random_rows(rng, 10_000, ties=True):
            beta = 10 ** rng.uniform(-2, 2)
            Z = softmax(row, beta).Z
            worst = max(worst, abs(partition_by_parts(gap_profile(row), beta) - Z) / Z)
        assert worst <= 1e-10
