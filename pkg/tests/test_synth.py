"""Synthetic families, Gram realisation and the temperature schedules."""
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gapcount.errors import ConfigError, InputError, RankError
from gapcount.gap_count import accumulation_scale, contact_triple
from gapcount.row_core import gap_profile
from gapcount.synth import (BlockConfig, BlockFamily, FiniteContactFamily, ScheduleSpec,
                            SimplexConfig, SimplexFamily, block_gram, block_lambda_closed_form,
                            block_row, dynamic_ntk_scale, family_from_config,
                            finite_contact_row, generate_rows, gram_realize, legacy_multiplier,
                            realized_scores, simplex_gram, simplex_row, yarn_beta)


class TestSimplex:
    def test_row(self):
        row = simplex_row(SimplexConfig(4, 1.0, 2.0))
        np.testing.assert_array_equal(row.scores, [2, 1, 1, 1])
        assert accumulation_scale(gap_profile(row)) == pytest.approx(math.log(4), rel=1e-15)

    def test_n2(self):
        assert accumulation_scale(gap_profile(simplex_row(SimplexConfig(2, 1.0)))) == \
            pytest.approx(math.log(2), rel=1e-15)

    def test_planted_xi_two(self):
        row = SimplexFamily(xi=2.0).row(2 ** 16)
        lam = accumulation_scale(gap_profile(row))
        assert lam == pytest.approx(122.99597156305956, rel=1e-12)

    def test_default_r_sq(self):
        assert SimplexConfig(5, 3.0).r_sq == 3.0 and SimplexConfig(5, 0.2).r_sq == 1.0

    @pytest.mark.parametrize("kwargs", [dict(n=1, delta=1.0), dict(n=3, delta=0.0),
                                        dict(n=3, delta=2.0, r_sq=1.0), dict(n=2.5, delta=1.0)])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            SimplexConfig(**kwargs)

    @given(st.integers(2, 5000), st.floats(1e-3, 1e3))
    def test_closed_form_triple(self, n, delta):
        t = contact_triple(simplex_row(SimplexConfig(n, delta)))
        assert t.lam == pytest.approx(math.log(n) / delta, rel=1e-12)
        assert t.delta == pytest.approx(delta, rel=1e-12)
        assert t.alpha == pytest.approx(1.0, rel=1e-12)


class TestBlock:
    def test_within_dominant(self):
        cfg = BlockConfig(12, 3, 0.5, 3.0, 4.0)
        lam = accumulation_scale(gap_profile(block_row(cfg)))
        assert lam == pytest.approx(2.1972245773362196, rel=1e-14)
        assert lam == pytest.approx(block_lambda_closed_form(cfg), rel=1e-12)

    def test_across_dominant(self):
        cfg = BlockConfig(12, 3, 2.9, 3.0, 4.0)
        t = contact_triple(block_row(cfg))
        assert t.lam == pytest.approx(math.log(12) / 3, rel=1e-14)
        assert t.delta == 3.0 and t.alpha == pytest.approx(1.0)

    def test_m_equals_n_is_simplex(self):
        cfg = BlockConfig(8, 8, 0.5, 1.0, 1.0)
        assert contact_triple(block_row(cfg)).lam == pytest.approx(math.log(8) / 0.5)

    @pytest.mark.parametrize("kwargs", [dict(n=12, m=5, delta=0.5, tau=1.0),
                                        dict(n=12, m=1, delta=0.5, tau=1.0),
                                        dict(n=12, m=3, delta=1.0, tau=0.5),
                                        dict(n=12, m=3, delta=0.5, tau=3.0, r_sq=2.0)])
    def test_invalid(self, kwargs):
        with pytest.raises(ConfigError):
            BlockConfig(**kwargs)

    @given(st.integers(1, 40), st.integers(2, 12), st.floats(1e-3, 10), st.floats(1.001, 10))
    def test_closed_form(self, blocks, m, delta, ratio):
        cfg = BlockConfig(blocks * m, m, delta, delta * ratio)
        t = contact_triple(block_row(cfg))
        assert t.lam == pytest.approx(block_lambda_closed_form(cfg), rel=1e-12)
        assert t.lam * t.delta / math.log(cfg.n) == pytest.approx(t.alpha, rel=1e-12)


class TestFiniteContact:
    def test_values(self):
        n = 10 ** 6
        row = finite_contact_row(n)
        assert row.n == n and row.scores[0] == 0.0
        assert row.scores[1] == -math.log(2) / math.log(n)
        assert np.all(row.scores[2:] == -math.log(n))

    def test_small_n(self):
        with pytest.raises(ConfigError):
            finite_contact_row(2)


class TestGram:
    def test_identity(self):
        B = gram_realize(np.eye(3), 3)
        assert np.abs(realized_scores(B) - np.eye(3)).max() <= 1e-12

    def test_simplex_row_zero(self):
        cfg = SimplexConfig(4, 1.0, 2.0)
        S = realized_scores(gram_realize(simplex_gram(cfg), 4))
        assert np.abs(S - simplex_gram(cfg)).max() <= 1e-8
        np.testing.assert_allclose(S[0], simplex_row(cfg).scores, atol=1e-8)

    def test_block(self):
        cfg = BlockConfig(12, 3, 0.5, 3.0, 4.0)
        S = realized_scores(gram_realize(block_gram(cfg), 12))
        assert np.abs(S - block_gram(cfg)).max() <= 1e-8
        np.testing.assert_allclose(S[0], block_row(cfg).scores, atol=1e-8)

    def test_padding(self):
        f = np.random.default_rng(0).standard_normal((2, 5))
        B = gram_realize(f.T @ f, 7)
        assert B.shape == (7, 5) and np.all(B[5:] == 0)
        assert np.abs(realized_scores(B) - f.T @ f).max() <= 1e-10

    def test_rank_error(self):
        with pytest.raises(RankError):
            gram_realize(np.eye(4), 3)

    def test_asymmetric(self):
        with pytest.raises(InputError):
            gram_realize(np.array([[1.0, 0.5], [0.0, 1.0]]), 2)

    def test_indefinite(self):
        with pytest.raises(InputError):
            gram_realize(np.array([[1.0, 2.0], [2.0, 1.0]]), 2)

    @given(st.integers(1, 64), st.integers(0, 2 ** 32 - 1))
    def test_random_psd(self, n, seed):
        rng = np.random.default_rng(seed)
        k = int(rng.integers(1, n + 1))
        f = rng.standard_normal((k, n))
        sigma = f.T @ f
        assert np.abs(realized_scores(gram_realize(sigma, n)) - sigma).max() <= 1e-8


class TestFamilies:
    def test_from_config(self):
        fam = family_from_config("block", {"m": 4, "xi": 1.0, "layers": 3, "seed": 9})
        assert isinstance(fam, BlockFamily) and fam.m == 4
        assert isinstance(family_from_config("finite-contact"), FiniteContactFamily)

    @pytest.mark.parametrize("kind,params", [("nope", {}), ("simplex", {}),
                                             ("simplex", {"xi": 1, "delta": 1}),
                                             ("simplex", {"bogus": 1}), ("block", {"m": 2})])
    def test_bad_config(self, kind, params):
        with pytest.raises(ConfigError):
            family_from_config(kind, params)

    def test_block_family_within_dominant(self):
        fam = BlockFamily(m=2, xi=1.5)
        for n in (2 ** 10, 2 ** 20):
            t = contact_triple(fam.row(n))
            assert t.lam == pytest.approx(math.log(n) ** 1.5, rel=1e-12)
            assert t.alpha == pytest.approx(math.log(2) / math.log(n), rel=1e-12)

    def test_generate_rows_layout(self):
        rows = list(generate_rows(SimplexFamily(delta=1.0), [8, 16], cell_id="x", layers=2,
                                  heads=3, seqs=2))
        assert len(rows) == 24
        assert rows[0].meta.cell_id == "x" and rows[-1].meta.n == 16
        assert {(r.meta.layer, r.meta.head, r.meta.seq_id) for r in rows[:12]} == {
            (l, h, f"s{s}") for l in range(2) for h in range(3) for s in range(2)}

    def test_generate_rows_noise_deterministic(self):
        kw = dict(family=SimplexFamily(xi=1.0), n_grid=[32, 64], heads=2, noise=0.1, seed=5)
        a = [r.scores for r in generate_rows(**kw)]
        b = [r.scores for r in generate_rows(**kw)]
        assert all(np.array_equal(x, y) for x, y in zip(a, b))
        assert not np.array_equal(a[0], a[1])
        c = [r.scores for r in generate_rows(**{**kw, "seed": 6})]
        assert not np.array_equal(a[0], c[0])


class TestSchedules:
    @pytest.mark.parametrize("n,n_train,xi,expected", [
        (4096, 4096, 2.0, 1.0), (64 ** 2, 64, 2.0, 4.0), (10 ** 6, 64, 0.0, 1.0),
        (100, 4096, 3.0, 1.0)])
    def test_legacy(self, n, n_train, xi, expected):
        assert legacy_multiplier(n, n_train, xi) == pytest.approx(expected, rel=1e-14)

    @pytest.mark.parametrize("ratio,expected", [(1.0, 1.0), (math.exp(10), 4.0),
                                                (math.e, 1.21), (0.5, 1.0)])
    def test_yarn(self, ratio, expected):
        assert yarn_beta(1000 * ratio, 1000) == pytest.approx(expected, rel=1e-14)

    @pytest.mark.parametrize("n_eval,d,expected", [(2048, 128, 1.0),
                                                   (8192, 128, 2.022126168973791),
                                                   (16384, 4, 16.0)])
    def test_ntk(self, n_eval, d, expected):
        assert dynamic_ntk_scale(n_eval, 4096, d) == pytest.approx(expected, rel=1e-14)

    @pytest.mark.parametrize("d", [2, 3, 127])
    def test_ntk_bad_dim(self, d):
        with pytest.raises(ConfigError):
            dynamic_ntk_scale(8192, 4096, d)

    def test_schedule_spec(self):
        assert ScheduleSpec("legacy", 64, xi=2.0)(4096) == pytest.approx(4.0)
        assert ScheduleSpec("ntk", 4096, d=4)(16384) == pytest.approx(16.0)
        with pytest.raises(ConfigError):
            ScheduleSpec("rope", 64)
        with pytest.raises(ConfigError):
            ScheduleSpec("yarn", 1)

    @given(st.integers(2, 10 ** 7), st.integers(2, 10 ** 5), st.floats(0, 4))
    def test_legacy_monotone(self, n, n_train, xi):
        assert legacy_multiplier(n, n_train, xi) <= legacy_multiplier(2 * n, n_train, xi)
        assert legacy_multiplier(n, n_train, xi) >= 1.0
