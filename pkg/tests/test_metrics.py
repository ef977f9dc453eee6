import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from oracles import dtw_by_path_enumeration, dtw_full_matrix, envelope_brute

from isaxsearch.core import IndexConfig, SaxWord
from isaxsearch.metrics import (
    ABANDONED,
    Envelope,
    dtw,
    euclidean,
    keogh_envelope,
    lb_keogh,
    leaf_scan,
    mindist_envelope_isax,
    mindist_paa_isax,
)
from isaxsearch.summarize import convert_to_isax, paa

series = arrays(np.float64, 12, elements=st.floats(-5, 5, allow_nan=False))


class TestEuclidean:
    def test_examples(self):
        x = np.array([0.3, -1.2, 4.0])
        assert euclidean(x, x) == 0.0
        assert euclidean([0, 0, 0, 0], [1, 1, 1, 1]) == 2.0
        assert euclidean([0, 0, 0, 0], [1, 1, 1, 1], abandon_at=1.5) is ABANDONED
        assert ABANDONED > 1.5

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            euclidean([1, 2], [1, 2, 3])

    def test_block_granularity(self):
        # crossing happens at point 3 but is only noticed at the end of the first block of 8
        a = np.zeros(16)
        b = np.r_[np.ones(8), np.zeros(8)]
        assert euclidean(a, b, abandon_at=math.sqrt(8)) == pytest.approx(math.sqrt(8))
        assert euclidean(a, b, abandon_at=2.0) is ABANDONED

    @settings(max_examples=300)
    @given(series, series, st.floats(0, 20))
    def test_abandonment_never_changes_value(self, a, b, limit):
        full = euclidean(a, b)
        got = euclidean(a, b, abandon_at=limit)
        if got is ABANDONED:
            assert full > limit
        else:
            assert got == full

    def test_float32_inputs_accumulate_in_float64(self, rng):
        a = rng.standard_normal(256).astype(np.float32)
        b = rng.standard_normal(256).astype(np.float32)
        expected = math.sqrt(sum((float(x) - float(y)) ** 2 for x, y in zip(a, b)))
        assert euclidean(a, b) == pytest.approx(expected, rel=1e-12)


class TestDtw:
    def test_examples(self, rng):
        x = rng.standard_normal(20)
        assert dtw(x, x, 5) == 0.0
        y = rng.standard_normal(20)
        assert dtw(x, y, 0) == pytest.approx(euclidean(x, y), rel=1e-12)
        assert dtw([0, 0, 1], [0, 1, 1], 1) == 0.0
        assert dtw_by_path_enumeration([0, 0, 1], [0, 1, 1], 1) == 0.0

    def test_errors(self):
        with pytest.raises(ValueError):
            dtw([1, 2], [1, 2, 3], 1)
        with pytest.raises(ValueError):
            dtw([1, 2, 3], [1, 2, 3], 3)

    @settings(max_examples=200, deadline=None)
    @given(st.integers(2, 7), st.data())
    def test_against_path_enumeration(self, n, data):
        a = data.draw(arrays(np.float64, n, elements=st.floats(-3, 3, allow_nan=False)))
        b = data.draw(arrays(np.float64, n, elements=st.floats(-3, 3, allow_nan=False)))
        r = data.draw(st.integers(0, n - 1))
        assert dtw(a, b, r) == pytest.approx(dtw_by_path_enumeration(a, b, r), rel=1e-9, abs=1e-12)

    def test_against_full_matrix(self, rng):
        for _ in range(20):
            n = int(rng.integers(8, 60))
            a, b = rng.standard_normal(n), rng.standard_normal(n)
            r = int(rng.integers(0, n))
            assert dtw(a, b, r) == pytest.approx(dtw_full_matrix(a, b, r), rel=1e-12)

    @settings(max_examples=200)
    @given(series, series, st.floats(0, 20))
    def test_abandonment_sound(self, a, b, limit):
        full = dtw(a, b, 3)
        got = dtw(a, b, 3, abandon_at=limit)
        assert got == full or (got is ABANDONED and full > limit)

    @settings(max_examples=100)
    @given(series, series)
    def test_full_window_properties(self, a, b):
        n = len(a)
        assert dtw(a, b, n - 1) <= euclidean(a, b) + 1e-12
        assert dtw(a, b, n - 1) == pytest.approx(dtw(b, a, n - 1), rel=1e-12, abs=1e-12)


class TestEnvelope:
    def test_examples(self):
        env = keogh_envelope([3.0, 3.0, 3.0, 3.0], 2, w=2)
        assert env.upper.tolist() == env.lower.tolist() == [3.0] * 4
        q = np.array([0.5, -1.0, 2.0, 0.0])
        env = keogh_envelope(q, 0, w=2)
        assert np.array_equal(env.upper, q) and np.array_equal(env.lower, q)
        env = keogh_envelope([0.0, 1.0, 0.0], 1, w=1)
        assert env.upper.tolist() == [1, 1, 1] and env.lower.tolist() == [0, 0, 0]

    def test_against_brute_force(self, rng):
        q = rng.standard_normal(40)
        for r in (0, 1, 3, 10, 39):
            env = keogh_envelope(q, r, w=8)
            up, lo = envelope_brute(q, r)
            np.testing.assert_array_equal(env.upper, up)
            np.testing.assert_array_equal(env.lower, lo)
            np.testing.assert_allclose(env.upper_paa, paa(up, 8))
            np.testing.assert_allclose(env.lower_paa, paa(lo, 8))

    def test_window_range(self):
        with pytest.raises(ValueError):
            keogh_envelope(np.zeros(4), 4, w=2)
        with pytest.raises(ValueError):
            keogh_envelope(np.zeros(4), -1, w=2)


class TestLbKeogh:
    def test_examples(self, rng):
        env = keogh_envelope([0.0, 1.0, 0.0], 1, w=1)
        assert lb_keogh(env, [0.5, 0.5, 0.5]) == 0.0
        assert lb_keogh(env, [2.0, 2.0, 2.0]) == pytest.approx(math.sqrt(3))
        q = rng.standard_normal(16)
        assert lb_keogh(keogh_envelope(q, 3, w=4), q) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValueError):
            lb_keogh(keogh_envelope(np.zeros(4), 1, w=2), np.zeros(5))

    @settings(max_examples=300, deadline=None)
    @given(series, series, st.integers(0, 11))
    def test_lower_bounds_dtw(self, q, s, r):
        assert lb_keogh(keogh_envelope(q, r, w=4), s) <= dtw(q, s, r) + 1e-9


class TestMindist:
    def test_paa_examples(self):
        assert mindist_paa_isax([-1.0, -1.0], SaxWord([128, 128], [1, 1]), 4) == pytest.approx(2.0)
        assert mindist_paa_isax([0.3, -0.3], SaxWord([128, 0], [1, 1]), 4) == 0.0
        # a one-bit word covering each segment's own half-line
        assert mindist_paa_isax([-7.0, 9.0], SaxWord([0, 128], [1, 1]), 4) == 0.0

    def test_envelope_examples(self):
        cfg_env = keogh_envelope([-2.0, -1.0, -2.0, -1.0], 0, w=2)
        assert cfg_env.lower_paa.tolist() == [-1.5, -1.5]
        env = Envelope(np.zeros(4), np.zeros(4), np.array([-1.0, -1.0]), np.array([-2.0, -2.0]), 1)
        assert mindist_envelope_isax(env, SaxWord([128, 128], [1, 1]), 4) == pytest.approx(2.0)
        wide = Envelope(np.zeros(4), np.zeros(4), np.array([5.0, 5.0]), np.array([-5.0, -5.0]), 1)
        assert mindist_envelope_isax(wide, SaxWord.full([3, 250]), 4) == 0.0

    def test_zero_window_envelope_equals_paa_bound(self, rng):
        q = rng.standard_normal(16)
        cfg = IndexConfig(n=16, w=4)
        word = convert_to_isax(rng.standard_normal(16), cfg)
        env = keogh_envelope(q, 0, w=4)
        assert mindist_envelope_isax(env, word, 16) == pytest.approx(mindist_paa_isax(paa(q, 4), word, 16))

    def test_mismatch(self):
        with pytest.raises(ValueError):
            mindist_paa_isax([0.0, 0.0, 0.0], SaxWord([0, 0], [1, 1]), 4)


def _truncate(word: SaxWord, bits) -> SaxWord:
    sym = [(int(s) >> (8 - b)) << (8 - b) for s, b in zip(word.symbols, bits)]
    return SaxWord(sym, bits)


class TestLowerBoundSoundness:
    def test_paa_bound_at_random_cardinalities(self, rng):
        cfg = IndexConfig(n=64, w=8)
        for _ in range(500):
            q, s = rng.standard_normal(64) * rng.uniform(0.2, 3), rng.standard_normal(64)
            word = convert_to_isax(s, cfg)
            bits = rng.integers(1, 9, size=8)
            ed = euclidean(q, s)
            assert mindist_paa_isax(paa(q, 8), word, 64) <= ed + 1e-9
            assert mindist_paa_isax(paa(q, 8), _truncate(word, bits), 64) <= ed + 1e-9

    def test_envelope_bound(self, rng):
        cfg = IndexConfig(n=64, w=8)
        for _ in range(300):
            q, s = np.cumsum(rng.standard_normal((2, 64)), axis=1)
            r = int(rng.integers(0, 20))
            env = keogh_envelope(q, r, w=8)
            word = convert_to_isax(s, cfg)
            d = dtw(q, s, r)
            assert mindist_envelope_isax(env, word, 64) <= d + 1e-9
            assert mindist_envelope_isax(env, _truncate(word, rng.integers(1, 9, size=8)), 64) <= d + 1e-9


class TestLeafScan:
    def _args(self, data, q, window):
        from isaxsearch.core import region_tables
        from isaxsearch.summarize import summarize_block

        cfg = IndexConfig(n=data.shape[1], w=8)
        words, _ = summarize_block(data, 0, len(data), cfg)
        lo, hi = region_tables(8)
        if window < 0:
            qlo = qhi = paa(q, 8)
            up = low = np.empty(0)
        else:
            env = keogh_envelope(q, window, w=8)
            qlo, qhi, up, low = env.lower_paa, env.upper_paa, env.upper, env.lower
        return (data, np.arange(len(data), dtype=np.int64), words, lo, hi, data.shape[1] / 8,
                q, qlo, qhi, up, low, window)

    @pytest.mark.parametrize("window", [-1, 0, 4])
    def test_equals_direct_minimum(self, rng, window):
        data = np.cumsum(rng.standard_normal((60, 32)), axis=1).astype(np.float32)
        q = np.cumsum(rng.standard_normal(32))
        dist = (lambda s: euclidean(s, q)) if window < 0 else (lambda s: dtw(q, s, window))
        direct = [dist(s) for s in data]
        best, pos, n_lb, n_real = leaf_scan(*self._args(data, q, window), math.inf)
        assert best == pytest.approx(min(direct), rel=1e-12)
        assert direct[pos] == pytest.approx(min(direct), rel=1e-12)
        assert n_lb == 60 and 1 <= n_real <= 60

    def test_zero_bsf_skips_everything(self, rng):
        data = rng.standard_normal((10, 32)).astype(np.float32)
        best, pos, n_lb, n_real = leaf_scan(*self._args(data, data[3].astype(float), -1), 0.0)
        assert (best, pos, n_real) == (math.inf, -1, 0)

    def test_contains_query(self, rng):
        data = rng.standard_normal((10, 32)).astype(np.float32)
        best, pos, _, _ = leaf_scan(*self._args(data, data[7].astype(float), -1), math.inf)
        assert (best, pos) == (0.0, 7)
