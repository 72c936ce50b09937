import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from aai.attention import NEG_INF, attend, masked_softmax, scaled_dot_product, softmax
from aai.errors import DegenerateRowError, ShapeError
from aai.masks import causal_mask

from oracles import decimal_softmax, naive_dot_scores, naive_matmul

finite = st.floats(-30, 30, allow_nan=False, allow_infinity=False)


def square(max_side=8):
    return st.integers(1, max_side).flatmap(lambda n: arrays(np.float64, (n, n), elements=finite))


class TestScaledDotProduct:
    def test_identity(self):
        assert scaled_dot_product(np.eye(2), np.eye(2), 1).tolist() == [[1.0, 0.0], [0.0, 1.0]]

    def test_constant_rows(self):
        assert scaled_dot_product(np.ones((2, 2)), np.ones((2, 2)), 4).tolist() == [[1.0, 1.0], [1.0, 1.0]]

    def test_matches_triple_loop(self):
        rng = np.random.default_rng(3)
        q, k = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
        np.testing.assert_allclose(scaled_dot_product(q, k, 2), naive_dot_scores(q.tolist(), k.tolist(), 2), rtol=0, atol=1e-14)

    def test_dimension_mismatch(self):
        with pytest.raises(ShapeError):
            scaled_dot_product(np.ones((3, 2)), np.ones((3, 4)), 2)

    def test_nonpositive_head_dim(self):
        with pytest.raises(ShapeError):
            scaled_dot_product(np.ones((2, 2)), np.ones((2, 2)), 0)


class TestMaskedSoftmax:
    def test_uniform_row(self):
        A = masked_softmax(np.zeros((3, 3)), causal_mask(3))
        assert A[2].tolist() == pytest.approx([1 / 3] * 3, abs=1e-15)

    def test_masked_entry_is_zero(self):
        A = masked_softmax(np.array([[5.0, 7.0]]), np.array([[0.0, NEG_INF]]))
        assert A.tolist() == [[1.0, 0.0]]

    def test_extended_precision(self):
        A = masked_softmax(np.array([[1.0, 2.0, 3.0]]), np.zeros((1, 3)))
        np.testing.assert_allclose(A[0], decimal_softmax([1.0, 2.0, 3.0]), rtol=0, atol=1e-15)

    def test_fully_masked_row(self):
        with pytest.raises(DegenerateRowError):
            masked_softmax(np.zeros((2, 2)), np.full((2, 2), NEG_INF))

    def test_rejects_non_finite_scores(self):
        with pytest.raises(ShapeError):
            masked_softmax(np.array([[np.nan, 0.0]]))

    def test_zero_mask_equals_plain_softmax(self):
        S = np.random.default_rng(0).normal(size=(5, 5))
        assert np.array_equal(masked_softmax(S, np.zeros_like(S)), softmax(S))

    @settings(max_examples=200, deadline=None)
    @given(square())
    def test_row_stochastic(self, S):
        A = masked_softmax(S, causal_mask(S.shape[0]))
        assert np.all(A >= 0) and np.all(A <= 1)
        np.testing.assert_allclose(A.sum(axis=1), 1.0, rtol=0, atol=1e-9)
        assert np.all(A[np.triu_indices(S.shape[0], 1)] == 0.0)

    @settings(max_examples=200, deadline=None)
    @given(square(), st.floats(-50, 50, allow_nan=False))
    def test_row_shift_invariance(self, S, shift):
        M = causal_mask(S.shape[0])
        shifted = S.copy()
        shifted[-1] += shift
        np.testing.assert_allclose(masked_softmax(shifted, M), masked_softmax(S, M), rtol=0, atol=1e-9)

    @settings(max_examples=100, deadline=None)
    @given(square(6))
    def test_matches_decimal_oracle(self, S):
        A = masked_softmax(S, causal_mask(S.shape[0]))
        for i, row in enumerate(S.tolist()):
            expected = decimal_softmax([v if j <= i else None for j, v in enumerate(row)])
            np.testing.assert_allclose(A[i], expected, rtol=0, atol=1e-12)


class TestAttend:
    def test_identity_mixing(self):
        v = np.arange(6.0).reshape(3, 2)
        assert np.array_equal(attend(np.eye(3), v), v)

    def test_midpoint(self):
        assert attend(np.array([[0.5, 0.5]]), np.array([[0.0, 0.0], [2.0, 4.0]])).tolist() == [[1.0, 2.0]]

    def test_matches_naive_product(self):
        rng = np.random.default_rng(5)
        A = masked_softmax(rng.normal(size=(4, 4)))
        v = rng.normal(size=(4, 3))
        np.testing.assert_allclose(attend(A, v), naive_matmul(A.tolist(), v.tolist()), rtol=0, atol=1e-14)

    def test_one_hot_rows_select_exactly(self):
        v = np.random.default_rng(1).normal(size=(4, 3))
        A = np.eye(4)[[2, 0, 3, 1]]
        assert np.array_equal(attend(A, v), v[[2, 0, 3, 1]])

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            attend(np.eye(3), np.ones((2, 2)))


def test_negative_infinity_sentinel():
    assert NEG_INF == -math.inf
