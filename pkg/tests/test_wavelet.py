import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from rfsentinel.errors import InvalidArgumentError
from rfsentinel.wavelet import decompose, haar_level, preprocess

R2 = np.sqrt(2.0)
finite = st.floats(-1e3, 1e3, allow_nan=False)


def test_single_level_hand_values():
    a, d = haar_level([1, 2, 3, 4])
    np.testing.assert_allclose(a, [3 / R2, 7 / R2])
    np.testing.assert_allclose(d, [-1 / R2, -1 / R2])


def test_constant_has_zero_detail():
    _, d = haar_level([2.5] * 4)
    assert np.all(d == 0)


def test_single_sample_is_rejected():
    with pytest.raises(InvalidArgumentError):
        haar_level([5])


def test_two_level_hand_values():
    a1, _ = haar_level(np.arange(1, 9))
    np.testing.assert_allclose(a1, np.array([3, 7, 11, 15]) / R2)
    np.testing.assert_allclose(preprocess(np.arange(1, 9)).y_t, [-2.0, -2.0], atol=1e-12)


def test_output_length():
    assert preprocess(np.zeros(25_000)).y_t.size == 6_250


@given(st.floats(-100, 100), st.integers(4, 200))
def test_constants_are_annihilated(c, n):
    assert np.allclose(preprocess(np.full(n, c)).y_t, 0, atol=1e-9 * max(1, abs(c)))


@given(arrays(float, 64, elements=finite), arrays(float, 64, elements=finite),
       st.floats(-10, 10), st.floats(-10, 10))
def test_linearity(x, z, a, b):
    lhs = preprocess(a * x + b * z).y_t
    rhs = a * preprocess(x).y_t + b * preprocess(z).y_t
    np.testing.assert_allclose(lhs, rhs, atol=1e-8)


@given(arrays(float, st.integers(2, 40).map(lambda k: 4 * k), elements=finite))
def test_orthonormal_levels_preserve_energy(x):
    a2, d2, d1 = decompose(x)
    total = np.sum(a2 ** 2) + np.sum(d2 ** 2) + np.sum(d1 ** 2)
    assert total == pytest.approx(np.sum(x ** 2), rel=1e-9, abs=1e-9)


@given(arrays(float, st.integers(4, 80), elements=finite))
def test_fused_detail_matches_two_level_decomposition(x):
    _, d2, _ = decompose(x)
    np.testing.assert_allclose(preprocess(x).y_t, d2, rtol=1e-12, atol=1e-9)
