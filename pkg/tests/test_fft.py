import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from fetcm import fft
from fetcm import tensor as T
from fetcm.tensor import DimensionError, Tensor

from conftest import naive_dft

LENGTHS = [1, 2, 3, 4, 5, 7, 8, 9, 10, 13, 16, 17, 50, 64]


@pytest.mark.parametrize("n", LENGTHS)
def test_complex_fft_matches_naive_sum(n, rng):
    x = rng.normal(size=(n, 3)) + 1j * rng.normal(size=(n, 3))
    assert np.max(np.abs(fft.fft(x, axis=0) - naive_dft(x))) < 1e-10
    assert np.max(np.abs(fft.fft(x, inverse=True, axis=0) - naive_dft(x, inverse=True))) < 1e-10


@pytest.mark.parametrize("n", LENGTHS)
def test_rfft_is_half_of_naive_spectrum(n, rng):
    x = rng.normal(size=(n, 4))
    spec = fft.rfft(x, axis=0)
    assert spec.shape == (n // 2 + 1, 4)
    assert np.max(np.abs(spec - naive_dft(x)[: n // 2 + 1])) < 1e-10


@pytest.mark.parametrize("n", [4, 7, 10, 64])
def test_round_trip(n, rng):
    v = rng.normal(size=(n, 5))
    assert np.max(np.abs(fft.irfft(fft.rfft(v, axis=0), n, axis=0) - v)) < 1e-10


def test_constant_and_impulse_columns():
    spec = T.rfft(Tensor(np.ones((4, 1))))
    np.testing.assert_allclose(spec.re.data[:, 0], [4, 0, 0], atol=1e-15)
    np.testing.assert_allclose(spec.im.data[:, 0], [0, 0, 0], atol=1e-15)
    spec = T.rfft(Tensor(np.array([[1.0], [0], [0], [0]])))
    np.testing.assert_allclose(spec.re.data[:, 0], [1, 1, 1], atol=1e-15)
    np.testing.assert_allclose(spec.im.data[:, 0], [0, 0, 0], atol=1e-15)


def test_irfft_special_spectra():
    zero = T.ComplexSpectrum(Tensor(np.zeros((3, 2))), Tensor(np.zeros((3, 2))), 5)
    assert np.all(T.irfft(zero).data == 0)
    dc = np.zeros((4, 2))
    dc[0] = 3.0
    out = T.irfft(T.ComplexSpectrum(Tensor(dc), Tensor(np.zeros((4, 2))), 7))
    np.testing.assert_allclose(out.data, np.full((7, 2), 3.0 / 7), atol=1e-15)


def test_other_axes(rng):
    x = rng.normal(size=(3, 10, 2))
    np.testing.assert_allclose(fft.rfft(x, axis=1), np.fft.rfft(x, axis=1), atol=1e-12)
    np.testing.assert_allclose(fft.rfft(x), np.fft.rfft(x), atol=1e-12)


def test_length_errors():
    with pytest.raises(DimensionError):
        T.rfft(Tensor(np.zeros((0, 3))))
    spec = T.rfft(Tensor(np.ones((4, 2))))
    with pytest.raises(DimensionError):
        T.irfft(spec, 7)


def test_filter_mul_arithmetic():
    x = T.ComplexSpectrum(Tensor(np.array([[1.0]])), Tensor(np.array([[2.0]])), 1)
    out = T.spectrum_filter_mul(x, Tensor(np.array([[3.0]])), Tensor(np.array([[-1.0]])))
    assert (out.re.item(), out.im.item()) == (5.0, 5.0)
    out = T.spectrum_filter_mul(x, Tensor(np.ones((1, 1))), Tensor(np.zeros((1, 1))))
    assert (out.re.item(), out.im.item()) == (1.0, 2.0)
    out = T.spectrum_filter_mul(x, Tensor(np.zeros((1, 1))), Tensor(np.zeros((1, 1))))
    assert (out.re.item(), out.im.item()) == (0.0, 0.0)
    with pytest.raises(DimensionError):
        T.spectrum_filter_mul(x, Tensor(np.ones((2, 1))), Tensor(np.ones((2, 1))))


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 64), d=st.integers(1, 3), data=st.data())
def test_linearity_property(n, d, data):
    elems = st.floats(-1e3, 1e3, allow_nan=False)
    x = data.draw(arrays(np.float64, (n, d), elements=elems))
    y = data.draw(arrays(np.float64, (n, d), elements=elems))
    a, b = data.draw(elems), data.draw(elems)
    lhs = fft.rfft(a * x + b * y, axis=0)
    rhs = a * fft.rfft(x, axis=0) + b * fft.rfft(y, axis=0)
    scale = 1.0 + np.max(np.abs(lhs))
    assert np.max(np.abs(lhs - rhs)) / scale < 1e-10


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 64), seed=st.integers(0, 2**32 - 1))
def test_oracle_and_round_trip_property(n, seed):
    x = np.random.default_rng(seed).normal(size=(n, 2))
    assert np.max(np.abs(fft.rfft(x, axis=0) - naive_dft(x)[: n // 2 + 1])) < 1e-10
    assert np.max(np.abs(fft.irfft(fft.rfft(x, axis=0), n, axis=0) - x)) < 1e-10
