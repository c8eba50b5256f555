"""Complex FFT for arbitrary lengths, plus the real-input pair rfft/irfft.

Power-of-two lengths use an iterative radix-2 transform. Every other length
goes through Bluestein's chirp-z reformulation, which re-expresses the DFT as
a convolution evaluated with a padded radix-2 transform.

Conventions: the forward transform carries no scale factor and uses
``exp(-2j*pi*k*t/n)``; the inverse carries ``1/n``.

Very short real transforms (the model uses n = 2 and n = 4) skip the
butterflies and multiply by a cached cosine/sine matrix instead.

The kernels work on axis -2 of a ``[..., n, m]`` array so that every butterfly
touches contiguous rows of ``m`` values; the public functions accept any axis.
"""

from functools import lru_cache

import numpy as np


def _is_pow2(n: int) -> bool:
    return n > 0 and (n & (n - 1)) == 0


@lru_cache(maxsize=None)
def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.int64)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=None)
def _twiddles(size: int, sign: int) -> np.ndarray:
    half = size // 2
    return np.exp(sign * 2j * np.pi * np.arange(half) / size)[:, None]


def _radix2(x: np.ndarray, sign: int) -> np.ndarray:
    # x: [..., n, m] with n a power of two
    lead, n, m = x.shape[:-2], x.shape[-2], x.shape[-1]
    a = np.take(x, _bit_reverse(n), axis=-2).astype(np.complex128, copy=False)
    size = 2
    while size <= n:
        half = size // 2
        v = a.reshape(lead + (n // size, 2, half, m))
        even = v[..., 0, :, :]
        odd = v[..., 1, :, :]
        if half > 1:
            odd = odd * _twiddles(size, sign)
        out = np.empty_like(v)
        np.add(even, odd, out=out[..., 0, :, :])
        np.subtract(even, odd, out=out[..., 1, :, :])
        a = out.reshape(lead + (n, m))
        size *= 2
    return a


@lru_cache(maxsize=None)
def _chirp(n: int, sign: int) -> tuple[np.ndarray, np.ndarray, int]:
    # k^2 mod 2n keeps the phase argument small and the chirp accurate
    k = np.arange(n)
    phase = (k * k) % (2 * n)
    w = np.exp(sign * 1j * np.pi * phase / n)
    m = 1
    while m < 2 * n - 1:
        m *= 2
    b = np.zeros(m, dtype=np.complex128)
    b[:n] = np.conj(w)
    b[m - n + 1:] = np.conj(w[1:])[::-1]
    return w[:, None], _radix2(b[:, None], -1), m


def _bluestein(x: np.ndarray, sign: int) -> np.ndarray:
    n = x.shape[-2]
    w, b_hat, m = _chirp(n, sign)
    a = np.zeros(x.shape[:-2] + (m, x.shape[-1]), dtype=np.complex128)
    a[..., :n, :] = x * w
    conv = _radix2(_radix2(a, -1) * b_hat, 1) / m
    return conv[..., :n, :] * w


def _transform(x: np.ndarray, sign: int) -> np.ndarray:
    n = x.shape[-2]
    if n == 0:
        raise ValueError("fft of an empty axis")
    return _radix2(x, sign) if _is_pow2(n) else _bluestein(x, sign)


def _along(x: np.ndarray, axis: int, fn):
    """Apply ``fn`` (acting on axis -2) along ``axis``."""
    axis = axis % x.ndim
    if axis == x.ndim - 2:
        return fn(x)
    y = fn(np.moveaxis(x, axis, -1)[..., None])[..., 0]
    return np.moveaxis(y, -1, axis)


def fft(x: np.ndarray, inverse: bool = False, axis: int = -1) -> np.ndarray:
    """DFT along ``axis``. ``inverse=True`` applies the 1/n-scaled inverse."""
    x = np.asarray(x, dtype=np.complex128)
    n = x.shape[axis]
    sign = 1 if inverse else -1
    out = _along(x, axis, lambda a: _transform(a, sign))
    return out / n if inverse else out


DENSE_MAX = 8


@lru_cache(maxsize=None)
def _dense(n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Forward (cos, -sin) ``[bins, n]`` and inverse ``[n, bins]`` real matrices."""
    bins = n // 2 + 1
    kt = np.outer(np.arange(bins), np.arange(n)) % n
    theta = 2.0 * np.pi * kt / n
    cos, sin = np.cos(theta), np.sin(theta)
    # exact zeros where the sine vanishes analytically
    sin[(2 * kt) % n == 0] = 0.0
    mult = np.full(bins, 2.0)
    mult[0] = 1.0
    if n % 2 == 0:
        mult[-1] = 1.0
    inv_re = (cos * mult[:, None]).T / n
    inv_im = -(sin * mult[:, None]).T / n
    return cos, -sin, inv_re, inv_im


def _rfft_rows(x: np.ndarray, bins: int) -> np.ndarray:
    n = x.shape[-2]
    if n <= DENSE_MAX:
        cos, msin, _, _ = _dense(n)
        out = np.empty(x.shape[:-2] + (bins, x.shape[-1]), dtype=np.complex128)
        out.real = cos @ x
        out.imag = msin @ x
        return out
    return _transform(x, -1)[..., :bins, :]


def rfft(x: np.ndarray, axis: int = -1) -> np.ndarray:
    """Half spectrum (``n//2 + 1`` bins) of a real signal along ``axis``."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[axis]
    if n == 0:
        raise ValueError("fft of an empty axis")
    return _along(x, axis, lambda a: _rfft_rows(a, n // 2 + 1))


def _irfft_rows(spec: np.ndarray, n: int) -> np.ndarray:
    if n <= DENSE_MAX:
        _, _, inv_re, inv_im = _dense(n)
        return inv_re @ np.ascontiguousarray(spec.real) + inv_im @ np.ascontiguousarray(spec.imag)
    bins = n // 2 + 1
    full = np.zeros(spec.shape[:-2] + (n, spec.shape[-1]), dtype=np.complex128)
    full[..., :bins, :] = spec
    full[..., 0, :] = spec[..., 0, :].real
    if n % 2 == 0:
        full[..., n // 2, :] = spec[..., n // 2, :].real
    tail = (n - 1) // 2
    if tail:
        full[..., n - tail:, :] = np.conj(spec[..., 1:tail + 1, :])[..., ::-1, :]
    return _transform(full, 1).real / n


def irfft(spec: np.ndarray, n: int, axis: int = -1) -> np.ndarray:
    """Real signal of length ``n`` whose half spectrum along ``axis`` is ``spec``.

    The imaginary parts of the DC bin (and of the Nyquist bin for even ``n``)
    cannot be represented by a real signal and are discarded explicitly, so the
    output is exactly independent of them.
    """
    spec = np.asarray(spec, dtype=np.complex128)
    if n < 1 or spec.shape[axis] != n // 2 + 1:
        raise ValueError(f"spectrum with {spec.shape[axis]} bins does not match length {n}")
    return _along(spec, axis, lambda a: _irfft_rows(a, n))
