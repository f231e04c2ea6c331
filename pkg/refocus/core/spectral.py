# refocus/core/spectral.py
"""Fourier transforms, spectral energy, ideal filters and the mid-band gap metric.

Model-path transforms use the standard convention (divisor n, unnormalized
forward, 1/n on the inverse). The divisor T-1 convention exists only as a
direct-summation DFT for stating the spectral identities the way they are
usually written.
"""
import cmath
import math
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache
from typing import Tuple, Union

import numpy as np

from refocus.core.tensor import Tensor, apply_op, as_tensor, mul
from refocus.models.enums import DftConvention, FilterKind
from refocus.utils import ContractError


@dataclass
class ComplexSpectrum:
    """Half-spectrum of a real signal along its last axis."""
    re: Tensor
    im: Tensor
    n_time: int

    def __post_init__(self):
        if self.re.shape != self.im.shape:
            raise ContractError(f"spectrum parts differ: {self.re.shape} vs {self.im.shape}")
        if self.re.shape[-1] != self.n_time // 2 + 1:
            raise ContractError(
                f"half-spectrum of {self.re.shape[-1]} bins does not match n_time={self.n_time}"
            )

    def as_complex(self) -> np.ndarray:
        return self.re.data + 1j * self.im.data


@dataclass
class FullSpectrum:
    """All bins f = 0..T-1 under a given divisor convention."""
    re: np.ndarray
    im: np.ndarray
    convention: DftConvention

    def as_complex(self) -> np.ndarray:
        return self.re + 1j * self.im


# fft kernels

def _is_pow2(n: int) -> bool:
    return n > 0 and n & (n - 1) == 0


@lru_cache(maxsize=None)
def _bit_reverse(n: int) -> np.ndarray:
    bits = n.bit_length() - 1
    idx = np.arange(n)
    rev = np.zeros(n, dtype=np.intp)
    for b in range(bits):
        rev |= ((idx >> b) & 1) << (bits - 1 - b)
    return rev


@lru_cache(maxsize=None)
def _twiddles(size: int) -> np.ndarray:
    return np.exp(-2j * np.pi * np.arange(size // 2) / size)


@lru_cache(maxsize=None)
def _chirp(n: int) -> np.ndarray:
    k = np.arange(n)
    return np.exp(1j * np.pi * ((k * k) % (2 * n)) / n)


def _fft_pow2(z: np.ndarray) -> np.ndarray:
    n = z.shape[-1]
    lead = z.shape[:-1]
    y = z[..., _bit_reverse(n)]
    size = 2
    while size <= n:
        half = size // 2
        y = y.reshape(*lead, n // size, size)
        even = y[..., :half]
        odd = y[..., half:] * _twiddles(size)
        y = np.concatenate([even + odd, even - odd], axis=-1)
        size *= 2
    return y.reshape(*lead, n)


def _ifft_pow2(z: np.ndarray) -> np.ndarray:
    return np.conj(_fft_pow2(np.conj(z))) / z.shape[-1]


def _fft_bluestein(z: np.ndarray) -> np.ndarray:
    n = z.shape[-1]
    m = 1 << (2 * n - 2).bit_length()
    w = _chirp(n)
    a = np.zeros(z.shape[:-1] + (m,), dtype=np.complex128)
    a[..., :n] = z * np.conj(w)
    b = np.zeros(m, dtype=np.complex128)
    b[:n] = w
    b[m - n + 1:] = w[1:][::-1]
    conv = _ifft_pow2(_fft_pow2(a) * _fft_pow2(b))
    return np.conj(w) * conv[..., :n]


def fft(z: np.ndarray) -> np.ndarray:
    """Complex DFT along the last axis (radix-2, Bluestein for other lengths)."""
    z = np.asarray(z, dtype=np.complex128)
    n = z.shape[-1]
    if n < 1:
        raise ContractError("fft of an empty signal")
    return _fft_pow2(z) if _is_pow2(n) else _fft_bluestein(z)


def ifft(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.complex128)
    return np.conj(fft(np.conj(z))) / z.shape[-1]


# differentiable real transforms

def rfft(x) -> ComplexSpectrum:
    """Unnormalized real FFT along the last axis; both parts are tape ops."""
    x = as_tensor(x)
    n = x.shape[-1]
    h = n // 2 + 1
    z = fft(x.data)[..., :h]

    def _adjoint(g: np.ndarray) -> np.ndarray:
        padded = np.zeros(g.shape[:-1] + (n,), dtype=np.complex128)
        padded[..., :h] = g
        return fft(padded)

    re = apply_op("rfft.re", np.ascontiguousarray(z.real), (x,), lambda g: (_adjoint(g).real,))
    im = apply_op("rfft.im", np.ascontiguousarray(z.imag), (x,), lambda g: (_adjoint(g).imag,))
    return ComplexSpectrum(re, im, n)


def irfft(spec: ComplexSpectrum, n: int = None) -> Tensor:
    """Inverse of ``rfft`` (carries the 1/n); imaginary parts of DC and Nyquist are ignored."""
    n = spec.n_time if n is None else n
    h = n // 2 + 1
    if spec.re.shape[-1] != h:
        raise ContractError(f"irfft: {spec.re.shape[-1]} bins cannot produce length {n}")
    full = np.zeros(spec.re.shape[:-1] + (n,), dtype=np.complex128)
    full[..., :h] = spec.re.data + 1j * spec.im.data
    full[..., 0] = full[..., 0].real
    if n % 2 == 0:
        full[..., n // 2] = full[..., n // 2].real
    full[..., h:] = np.conj(full[..., 1:n - h + 1][..., ::-1])
    out = np.ascontiguousarray(ifft(full).real)
    weight = np.full(h, 2.0)
    weight[0] = 1.0
    if n % 2 == 0:
        weight[-1] = 1.0

    def _backward(g):
        grad = fft(g)[..., :h] * (weight / n)
        return np.ascontiguousarray(grad.real), np.ascontiguousarray(grad.imag)

    return apply_op("irfft", out, (spec.re, spec.im), _backward)


def rfft_array(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return fft(x)[..., : x.shape[-1] // 2 + 1]


def irfft_array(z: np.ndarray, n: int) -> np.ndarray:
    z = np.asarray(z, dtype=np.complex128)
    return irfft(ComplexSpectrum(Tensor(z.real), Tensor(z.imag), n), n).data


# direct transforms

def divisor_for(n: int, convention: DftConvention) -> int:
    return n if convention == DftConvention.STANDARD else n - 1


def dft_direct(x, divisor: int = None) -> np.ndarray:
    """O(T^2) sum X(f) = sum_t x(t) exp(-i 2 pi f t / divisor), f = 0..T-1."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[-1]
    divisor = n if divisor is None else divisor
    idx = np.arange(n)
    turns = (np.outer(idx, idx) % divisor) / divisor
    return x @ np.exp(-2j * np.pi * turns).T


def dft_reduced(x) -> FullSpectrum:
    """Full spectrum under the divisor T-1 convention, by direct summation."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape[-1] < 2:
        raise ContractError(f"dft_reduced needs T >= 2, got {x.shape[-1]}")
    z = dft_direct(x, x.shape[-1] - 1)
    return FullSpectrum(z.real, z.imag, DftConvention.REDUCED)


def dft(x, convention: DftConvention = DftConvention.STANDARD) -> FullSpectrum:
    if convention == DftConvention.REDUCED:
        return dft_reduced(x)
    z = fft(np.asarray(x, dtype=np.float64))
    return FullSpectrum(z.real, z.imag, DftConvention.STANDARD)


def energy(s: Union[ComplexSpectrum, FullSpectrum, np.ndarray]) -> np.ndarray:
    """Per-bin re^2 + im^2."""
    if isinstance(s, ComplexSpectrum):
        return s.re.data ** 2 + s.im.data ** 2
    if isinstance(s, FullSpectrum):
        return s.re ** 2 + s.im ** 2
    z = np.asarray(s)
    return z.real ** 2 + z.imag ** 2


# filters and band metrics

def band_masks(n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Low [1, n/8), mid [n/8, 3n/8), high [3n/8, n/2] over half-spectrum bins; DC in none."""
    f = np.arange(n // 2 + 1)
    low = (f >= 1) & (8 * f < n)
    mid = (8 * f >= n) & (8 * f < 3 * n)
    high = 8 * f >= 3 * n
    return low, mid, high


def mid_band_edges(n: int) -> Tuple[int, int]:
    """First and last bin of the mid band."""
    _, mid, _ = band_masks(n)
    bins = np.flatnonzero(mid)
    return int(bins[0]), int(bins[-1])


def ideal_filter(x, band: Tuple[int, int], kind: FilterKind) -> Tensor:
    """Zero the stopband bins of every row and transform back.

    low keeps bins <= f_hi, high keeps bins >= f_lo, bandstop keeps both
    bins <= f_lo and bins >= f_hi.
    """
    x = as_tensor(x)
    n = x.shape[-1]
    f_lo, f_hi = band
    if not 0 <= f_lo <= f_hi <= n // 2:
        raise ContractError(f"invalid band ({f_lo}, {f_hi}) for length {n}")
    f = np.arange(n // 2 + 1)
    kind = FilterKind(kind)
    if kind == FilterKind.LOW:
        keep = f <= f_hi
    elif kind == FilterKind.HIGH:
        keep = f >= f_lo
    else:
        keep = (f <= f_lo) | (f >= f_hi)
    spec = rfft(x)
    mask = Tensor(np.broadcast_to(keep.astype(np.float64), spec.re.shape))
    return irfft(ComplexSpectrum(mul(spec.re, mask), mul(spec.im, mask), n), n)


def mid_gap_metric(x) -> Union[float, np.ndarray]:
    """Share of non-DC half-spectrum energy in the mid band, per row."""
    x = np.asarray(x.data if isinstance(x, Tensor) else x, dtype=np.float64)
    n = x.shape[-1]
    if n < 8:
        raise ContractError(f"mid_gap_metric needs n >= 8, got {n}")
    e = energy(rfft_array(x))
    _, mid, _ = band_masks(n)
    total = e[..., 1:].sum(axis=-1)
    mid_energy = e[..., mid].sum(axis=-1)
    # rounding leakage of a constant signal counts as zero
    floor = 1e-20 * np.maximum(e.sum(axis=-1), np.finfo(float).tiny)
    live = total > floor
    ratio = np.where(live, mid_energy / np.where(live, total, 1.0), 0.0)
    return float(ratio) if ratio.ndim == 0 else ratio


def g_function(f: int, K: int, T: int, divisor: Union[DftConvention, int] = DftConvention.STANDARD) -> complex:
    """(1/K) sum_k exp(i 2 pi f (3K/2 - k - 2) / divisor), phases reduced exactly."""
    if K < 1 or T < 2:
        raise ContractError(f"g_function needs K >= 1 and T >= 2, got K={K}, T={T}")
    div = divisor if isinstance(divisor, int) else divisor_for(T, DftConvention(divisor))
    total = 0j
    for k in range(K):
        turns = Fraction(f * (3 * K - 2 * k - 4), 2 * div) % 1
        total += cmath.exp(2j * math.pi * float(turns))
    return total / K


def g_curve(K: int, T: int, divisor: Union[DftConvention, int] = DftConvention.STANDARD) -> np.ndarray:
    """G over the half-spectrum bins 0..T//2."""
    div = divisor if isinstance(divisor, int) else divisor_for(T, DftConvention(divisor))
    return g_table(K, T, div)[: T // 2 + 1]


@lru_cache(maxsize=64)
def _g_table(K: int, T: int, div: int) -> Tuple[complex, ...]:
    return tuple(g_function(f, K, T, div) for f in range(T))


def g_table(K: int, T: int, div: int) -> np.ndarray:
    """G over all bins 0..T-1 for an explicit divisor (cached)."""
    return np.array(_g_table(K, T, div))
