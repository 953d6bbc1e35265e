"""Radix-2 FFT machinery built from scratch.

Forward transforms use decimation-in-frequency butterflies: a length-l signal
splits into

    a = lo + hi                    (feeds the even output bins)
    b = (lo - hi) * W              (feeds the odd output bins)

with W[k] = exp(-2j*pi*k/l). Running the split recursively on natural-order
input leaves the spectrum in bit-reversed order; `fft` applies the reversal
permutation to hand back natural order. The inverse keeps the whole 1/l
normalization on its side, so fft has no scale factor at all.

Everything operates on the last axis and is vectorized over leading axes.
numpy's own FFT is deliberately not used anywhere here; `dft_oracle` is the
O(l^2) ground truth the fast paths are tested against.
"""

from __future__ import annotations

import numpy as np


def require_pow2(n: int) -> int:
    if n < 1 or (n & (n - 1)) != 0:
        raise ValueError(f"length must be a power of two, got {n}")
    return n


def next_pow2(n: int) -> int:
    """Smallest power of two >= n."""
    if n < 1:
        raise ValueError(f"need n >= 1, got {n}")
    return 1 << (n - 1).bit_length()


def dft_oracle(x) -> np.ndarray:
    """Literal O(l^2) DFT: y[k] = sum_j x[j] * exp(-2j*pi*j*k/l)."""
    x = np.asarray(x, dtype=np.complex128)
    l = x.shape[-1]
    jk = np.arange(l)[:, None] * np.arange(l)[None, :]
    omega = np.exp(-2j * np.pi * jk / l)
    return x @ omega


def idft_oracle(y) -> np.ndarray:
    """Literal inverse: x[j] = (1/l) sum_k y[k] * exp(+2j*pi*j*k/l)."""
    y = np.asarray(y, dtype=np.complex128)
    l = y.shape[-1]
    jk = np.arange(l)[:, None] * np.arange(l)[None, :]
    omega = np.exp(2j * np.pi * jk / l)
    return (y @ omega) / l


def bit_reversal_indices(l: int) -> np.ndarray:
    require_pow2(l)
    bits = l.bit_length() - 1
    idx = np.arange(l)
    rev = np.zeros(l, dtype=np.int64)
    for _ in range(bits):
        rev = (rev << 1) | (idx & 1)
        idx >>= 1
    return rev


def bit_reversal(x) -> np.ndarray:
    """Permute the last axis into bit-reversed index order (an involution)."""
    x = np.asarray(x)
    return x[..., bit_reversal_indices(x.shape[-1])]


def dif_split(x) -> tuple[np.ndarray, np.ndarray]:
    """One decimation-in-frequency stage on the last axis.

    Returns (lo + hi, (lo - hi) * W); the full DFT of x at even bin 2k equals
    the half-length DFT of the first part at k, odd bin 2k+1 the second.
    """
    x = np.asarray(x, dtype=np.complex128)
    l = require_pow2(x.shape[-1])
    if l < 2:
        raise ValueError("need length >= 2 to split")
    half = l // 2
    lo, hi = x[..., :half], x[..., half:]
    w = np.exp(-2j * np.pi * np.arange(half) / l)
    return lo + hi, (lo - hi) * w


def dit_merge(a, b) -> np.ndarray:
    """Invert dif_split: conjugate twiddles plus the 1/2 inverse-path factor."""
    a = np.asarray(a, dtype=np.complex128)
    b = np.asarray(b, dtype=np.complex128)
    if a.shape != b.shape:
        raise ValueError(f"halves must match, got {a.shape} and {b.shape}")
    half = a.shape[-1]
    w_inv = np.exp(2j * np.pi * np.arange(half) / (2 * half))
    bw = b * w_inv
    return np.concatenate([0.5 * (a + bw), 0.5 * (a - bw)], axis=-1)


def _dif_passes(x: np.ndarray) -> np.ndarray:
    """All DiF stages, natural-order input -> bit-reversed-order spectrum."""
    z = np.array(x, dtype=np.complex128, copy=True)
    l = require_pow2(z.shape[-1])
    span = l // 2
    while span >= 1:
        blocks = z.reshape(z.shape[:-1] + (-1, 2, span))
        lo = blocks[..., 0, :].copy()
        hi = blocks[..., 1, :]
        w = np.exp(-2j * np.pi * np.arange(span) / (2 * span))
        blocks[..., 0, :] = lo + hi
        blocks[..., 1, :] = (lo - hi) * w
        span //= 2
    return z


def fft(x) -> np.ndarray:
    """Natural-order radix-2 FFT of the last axis (length a power of two)."""
    return bit_reversal(_dif_passes(x))


def ifft(y) -> np.ndarray:
    """Inverse transform; carries the full 1/l normalization."""
    y = np.asarray(y, dtype=np.complex128)
    l = require_pow2(y.shape[-1])
    return np.conj(fft(np.conj(y))) / l


def fft_conv(x, taps) -> np.ndarray:
    """Causal FIR convolution via zero-padded transforms.

    x: real (..., l); taps: (lh,) shared by all rows or (..., lh) per row.
    Pads to the next power of two >= l + lh - 1 so the circular product
    carries no wraparound, then truncates back to l outputs.
    """
    x = np.asarray(x, dtype=np.float64)
    taps = np.asarray(taps, dtype=np.float64)
    l = x.shape[-1]
    lh = taps.shape[-1]
    size = next_pow2(max(l + lh - 1, 1))
    xp = np.zeros(x.shape[:-1] + (size,))
    xp[..., :l] = x
    hp = np.zeros(taps.shape[:-1] + (size,))
    hp[..., :lh] = taps
    spec = fft(xp) * fft(hp)
    return ifft(spec).real[..., :l]


def circular_conv_oracle(x, h) -> np.ndarray:
    """Literal circular convolution: y[t] = sum_k h[(t-k) mod l] x[k]."""
    x = np.asarray(x)
    h = np.asarray(h)
    l = x.shape[-1]
    if h.shape[-1] != l:
        raise ValueError(f"signal and filter lengths differ: {l} vs {h.shape[-1]}")
    lag = (np.arange(l)[:, None] - np.arange(l)[None, :]) % l
    hmat = h[..., lag]
    return np.einsum("...tk,...k->...t", hmat, x)
