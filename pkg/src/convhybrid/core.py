"""Core sequence/filter types and the direct causal-convolution oracle.

Sequences are (channels, length) real arrays. A filter bank is described by a
GroupSpec: consecutive blocks of `group_size` channels share one filter, so
channel a uses the filter of group a // group_size. Three filter
parameterizations exist; `materialize_filter` turns any of them into a flat
tap vector h with h[t] multiplying the input t steps in the past:

    y[t] = sum_k h[t - k] * x[k],   with h[j] = 0 outside 0 <= j < len(h).

`direct_causal_conv` evaluates that sum directly (no blocking, no transforms)
and serves as the reference the faster paths are checked against.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np

DTYPES = {"f32": np.float32, "f64": np.float64}


class SeqTensor:
    """Immutable (channels, length) batch of real sequences."""

    __slots__ = ("data",)

    def __init__(self, data, dtype: str | None = None):
        if dtype is not None:
            if dtype not in DTYPES:
                raise ValueError(f"dtype must be one of {sorted(DTYPES)}, got {dtype!r}")
            np_dtype = DTYPES[dtype]
        else:
            np_dtype = np.float32 if getattr(data, "dtype", None) == np.float32 else np.float64
        arr = np.array(data, dtype=np_dtype, copy=True)
        if arr.ndim != 2:
            raise ValueError(f"sequence data must be 2-d (channels, length), got shape {arr.shape}")
        if arr.shape[0] < 1 or arr.shape[1] < 1:
            raise ValueError(f"need at least one channel and one sample, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("sequence data must be finite")
        arr.setflags(write=False)
        self.data = arr

    @property
    def channels(self) -> int:
        return self.data.shape[0]

    @property
    def length(self) -> int:
        return self.data.shape[1]

    @property
    def dtype(self) -> str:
        return "f32" if self.data.dtype == np.float32 else "f64"

    def __repr__(self) -> str:
        return f"SeqTensor(channels={self.channels}, length={self.length}, dtype={self.dtype})"


@dataclass(frozen=True)
class ExplicitFilter:
    """Filter stored directly as taps h[0..len-1]."""

    taps: np.ndarray

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.ndim != 1 or taps.size < 1:
            raise ValueError("explicit filter needs a nonempty 1-d tap vector")
        if not np.all(np.isfinite(taps)):
            raise ValueError("filter taps must be finite")
        object.__setattr__(self, "taps", taps)

    @property
    def length(self) -> int:
        return self.taps.size


@dataclass(frozen=True)
class RegularizedFilter:
    """Taps h[t] = taps_hat[t] * base**(-decay_rate * t).

    The exponential envelope damps later taps; base must exceed 1 and
    decay_rate must be nonnegative or the envelope would grow.
    """

    taps_hat: np.ndarray
    decay_rate: float
    base: float = 2.0

    def __post_init__(self):
        taps_hat = np.asarray(self.taps_hat, dtype=np.float64)
        if taps_hat.ndim != 1 or taps_hat.size < 1:
            raise ValueError("regularized filter needs a nonempty 1-d tap vector")
        if not np.all(np.isfinite(taps_hat)):
            raise ValueError("filter taps must be finite")
        if not self.base > 1.0:
            raise ValueError(f"decay base must be > 1, got {self.base}")
        if self.decay_rate < 0.0:
            raise ValueError(f"decay rate must be >= 0, got {self.decay_rate}")
        object.__setattr__(self, "taps_hat", taps_hat)

    @property
    def length(self) -> int:
        return self.taps_hat.size


@dataclass(frozen=True)
class ImplicitFilter:
    """Taps h[t] = sum_n residues[n] * poles[n]**t for t = 0..length-1.

    Poles must stay inside or on the unit circle so taps cannot blow up with t.
    """

    residues: np.ndarray
    poles: np.ndarray
    length: int

    def __post_init__(self):
        residues = np.asarray(self.residues, dtype=np.float64)
        poles = np.asarray(self.poles, dtype=np.float64)
        if residues.ndim != 1 or poles.ndim != 1 or residues.shape != poles.shape or residues.size < 1:
            raise ValueError("residues and poles must be matching nonempty 1-d vectors")
        if not (np.all(np.isfinite(residues)) and np.all(np.isfinite(poles))):
            raise ValueError("residues and poles must be finite")
        if np.any(np.abs(poles) > 1.0):
            raise ValueError("pole magnitudes must be <= 1")
        if self.length < 1:
            raise ValueError(f"filter length must be >= 1, got {self.length}")
        object.__setattr__(self, "residues", residues)
        object.__setattr__(self, "poles", poles)


FilterSpec = Union[ExplicitFilter, RegularizedFilter, ImplicitFilter]


def materialize_filter(spec: FilterSpec) -> np.ndarray:
    """Flat float64 tap vector for any filter parameterization."""
    if isinstance(spec, ExplicitFilter):
        return spec.taps.copy()
    if isinstance(spec, RegularizedFilter):
        t = np.arange(spec.length, dtype=np.float64)
        return spec.taps_hat * spec.base ** (-spec.decay_rate * t)
    if isinstance(spec, ImplicitFilter):
        t = np.arange(spec.length, dtype=np.float64)
        # powers[t, n] = poles[n]**t; 0**0 evaluates to 1 so h[0] = sum(residues)
        powers = spec.poles[None, :] ** t[:, None]
        return powers @ spec.residues
    raise TypeError(f"not a filter spec: {type(spec).__name__}")


def filter_length(spec: FilterSpec) -> int:
    if isinstance(spec, (ExplicitFilter, RegularizedFilter, ImplicitFilter)):
        return spec.length
    raise TypeError(f"not a filter spec: {type(spec).__name__}")


@dataclass(frozen=True)
class GroupSpec:
    """Channel grouping: d channels in blocks of group_size sharing one filter each."""

    channels: int
    group_size: int
    filters: tuple = field(default=())

    def __post_init__(self):
        if self.channels < 1 or self.group_size < 1:
            raise ValueError("channels and group_size must be >= 1")
        if self.channels % self.group_size != 0:
            raise ValueError(
                f"group_size {self.group_size} does not divide channel count {self.channels}"
            )
        filters = tuple(self.filters)
        if len(filters) != self.channels // self.group_size:
            raise ValueError(
                f"need {self.channels // self.group_size} filters for "
                f"{self.channels} channels in groups of {self.group_size}, got {len(filters)}"
            )
        lengths = {filter_length(f) for f in filters}
        if len(lengths) > 1:
            raise ValueError(f"all groups must share one filter length, got {sorted(lengths)}")
        object.__setattr__(self, "filters", filters)

    @property
    def n_groups(self) -> int:
        return self.channels // self.group_size

    @property
    def filter_len(self) -> int:
        return filter_length(self.filters[0])

    def group_of(self, channel: int) -> int:
        return channel // self.group_size

    def materialized(self) -> np.ndarray:
        """(n_groups, filter_len) tap matrix."""
        return np.stack([materialize_filter(f) for f in self.filters])

    def taps_per_channel(self) -> np.ndarray:
        """(channels, filter_len) tap matrix with each group's taps repeated."""
        return np.repeat(self.materialized(), self.group_size, axis=0)


def uniform_groups(channels: int, taps) -> GroupSpec:
    """Every channel shares the same explicit taps (a single group)."""
    return GroupSpec(channels, channels, (ExplicitFilter(np.asarray(taps, dtype=np.float64)),))


def direct_causal_conv(x: SeqTensor, groups: GroupSpec) -> SeqTensor:
    """Reference causal FIR: per channel, y[t] = sum_k h[t-k] x[k].

    Direct summation only; this is the oracle the blocked and transform
    paths are verified against.
    """
    if x.channels != groups.channels:
        raise ValueError(f"input has {x.channels} channels, grouping expects {groups.channels}")
    taps = groups.materialized()
    out = np.empty_like(x.data, dtype=np.float64)
    for ch in range(x.channels):
        h = taps[groups.group_of(ch)]
        out[ch] = np.convolve(x.data[ch], h)[: x.length]
    y = SeqTensor(out, dtype=x.dtype)
    return y


def full_toeplitz(h, length: int) -> np.ndarray:
    """Dense (length, length) matrix T with T[t, k] = h[t-k], zero off the band.

    Lower triangular with the taps running down the diagonals; multiplying a
    sequence by T equals the causal convolution with h.
    """
    h = np.asarray(h, dtype=np.float64)
    if h.ndim != 1 or h.size < 1:
        raise ValueError("need a nonempty 1-d tap vector")
    if length < 1:
        raise ValueError(f"length must be >= 1, got {length}")
    idx = np.arange(length)[:, None] - np.arange(length)[None, :]
    mask = (idx >= 0) & (idx < h.size)
    return np.where(mask, h[np.clip(idx, 0, h.size - 1)], 0.0)


def causal_conv_input_grad(dy: np.ndarray, taps_per_channel: np.ndarray) -> np.ndarray:
    """Adjoint of the causal conv w.r.t. its input: dx[t] = sum_j h[j] dy[t+j]."""
    d, length = dy.shape
    out = np.empty_like(dy)
    for ch in range(d):
        rev = np.convolve(dy[ch][::-1], taps_per_channel[ch])[:length]
        out[ch] = rev[::-1]
    return out


def causal_conv_taps_grad(dy: np.ndarray, x: np.ndarray, groups: GroupSpec) -> np.ndarray:
    """Adjoint w.r.t. taps, summed over each group's channels.

    Returns (n_groups, filter_len) with dh[g, j] = sum_{ch in g} sum_t dy[ch, t] x[ch, t-j].
    """
    d, length = dy.shape
    lh = groups.filter_len
    out = np.zeros((groups.n_groups, lh))
    for ch in range(d):
        corr = np.convolve(dy[ch], x[ch][::-1])
        seg = corr[length - 1 : length - 1 + lh]
        # taps at lags >= length never touch the output; their gradient stays 0
        out[groups.group_of(ch), : seg.size] += seg
    return out
