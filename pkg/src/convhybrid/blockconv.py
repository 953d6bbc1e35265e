"""Blocked causal convolution via banded-Toeplitz factors.

Splitting the dense lower-triangular convolution matrix into block_size-sized
tiles leaves a banded block-Toeplitz structure: block row n of the output is

    y_n = sum_{k=0..min(n,K)} B_k @ x_{n-k},   B_k[i, j] = h[k*block_size + i - j]

with taps outside [0, filter_len) masked to zero and K = ceil((filter_len-1) /
block_size) spill factors beyond B_0. When the filter fits in one spill factor
(filter_len <= block_size + 1) the sum collapses to a two-term kernel
y_n = B_0 x_n + B_1 x_{n-1}, which is the fast path here, with optional
elementwise pre/post gates. The chunk-parallel variant computes the same
numbers with all chunks stacked into a single product so no chunk depends on
another within a stage.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .core import GroupSpec, SeqTensor, materialize_filter


class TwoStageIneligibleError(ValueError):
    """Filter needs more than one spill factor; route to block_conv instead."""


@dataclass
class MultiplyCounter:
    """Tallies scalar multiplies performed by instrumented matrix products."""

    multiplies: int = 0

    def add_matmul(self, m: int, k: int, n: int) -> None:
        self.multiplies += m * k * n


@dataclass(frozen=True)
class ToeplitzFactors:
    """Banded block factors of a causal filter at one block size."""

    blocks: np.ndarray  # (spill_count + 1, block_size, block_size)
    block_size: int
    filter_len: int

    @property
    def spill_count(self) -> int:
        return self.blocks.shape[0] - 1


def spill_count(filter_len: int, block_size: int) -> int:
    """Factors needed past the diagonal one: ceil((filter_len - 1) / block_size)."""
    return math.ceil((filter_len - 1) / block_size)


def build_factors(taps, block_size: int) -> ToeplitzFactors:
    taps = np.asarray(taps, dtype=np.float64)
    if taps.ndim != 1 or taps.size < 1:
        raise ValueError("need a nonempty 1-d tap vector")
    if block_size < 1:
        raise ValueError(f"block_size must be >= 1, got {block_size}")
    lh = taps.size
    k_count = spill_count(lh, block_size)
    i = np.arange(block_size)[:, None]
    j = np.arange(block_size)[None, :]
    blocks = np.zeros((k_count + 1, block_size, block_size))
    for k in range(k_count + 1):
        lag = k * block_size + i - j
        valid = (lag >= 0) & (lag < lh)
        blocks[k][valid] = taps[lag[valid]]
    return ToeplitzFactors(blocks, block_size, lh)


def assemble_toeplitz(factors: ToeplitzFactors, length: int) -> np.ndarray:
    """Lay the factors on block diagonals; equals the dense Toeplitz matrix."""
    lb = factors.block_size
    n = math.ceil(length / lb)
    full = np.zeros((n * lb, n * lb))
    for row in range(n):
        for k in range(min(row, factors.spill_count) + 1):
            col = row - k
            full[row * lb : (row + 1) * lb, col * lb : (col + 1) * lb] = factors.blocks[k]
    return full[:length, :length]


def _chunk(arr: np.ndarray, block_size: int) -> np.ndarray:
    """(d, l) -> (n_chunks, block_size, d) with zero padding on the tail."""
    d, length = arr.shape
    n = math.ceil(length / block_size)
    padded = np.zeros((d, n * block_size), dtype=arr.dtype)
    padded[:, :length] = arr
    return padded.reshape(d, n, block_size).transpose(1, 2, 0)


def _unchunk(chunks: np.ndarray, length: int) -> np.ndarray:
    n, block_size, d = chunks.shape
    return chunks.transpose(2, 0, 1).reshape(d, n * block_size)[:, :length]


def block_conv(x: SeqTensor, groups: GroupSpec, block_size: int) -> SeqTensor:
    """General blocked path: handles any filter length via K spill factors."""
    if x.channels != groups.channels:
        raise ValueError(f"input has {x.channels} channels, grouping expects {groups.channels}")
    if block_size < 1:
        raise ValueError(f"block_size must be >= 1, got {block_size}")
    out = np.empty((x.channels, x.length))
    for g in range(groups.n_groups):
        sl = slice(g * groups.group_size, (g + 1) * groups.group_size)
        factors = build_factors(materialize_filter(groups.filters[g]), block_size)
        chunks = _chunk(np.asarray(x.data[sl], dtype=np.float64), block_size)
        acc = np.zeros_like(chunks)
        for k in range(min(factors.spill_count, chunks.shape[0] - 1) + 1):
            if k == 0:
                acc += factors.blocks[0] @ chunks
            else:
                acc[k:] += factors.blocks[k] @ chunks[:-k]
        out[sl] = _unchunk(acc, x.length)
    return SeqTensor(out, dtype=x.dtype)


def _require_two_stage(filter_len: int, block_size: int) -> None:
    if spill_count(filter_len, block_size) > 1:
        raise TwoStageIneligibleError(
            f"filter_len {filter_len} needs {spill_count(filter_len, block_size)} spill factors "
            f"at block_size {block_size}; the two-stage kernel holds one — use block_conv"
        )


def _two_factor(taps: np.ndarray, block_size: int) -> tuple[np.ndarray, np.ndarray]:
    factors = build_factors(taps, block_size)
    b0 = factors.blocks[0]
    b1 = factors.blocks[1] if factors.spill_count >= 1 else np.zeros_like(b0)
    return b0, b1


@dataclass
class TwoStageSaved:
    """Forward context retained for the backward pass."""

    v: SeqTensor
    q: SeqTensor | None
    k: SeqTensor | None
    groups: GroupSpec
    block_size: int
    gated_input: np.ndarray  # k*v (or v), the array that actually hit the conv
    conv_out: np.ndarray  # conv result before the output gate


@dataclass
class TwoStageGrads:
    dv: np.ndarray
    dq: np.ndarray | None
    dk: np.ndarray | None
    dtaps: np.ndarray  # (n_groups, filter_len)


def _two_stage_core(
    u: np.ndarray,
    groups: GroupSpec,
    block_size: int,
    counter: MultiplyCounter | None,
) -> np.ndarray:
    """Ungated two-factor conv of (d, l) array u; both GEMMs always run."""
    d, length = u.shape
    out = np.empty((d, length))
    for g in range(groups.n_groups):
        sl = slice(g * groups.group_size, (g + 1) * groups.group_size)
        b0, b1 = _two_factor(materialize_filter(groups.filters[g]), block_size)
        chunks = _chunk(u[sl], block_size)
        prev = np.concatenate([np.zeros_like(chunks[:1]), chunks[:-1]])
        if counter is not None:
            n, lb, dg = chunks.shape
            counter.add_matmul(lb, lb, dg * n)
            counter.add_matmul(lb, lb, dg * n)
        out[sl] = _unchunk(b0 @ chunks + b1 @ prev, length)
    return out


def two_stage_forward(
    v: SeqTensor,
    groups: GroupSpec,
    block_size: int,
    q: SeqTensor | None = None,
    k: SeqTensor | None = None,
    counter: MultiplyCounter | None = None,
) -> SeqTensor:
    """Two-factor blocked conv with optional pre-gate k and post-gate q.

    Computes y = q * conv(k * v) elementwise in the gates; either gate may be
    omitted. Requires filter_len <= block_size + 1.
    """
    y, _ = two_stage_forward_saved(v, groups, block_size, q=q, k=k, counter=counter)
    return y


def two_stage_forward_saved(
    v: SeqTensor,
    groups: GroupSpec,
    block_size: int,
    q: SeqTensor | None = None,
    k: SeqTensor | None = None,
    counter: MultiplyCounter | None = None,
) -> tuple[SeqTensor, TwoStageSaved]:
    if v.channels != groups.channels:
        raise ValueError(f"input has {v.channels} channels, grouping expects {groups.channels}")
    for name, gate in (("q", q), ("k", k)):
        if gate is not None and (gate.channels, gate.length) != (v.channels, v.length):
            raise ValueError(f"gate {name} shape {(gate.channels, gate.length)} "
                             f"does not match input {(v.channels, v.length)}")
    _require_two_stage(groups.filter_len, block_size)
    u = np.asarray(v.data, dtype=np.float64)
    if k is not None:
        u = u * k.data
    c = _two_stage_core(u, groups, block_size, counter)
    y = c * q.data if q is not None else c
    saved = TwoStageSaved(v, q, k, groups, block_size, u, c)
    return SeqTensor(y, dtype=v.dtype), saved


def two_stage_backward(saved: TwoStageSaved, dy) -> TwoStageGrads:
    """Analytic gradients for the gated two-stage forward.

    Input gradients ride the transposed factors; the filter gradient runs in
    two passes: per-chunk outer products into a partials buffer, then a
    reduction over chunks scattered along the Toeplitz diagonals into taps.
    """
    if not isinstance(saved, TwoStageSaved):
        raise ValueError("backward needs the TwoStageSaved context from two_stage_forward_saved")
    dy = dy.data if isinstance(dy, SeqTensor) else np.asarray(dy, dtype=np.float64)
    if dy.shape != saved.gated_input.shape:
        raise ValueError(f"dy shape {dy.shape} does not match forward shape {saved.gated_input.shape}")
    groups, lb = saved.groups, saved.block_size
    lh = groups.filter_len
    dq = dy * saved.conv_out if saved.q is not None else None
    dc = dy * saved.q.data if saved.q is not None else dy

    du = np.empty_like(saved.gated_input)
    dtaps = np.zeros((groups.n_groups, lh))
    i = np.arange(lb)[:, None]
    j = np.arange(lb)[None, :]
    for g in range(groups.n_groups):
        sl = slice(g * groups.group_size, (g + 1) * groups.group_size)
        b0, b1 = _two_factor(materialize_filter(groups.filters[g]), lb)
        dcc = _chunk(dc[sl], lb)
        dnext = np.concatenate([dcc[1:], np.zeros_like(dcc[:1])])
        du[sl] = _unchunk(b0.T @ dcc + b1.T @ dnext, dy.shape[1])

        uc = _chunk(saved.gated_input[sl], lb)
        uprev = np.concatenate([np.zeros_like(uc[:1]), uc[:-1]])
        # pass 1: per-chunk factor partials, coalesced into one buffer per factor
        partial0 = np.matmul(dcc, uc.transpose(0, 2, 1))
        partial1 = np.matmul(dcc, uprev.transpose(0, 2, 1))
        # pass 2: reduce over chunks, then scatter block diagonals onto taps
        for blk, reduced in ((0, partial0.sum(axis=0)), (1, partial1.sum(axis=0))):
            lag = blk * lb + i - j
            valid = (lag >= 0) & (lag < lh)
            np.add.at(dtaps[g], lag[valid], reduced[valid])

    dk = du * saved.v.data if saved.k is not None else None
    dv = du * saved.k.data if saved.k is not None else du
    return TwoStageGrads(dv=dv, dq=dq, dk=dk, dtaps=dtaps)


def chunk_parallel_forward(
    v: SeqTensor,
    taps,
    block_size: int,
    counter: MultiplyCounter | None = None,
) -> SeqTensor:
    """Two-factor conv with every chunk's products stacked into single GEMMs.

    All chunks sit side by side in the column dimension, so each chunk's
    stage-1 product is independent of every other chunk; chunks are the
    parallelism axis. Applies one shared tap vector to all channels and
    matches the ungated two-stage path exactly.
    """
    taps = np.asarray(taps, dtype=np.float64)
    _require_two_stage(taps.size, block_size)
    b0, b1 = _two_factor(taps, block_size)
    chunks = _chunk(np.asarray(v.data, dtype=np.float64), block_size)
    n, lb, d = chunks.shape
    cols = chunks.transpose(1, 0, 2).reshape(lb, n * d)
    prev = np.concatenate([np.zeros_like(chunks[:1]), chunks[:-1]])
    prev_cols = prev.transpose(1, 0, 2).reshape(lb, n * d)
    if counter is not None:
        counter.add_matmul(lb, lb, n * d)
        counter.add_matmul(lb, lb, n * d)
    out_cols = b0 @ cols + b1 @ prev_cols
    out = _unchunk(out_cols.reshape(lb, n, d).transpose(1, 0, 2), v.length)
    return SeqTensor(out, dtype=v.dtype)


def two_stage_flops(length: int, block_size: int, channels: int) -> int:
    """Multiply count of the dense two-factor path: 2 * lb^2 * d * ceil(l/lb)."""
    if length < 1 or block_size < 1 or channels < 1:
        raise ValueError("length, block_size, and channels must all be >= 1")
    return 2 * block_size * block_size * channels * math.ceil(length / block_size)
