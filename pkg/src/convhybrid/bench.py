"""Wall-clock micro-benchmarks sharing one CSV schema with the CLI."""

from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from . import blockconv as bc
from . import fft
from .core import SeqTensor, direct_causal_conv, uniform_groups
from .rand import make_rng

CSV_HEADER = "op,scheme,d,l,lh,lb,ranks,wall_ns,flops,max_abs_err,elements_moved"

BENCH_OPS = ("direct", "block", "two_stage", "chunk_parallel", "fft_conv")


@dataclass
class BenchRecord:
    op: str
    scheme: str | None = None
    d: int | None = None
    l: int | None = None
    lh: int | None = None
    lb: int | None = None
    ranks: int | None = None
    wall_ns: int | None = None
    flops: int | None = None
    max_abs_err: float | None = None
    elements_moved: int | None = None

    def csv_row(self) -> str:
        def cell(v):
            if v is None:
                return ""
            if isinstance(v, float):
                return format(v, ".6e")
            return str(v)

        return ",".join(cell(v) for v in (
            self.op, self.scheme, self.d, self.l, self.lh, self.lb, self.ranks,
            self.wall_ns, self.flops, self.max_abs_err, self.elements_moved))


def time_call(fn, reps: int = 5, warmups: int = 2) -> int:
    """Median wall time in nanoseconds over `reps` timed calls."""
    if reps < 5:
        reps = 5
    for _ in range(warmups):
        fn()
    samples = []
    for _ in range(reps):
        t0 = time.perf_counter_ns()
        fn()
        samples.append(time.perf_counter_ns() - t0)
    samples.sort()
    return samples[len(samples) // 2]


def _runner(op: str, x: SeqTensor, taps: np.ndarray, block_size: int):
    groups = uniform_groups(x.channels, taps)
    if op == "direct":
        return lambda: direct_causal_conv(x, groups).data
    if op == "block":
        return lambda: bc.block_conv(x, groups, block_size).data
    if op == "two_stage":
        return lambda: bc.two_stage_forward(x, groups, block_size).data
    if op == "chunk_parallel":
        return lambda: bc.chunk_parallel_forward(x, taps, block_size).data
    if op == "fft_conv":
        return lambda: fft.fft_conv(x.data, taps)
    raise ValueError(f"unknown bench op {op!r}; pick from {BENCH_OPS}")


def bench_op(op: str, d: int, length: int, filter_len: int, block_size: int,
             seed: int = 0, reps: int = 5) -> BenchRecord:
    rng = make_rng(seed, stream=0)
    x = SeqTensor(rng.standard_normal((d, length)))
    taps = rng.standard_normal(filter_len) / np.sqrt(filter_len)

    fn = _runner(op, x, taps, block_size)
    got = fn()
    err = None
    if op != "direct":
        oracle = direct_causal_conv(x, uniform_groups(d, taps)).data
        err = float(np.max(np.abs(got - oracle)))

    flops = None
    if op in ("two_stage", "chunk_parallel"):
        flops = bc.two_stage_flops(length, block_size, d)

    return BenchRecord(op=op, d=d, l=length, lh=filter_len, lb=block_size,
                       wall_ns=time_call(fn, reps=reps), flops=flops, max_abs_err=err)
