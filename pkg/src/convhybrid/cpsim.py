"""Deterministic simulation of context-parallel convolution schemes.

A SimGroup plays the role of a rank group: every exchange goes through its
message fabric and lands in an ordered log, so tests can assert exact counts
and byte movement. Rank programs are generators yielding Send/Recv/Mark
effects; the default executor steps ranks round-robin in rank order (fully
deterministic), and an optional mode runs one thread per rank against the
same fabric, which must reproduce the outputs and the log multiset.

Schemes simulated over a sequence sharded along time:

  a2a_conv            two all-to-all rounds trade the time split for a channel
                      split so each rank convolves a channel slab over the full
                      sequence with locally stored filters
  a2a_conv_pipelined  the same, channel dimension split into n_pipe segments
  a2a_conv_backward   input gradients, two more all-to-all rounds
  p2p_conv            each rank receives a halo of the last filter_len-1 steps
                      from its predecessor and convolves locally
  p2p_conv_overlapped local conv starts on zero-padded data before the halo
                      arrives; a correction conv fixes the first outputs
  p2p_fft_conv        distributed radix-2 DiF stages + local FFT, pointwise
                      multiply, then the mirrored inverse; circular semantics
"""

from __future__ import annotations

import math
import queue
import threading
from collections import deque
from dataclasses import dataclass, field

import numpy as np

from . import fft as fftmod
from .core import GroupSpec, SeqTensor, causal_conv_input_grad, direct_causal_conv

LAYOUTS = ("sequential", "zigzag")


# ---------------------------------------------------------------------------
# message fabric

@dataclass(frozen=True)
class Send:
    dst: int
    payload: np.ndarray


@dataclass(frozen=True)
class Recv:
    src: int


@dataclass(frozen=True)
class Mark:
    label: str


@dataclass(frozen=True)
class LogRecord:
    step: int
    scheme: str
    src: int
    dst: int
    elements: int


@dataclass
class SimGroup:
    """Simulated rank group with a logging message fabric."""

    n_ranks: int
    mode: str = "sequential"
    message_log: list = field(default_factory=list)
    events: list = field(default_factory=list)  # ("mark"|"recv", rank, detail, step)
    scheme_elements: dict = field(default_factory=dict)
    scheme_messages: dict = field(default_factory=dict)
    scheme_rounds: dict = field(default_factory=dict)
    filter_elements: dict = field(default_factory=dict)  # rank -> resident filter values
    max_resident: dict = field(default_factory=dict)  # rank -> max sequence samples held

    def __post_init__(self):
        if self.n_ranks < 1 or (self.n_ranks & (self.n_ranks - 1)) != 0:
            raise ValueError(f"rank count must be a power of two >= 1, got {self.n_ranks}")
        if self.mode not in ("sequential", "threads"):
            raise ValueError(f"mode must be 'sequential' or 'threads', got {self.mode!r}")
        self._lock = threading.Lock()
        self._step = 0

    # -- accounting -------------------------------------------------------

    def _next_step(self) -> int:
        self._step += 1
        return self._step

    def _record_send(self, scheme: str, src: int, dst: int, elements: int) -> None:
        with self._lock:
            rec = LogRecord(self._next_step(), scheme, src, dst, elements)
            self.message_log.append(rec)
            self.scheme_elements[scheme] = self.scheme_elements.get(scheme, 0) + elements
            self.scheme_messages[scheme] = self.scheme_messages.get(scheme, 0) + 1

    def _record_event(self, kind: str, rank: int, detail) -> None:
        with self._lock:
            self.events.append((kind, rank, detail, self._next_step()))

    def count_rounds(self, scheme: str, n: int) -> None:
        self.scheme_rounds[scheme] = self.scheme_rounds.get(scheme, 0) + n

    def note_filters(self, rank: int, elements: int) -> None:
        self.filter_elements[rank] = elements

    def note_resident(self, rank: int, samples: int) -> None:
        self.max_resident[rank] = max(self.max_resident.get(rank, 0), samples)

    def total_elements(self, scheme: str | None = None) -> int:
        if scheme is not None:
            return self.scheme_elements.get(scheme, 0)
        return sum(self.scheme_elements.values())

    def total_messages(self, scheme: str | None = None) -> int:
        if scheme is not None:
            return self.scheme_messages.get(scheme, 0)
        return sum(self.scheme_messages.values())

    def export_log(self, path) -> None:
        """Newline-delimited records: step,scheme,src,dst,elements."""
        with open(path, "w") as fh:
            for rec in self.message_log:
                fh.write(f"{rec.step},{rec.scheme},{rec.src},{rec.dst},{rec.elements}\n")

    # -- execution --------------------------------------------------------

    def run(self, scheme: str, programs: list) -> list:
        """Run one generator program per rank to completion; returns their results."""
        if len(programs) != self.n_ranks:
            raise ValueError(f"need {self.n_ranks} rank programs, got {len(programs)}")
        if self.mode == "threads":
            return self._run_threads(scheme, programs)
        return self._run_sequential(scheme, programs)

    def _handle_send(self, scheme: str, rank: int, eff: Send, deliver) -> None:
        if not isinstance(eff.payload, np.ndarray):
            raise TypeError("message payloads must be numpy arrays")
        if not (0 <= eff.dst < self.n_ranks) or eff.dst == rank:
            raise ValueError(f"rank {rank} cannot send to {eff.dst}")
        self._record_send(scheme, rank, eff.dst, int(eff.payload.size))
        deliver(rank, eff.dst, eff.payload.copy())

    def _run_sequential(self, scheme: str, programs: list) -> list:
        mailbox: dict = {}
        results = [None] * self.n_ranks
        resume = {r: None for r in range(self.n_ranks)}
        waiting: dict = {}
        active = set(range(self.n_ranks))

        def deliver(src, dst, payload):
            mailbox.setdefault((src, dst), deque()).append(payload)

        while active:
            progressed = False
            for rank in sorted(active):
                if rank in waiting:
                    q = mailbox.get((waiting[rank], rank))
                    if not q:
                        continue
                    self._record_event("recv", rank, waiting[rank])
                    resume[rank] = q.popleft()
                    del waiting[rank]
                while True:
                    try:
                        eff = programs[rank].send(resume[rank])
                    except StopIteration as stop:
                        results[rank] = stop.value
                        active.discard(rank)
                        progressed = True
                        break
                    resume[rank] = None
                    if isinstance(eff, Send):
                        self._handle_send(scheme, rank, eff, deliver)
                        progressed = True
                    elif isinstance(eff, Mark):
                        self._record_event("mark", rank, eff.label)
                        progressed = True
                    elif isinstance(eff, Recv):
                        q = mailbox.get((eff.src, rank))
                        if q:
                            self._record_event("recv", rank, eff.src)
                            resume[rank] = q.popleft()
                            progressed = True
                        else:
                            waiting[rank] = eff.src
                            break
                    else:
                        raise TypeError(f"rank {rank} yielded {type(eff).__name__}, "
                                        "expected Send/Recv/Mark")
            if active and not progressed:
                stuck = {r: waiting.get(r) for r in sorted(active)}
                raise RuntimeError(f"deadlock: every active rank is blocked on recv ({stuck})")
        return results

    def _run_threads(self, scheme: str, programs: list) -> list:
        mailboxes = {(s, d): queue.Queue() for s in range(self.n_ranks) for d in range(self.n_ranks)}
        results = [None] * self.n_ranks
        errors = [None] * self.n_ranks

        def deliver(src, dst, payload):
            mailboxes[(src, dst)].put(payload)

        def worker(rank):
            resume = None
            try:
                while True:
                    try:
                        eff = programs[rank].send(resume)
                    except StopIteration as stop:
                        results[rank] = stop.value
                        return
                    resume = None
                    if isinstance(eff, Send):
                        self._handle_send(scheme, rank, eff, deliver)
                    elif isinstance(eff, Mark):
                        self._record_event("mark", rank, eff.label)
                    elif isinstance(eff, Recv):
                        resume = mailboxes[(eff.src, rank)].get(timeout=60)
                        self._record_event("recv", rank, eff.src)
                    else:
                        raise TypeError(f"rank {rank} yielded {type(eff).__name__}")
            except Exception as exc:  # surfaced after join
                errors[rank] = exc

        threads = [threading.Thread(target=worker, args=(r,)) for r in range(self.n_ranks)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        for rank, exc in enumerate(errors):
            if exc is not None:
                raise RuntimeError(f"rank {rank} failed: {exc}") from exc
        return results


# ---------------------------------------------------------------------------
# sharding layouts

@dataclass(frozen=True)
class ShardedSeq:
    """Per-rank (d, l/n_ranks) slices of one sequence."""

    shards: tuple
    layout: str = "sequential"

    def __post_init__(self):
        shards = tuple(np.asarray(s) for s in self.shards)
        if not shards:
            raise ValueError("need at least one shard")
        shape = shards[0].shape
        if any(s.shape != shape for s in shards):
            raise ValueError("all shards must share one shape")
        if self.layout not in LAYOUTS:
            raise ValueError(f"layout must be one of {LAYOUTS}, got {self.layout!r}")
        object.__setattr__(self, "shards", shards)

    @property
    def n_ranks(self) -> int:
        return len(self.shards)

    @property
    def channels(self) -> int:
        return self.shards[0].shape[0]

    @property
    def shard_len(self) -> int:
        return self.shards[0].shape[1]

    @property
    def total_len(self) -> int:
        return self.shard_len * self.n_ranks


def _layout_chunks(layout: str, n_ranks: int) -> list:
    """Chunk ids per rank, in each rank's local time order."""
    if layout == "sequential":
        return [[r] for r in range(n_ranks)]
    return [[r, 2 * n_ranks - 1 - r] for r in range(n_ranks)]


def shard(x: SeqTensor, n_ranks: int, layout: str = "sequential") -> ShardedSeq:
    if layout not in LAYOUTS:
        raise ValueError(f"layout must be one of {LAYOUTS}, got {layout!r}")
    chunks_per_rank = 1 if layout == "sequential" else 2
    divisor = n_ranks * chunks_per_rank
    if x.length % divisor != 0:
        raise ValueError(f"length {x.length} not divisible by {divisor} "
                         f"({layout} layout over {n_ranks} ranks)")
    clen = x.length // divisor
    shards = []
    for ids in _layout_chunks(layout, n_ranks):
        shards.append(np.concatenate([x.data[:, c * clen : (c + 1) * clen] for c in ids], axis=1))
    return ShardedSeq(tuple(shards), layout)


def gather(xs: ShardedSeq) -> SeqTensor:
    chunk_ids = _layout_chunks(xs.layout, xs.n_ranks)
    clen = xs.shard_len // len(chunk_ids[0])
    total = xs.total_len
    out = np.empty((xs.channels, total), dtype=np.float64)
    for rank, ids in enumerate(chunk_ids):
        for i, c in enumerate(ids):
            out[:, c * clen : (c + 1) * clen] = xs.shards[rank][:, i * clen : (i + 1) * clen]
    return SeqTensor(out)


def _natural_cols(layout: str, n_ranks: int, total_len: int) -> np.ndarray:
    """Column index map: assembled (rank-major) position i holds natural column map[i]."""
    chunk_ids = [c for ids in _layout_chunks(layout, n_ranks) for c in ids]
    clen = total_len // len(chunk_ids)
    return np.concatenate([np.arange(c * clen, (c + 1) * clen) for c in chunk_ids])


# ---------------------------------------------------------------------------
# all-to-all schemes

def _slab_groups(groups: GroupSpec, start: int, count: int) -> GroupSpec:
    """Sub-bank for a contiguous channel slab; slab edges must respect groups."""
    if start % groups.group_size != 0 or count % groups.group_size != 0:
        raise ValueError(
            f"channel slab [{start}, {start + count}) splits a filter group of size {groups.group_size}"
        )
    first = start // groups.group_size
    filters = groups.filters[first : first + count // groups.group_size]
    return GroupSpec(count, groups.group_size, filters)


def _a2a_rank_program(rank, n_ranks, local, seg_ranges, layout, total_len, compute):
    """One rank of a (possibly pipelined) all-to-all conv round.

    For each channel segment: scatter my time shard by destination slab,
    gather the full sequence for my slab, run compute, scatter results back
    by destination time shard, gather my output columns.
    """
    m = local.shape[1]
    cols = _natural_cols(layout, n_ranks, total_len)
    out = np.empty_like(local)
    for lo, hi in seg_ranges:
        seg = local[lo:hi]
        slab = (hi - lo) // n_ranks
        pieces = [None] * n_ranks
        for dst in range(n_ranks):
            piece = seg[dst * slab : (dst + 1) * slab]
            if dst == rank:
                pieces[rank] = piece
            else:
                yield Send(dst, piece)
        for src in range(n_ranks):
            if src != rank:
                pieces[src] = yield Recv(src)
        assembled = np.concatenate(pieces, axis=1)  # (slab, total_len), rank-major time order
        natural = np.empty_like(assembled)
        natural[:, cols] = assembled
        result = compute(lo + rank * slab, natural)
        back = result[:, cols]  # natural -> assembled order for resharding
        outs = [None] * n_ranks
        for dst in range(n_ranks):
            piece = back[:, dst * m : (dst + 1) * m]
            if dst == rank:
                outs[rank] = piece
            else:
                yield Send(dst, piece)
        for src in range(n_ranks):
            if src != rank:
                outs[src] = yield Recv(src)
        out[lo:hi] = np.concatenate(outs, axis=0)
    return out


def _a2a_run(xs: ShardedSeq, groups: GroupSpec, grp: SimGroup, n_pipe: int, scheme: str, compute_slab):
    n = grp.n_ranks
    if xs.n_ranks != n:
        raise ValueError(f"sharding spans {xs.n_ranks} ranks, group has {n}")
    d = xs.channels
    if d % n != 0:
        raise ValueError(f"channel count {d} not divisible by {n} ranks")
    if (d // n) % n_pipe != 0:
        raise ValueError(f"per-rank slab {d // n} not divisible by {n_pipe} pipeline segments")
    seg = d // n_pipe
    seg_ranges = [(s * seg, (s + 1) * seg) for s in range(n_pipe)]
    # the slab each rank convolves must cover whole filter groups
    for lo, hi in seg_ranges:
        _slab_groups(groups, lo, (hi - lo) // n)

    def compute(chan_start, natural):
        slab_bank = _slab_groups(groups, chan_start, natural.shape[0])
        return compute_slab(natural, slab_bank)

    for rank in range(n):
        slab_filters = sum(
            _slab_groups(groups, lo + rank * ((hi - lo) // n), (hi - lo) // n).n_groups
            for lo, hi in seg_ranges
        )
        grp.note_filters(rank, slab_filters * groups.filter_len)

    programs = [
        _a2a_rank_program(r, n, xs.shards[r], seg_ranges, xs.layout, xs.total_len, compute)
        for r in range(n)
    ]
    results = grp.run(scheme, programs)
    grp.count_rounds(scheme, 2 * n_pipe)
    return ShardedSeq(tuple(results), xs.layout)


def _slab_forward(natural: np.ndarray, bank: GroupSpec) -> np.ndarray:
    return np.asarray(direct_causal_conv(SeqTensor(natural), bank).data)


def _slab_backward(natural: np.ndarray, bank: GroupSpec) -> np.ndarray:
    return causal_conv_input_grad(np.asarray(natural, dtype=np.float64), bank.taps_per_channel())


@dataclass
class A2ASaved:
    groups: GroupSpec
    layout: str
    n_ranks: int


def a2a_conv(xs: ShardedSeq, groups: GroupSpec, grp: SimGroup) -> ShardedSeq:
    ys, _ = a2a_conv_saved(xs, groups, grp)
    return ys


def a2a_conv_saved(xs: ShardedSeq, groups: GroupSpec, grp: SimGroup):
    if xs.channels != groups.channels:
        raise ValueError(f"input has {xs.channels} channels, grouping expects {groups.channels}")
    ys = _a2a_run(xs, groups, grp, 1, "a2a_conv", _slab_forward)
    return ys, A2ASaved(groups, xs.layout, xs.n_ranks)


def a2a_conv_backward(saved: A2ASaved, dys: ShardedSeq, grp: SimGroup) -> ShardedSeq:
    """Input gradients via two more all-to-all rounds (correlation on the slab)."""
    if not isinstance(saved, A2ASaved):
        raise ValueError("backward needs the A2ASaved context from a2a_conv_saved")
    if dys.n_ranks != saved.n_ranks or dys.layout != saved.layout:
        raise ValueError("gradient sharding does not match the forward sharding")
    return _a2a_run(dys, saved.groups, grp, 1, "a2a_conv", _slab_backward)


def a2a_conv_pipelined(xs: ShardedSeq, groups: GroupSpec, grp: SimGroup, n_pipe: int) -> ShardedSeq:
    if xs.channels != groups.channels:
        raise ValueError(f"input has {xs.channels} channels, grouping expects {groups.channels}")
    if n_pipe < 1:
        raise ValueError(f"n_pipe must be >= 1, got {n_pipe}")
    return _a2a_run(xs, groups, grp, n_pipe, "a2a_conv_pipelined", _slab_forward)


# ---------------------------------------------------------------------------
# point-to-point halo schemes

def _check_p2p(xs: ShardedSeq, groups: GroupSpec, grp: SimGroup) -> int:
    if xs.layout != "sequential":
        raise ValueError("point-to-point schemes need the sequential layout")
    if xs.n_ranks != grp.n_ranks:
        raise ValueError(f"sharding spans {xs.n_ranks} ranks, group has {grp.n_ranks}")
    if xs.channels != groups.channels:
        raise ValueError(f"input has {xs.channels} channels, grouping expects {groups.channels}")
    halo = groups.filter_len - 1
    if xs.shard_len < halo:
        raise ValueError(f"shard length {xs.shard_len} shorter than halo {halo}")
    for rank in range(grp.n_ranks):
        grp.note_filters(rank, groups.n_groups * groups.filter_len)  # full bank everywhere
    return halo


def _p2p_rank_program(rank, n_ranks, local, groups, halo):
    d, m = local.shape
    if halo > 0 and rank < n_ranks - 1:
        yield Send(rank + 1, local[:, m - halo :])
    if halo > 0 and rank > 0:
        left = yield Recv(rank - 1)
    else:
        left = np.zeros((d, halo))
    ext = np.concatenate([left, local], axis=1)
    y = np.asarray(direct_causal_conv(SeqTensor(ext), groups).data)
    return y[:, halo:]


def p2p_conv(xs: ShardedSeq, groups: GroupSpec, grp: SimGroup) -> ShardedSeq:
    """Halo exchange: predecessor ships the last filter_len-1 steps, conv is local."""
    halo = _check_p2p(xs, groups, grp)
    programs = [
        _p2p_rank_program(r, grp.n_ranks, xs.shards[r], groups, halo) for r in range(grp.n_ranks)
    ]
    results = grp.run("p2p_conv", programs)
    return ShardedSeq(tuple(results), "sequential")


def _p2p_overlap_rank_program(rank, n_ranks, local, groups, halo):
    d, m = local.shape
    if halo > 0 and rank < n_ranks - 1:
        yield Send(rank + 1, local[:, m - halo :])
    # local pass runs on zero history before touching any message
    y = np.array(direct_causal_conv(SeqTensor(local), groups).data)  # writable copy
    yield Mark("local_done")
    if halo > 0 and rank > 0:
        left = yield Recv(rank - 1)
        overlap = np.concatenate([left, np.zeros((d, halo))], axis=1)  # (d, 2*halo)
        corr = np.asarray(direct_causal_conv(SeqTensor(overlap), groups).data)
        y[:, :halo] += corr[:, halo:]
    return y


def p2p_conv_overlapped(xs: ShardedSeq, groups: GroupSpec, grp: SimGroup) -> ShardedSeq:
    """p2p with the local pass issued before the halo is consumed.

    The fabric's event trace must show each rank finished its local pass
    before receiving the halo; that ordering is asserted here.
    """
    halo = _check_p2p(xs, groups, grp)
    ev_start = len(grp.events)
    programs = [
        _p2p_overlap_rank_program(r, grp.n_ranks, xs.shards[r], groups, halo)
        for r in range(grp.n_ranks)
    ]
    results = grp.run("p2p_conv_overlapped", programs)
    trace = grp.events[ev_start:]
    for rank in range(1 if halo > 0 else grp.n_ranks, grp.n_ranks):
        local_done = [i for i, (kind, r, label, _) in enumerate(trace)
                      if kind == "mark" and r == rank and label == "local_done"]
        halo_recv = [i for i, (kind, r, src, _) in enumerate(trace)
                     if kind == "recv" and r == rank and src == rank - 1]
        if not local_done or not halo_recv or min(halo_recv) < max(local_done):
            raise AssertionError(f"rank {rank} consumed its halo before the local pass finished")
    return ShardedSeq(tuple(results), "sequential")


# ---------------------------------------------------------------------------
# distributed FFT scheme

def _dfft_stage_params(n_ranks: int, total_len: int, stage: int):
    """Group size, transform length for a 1-based distributed stage."""
    group = n_ranks >> (stage - 1)
    length = total_len >> (stage - 1)
    return group, length


def _dfft_forward_program(rank, grp, local, n_ranks, total_len):
    """Distributed DiF stages then a local FFT; returns this rank's spectrum slice."""
    local = np.asarray(local, dtype=np.complex128)
    m = local.shape[-1]
    grp.note_resident(rank, m)
    stages = int(math.log2(n_ranks))
    for stage in range(1, stages + 1):
        group, length = _dfft_stage_params(n_ranks, total_len, stage)
        half = group // 2
        g = rank % group
        partner = rank + half if g < half else rank - half
        yield Send(partner, local)
        other = yield Recv(partner)
        pos = (g if g < half else g - half) * m + np.arange(m)
        w = np.exp(-2j * np.pi * pos / length)
        if g < half:
            local = local + other  # own slice is in the low half
        else:
            local = (other - local) * w  # own slice is in the high half
        grp.note_resident(rank, m)
    return fftmod.fft(local)


def _dfft_inverse_program(rank, grp, local, n_ranks, total_len):
    """Local inverse FFT then the DiT-style stages with conjugate twiddles and 1/2."""
    local = fftmod.ifft(np.asarray(local, dtype=np.complex128))
    m = local.shape[-1]
    grp.note_resident(rank, m)
    stages = int(math.log2(n_ranks))
    for stage in range(stages, 0, -1):
        group, length = _dfft_stage_params(n_ranks, total_len, stage)
        half = group // 2
        g = rank % group
        partner = rank + half if g < half else rank - half
        yield Send(partner, local)
        other = yield Recv(partner)
        pos = (g if g < half else g - half) * m + np.arange(m)
        w_inv = np.exp(2j * np.pi * pos / length)
        if g < half:
            local = 0.5 * (local + w_inv * other)  # reconstruct the low half
        else:
            local = 0.5 * (other - w_inv * local)  # reconstruct the high half
        grp.note_resident(rank, m)
    return local


def _check_dfft(xs: ShardedSeq, grp: SimGroup) -> None:
    if xs.layout != "sequential":
        raise ValueError("the distributed FFT needs the sequential layout")
    if xs.n_ranks != grp.n_ranks:
        raise ValueError(f"sharding spans {xs.n_ranks} ranks, group has {grp.n_ranks}")
    fftmod.require_pow2(xs.shard_len)


def p2p_fft_forward(xs: ShardedSeq, grp: SimGroup, scheme: str = "p2p_fft_conv") -> list:
    """Per-rank spectrum slices; bin ownership is bit-reversed across ranks."""
    _check_dfft(xs, grp)
    programs = [
        _dfft_forward_program(r, grp, xs.shards[r], grp.n_ranks, xs.total_len)
        for r in range(grp.n_ranks)
    ]
    out = grp.run(scheme, programs)
    grp.count_rounds(scheme, int(math.log2(grp.n_ranks)))  # one exchange per stage
    return out


def p2p_fft_inverse(spectra: list, grp: SimGroup, scheme: str = "p2p_fft_conv") -> list:
    """Inverse of p2p_fft_forward; restores the original sequential sharding."""
    total_len = spectra[0].shape[-1] * grp.n_ranks
    programs = [
        _dfft_inverse_program(r, grp, spectra[r], grp.n_ranks, total_len)
        for r in range(grp.n_ranks)
    ]
    out = grp.run(scheme, programs)
    grp.count_rounds(scheme, int(math.log2(grp.n_ranks)))
    return out


def p2p_fft_conv(xs: ShardedSeq, h_shards: ShardedSeq, grp: SimGroup) -> ShardedSeq:
    """Circular convolution with both operands sharded along time."""
    _check_dfft(xs, grp)
    _check_dfft(h_shards, grp)
    if h_shards.shards[0].shape != xs.shards[0].shape:
        raise ValueError("filter must be sharded identically to the input")
    for rank in range(grp.n_ranks):
        grp.note_filters(rank, int(h_shards.shards[rank].size))
    x_spec = p2p_fft_forward(xs, grp)
    h_spec = p2p_fft_forward(h_shards, grp)
    prod = [x_spec[r] * h_spec[r] for r in range(grp.n_ranks)]
    out = p2p_fft_inverse(prod, grp)
    return ShardedSeq(tuple(np.asarray(o).real for o in out), "sequential")


def p2p_fft_causal_wrapper(x: SeqTensor, h_taps, n_ranks: int, grp: SimGroup) -> SeqTensor:
    """Causal linear convolution on top of the circular core.

    Pads to twice the next power of two so the circular wrap never touches
    the first l outputs, shards, runs the distributed transform conv, and
    truncates back.
    """
    taps = np.asarray(h_taps, dtype=np.float64)
    if taps.ndim == 1:
        taps = np.broadcast_to(taps, (x.channels, taps.size))
    if taps.shape[0] != x.channels:
        raise ValueError(f"taps cover {taps.shape[0]} channels, input has {x.channels}")
    taps = taps[:, : x.length]  # lags >= l never reach the first l outputs
    size = 2 * fftmod.next_pow2(x.length)
    xp = np.zeros((x.channels, size))
    xp[:, : x.length] = x.data
    hp = np.zeros((x.channels, size))
    hp[:, : taps.shape[1]] = taps
    ys = p2p_fft_conv(shard(SeqTensor(xp), n_ranks), shard(SeqTensor(hp), n_ranks), grp)
    return SeqTensor(gather(ys).data[:, : x.length], dtype=x.dtype)
