"""Gated convolutional sequence operators and stacks of them.

One operator instance computes, for input x of shape (d, l):

    q = conv(q_feat, W_q^T x)        # short per-channel featurizer convs
    k = conv(k_feat, W_k^T x)
    v = conv(v_feat, W_v^T x)
    y = W_out^T (q * conv(inner, k * v))

with * elementwise. The inner filter decides the variant: SE holds short
explicit taps, MR decay-regularized taps, LI an exponential-sum filter
spanning the whole sequence. The conv backend is selectable; all backends
produce the same numbers and exist to cross-check each other.

Projections are dense (d, d) by default; a factored (d, r) @ (r, d) form is
accepted anywhere a projection is.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Iterator, Union

import numpy as np

from . import fft as fftmod
from .blockconv import block_conv, spill_count, two_stage_backward, two_stage_forward_saved
from .core import (
    ExplicitFilter,
    FilterSpec,
    GroupSpec,
    ImplicitFilter,
    RegularizedFilter,
    SeqTensor,
    causal_conv_input_grad,
    causal_conv_taps_grad,
    direct_causal_conv,
    materialize_filter,
)

VARIANTS = ("SE", "MR", "LI")
BACKENDS = ("direct", "blocked", "fft")
MAX_SHORT_FILTER = 14

Projection = Union[np.ndarray, tuple]


def _as_projection(p, width: int, name: str) -> Projection:
    if isinstance(p, tuple):
        if len(p) != 2:
            raise ValueError(f"factored projection {name} must be a (left, right) pair")
        left = np.asarray(p[0], dtype=np.float64)
        right = np.asarray(p[1], dtype=np.float64)
        if left.ndim != 2 or right.ndim != 2 or left.shape[0] != width or right.shape[1] != width \
                or left.shape[1] != right.shape[0]:
            raise ValueError(f"factored projection {name} needs shapes (d, r), (r, d) with d={width}")
        return (left, right)
    arr = np.asarray(p, dtype=np.float64)
    if arr.shape != (width, width):
        raise ValueError(f"projection {name} must be ({width}, {width}), got {arr.shape}")
    return arr


def projection_dense(p: Projection) -> np.ndarray:
    return p[0] @ p[1] if isinstance(p, tuple) else p


def _check_feat(groups: GroupSpec, width: int, name: str) -> None:
    if groups.channels != width:
        raise ValueError(f"{name} covers {groups.channels} channels, operator width is {width}")
    for f in groups.filters:
        if not isinstance(f, ExplicitFilter):
            raise ValueError(f"{name} filters must be explicit short taps")
    if groups.filter_len > MAX_SHORT_FILTER:
        raise ValueError(f"{name} filter length {groups.filter_len} exceeds short-filter cap {MAX_SHORT_FILTER}")


_INNER_KIND = {"SE": ExplicitFilter, "MR": RegularizedFilter, "LI": ImplicitFilter}


@dataclass(frozen=True)
class HyenaConfig:
    """One operator instance: projections, featurizers, inner filter bank."""

    variant: str
    width: int
    w_q: Projection
    w_k: Projection
    w_v: Projection
    w_out: Projection
    q_feat: GroupSpec
    k_feat: GroupSpec
    v_feat: GroupSpec
    inner: GroupSpec
    block_size: int = 16
    backend: str = "blocked"

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.backend not in BACKENDS:
            raise ValueError(f"backend must be one of {BACKENDS}, got {self.backend!r}")
        if self.width < 1:
            raise ValueError("width must be >= 1")
        if self.block_size < 1:
            raise ValueError("block_size must be >= 1")
        for name in ("w_q", "w_k", "w_v", "w_out"):
            object.__setattr__(self, name, _as_projection(getattr(self, name), self.width, name))
        for name in ("q_feat", "k_feat", "v_feat"):
            _check_feat(getattr(self, name), self.width, name)
        if self.inner.channels != self.width:
            raise ValueError(f"inner filters cover {self.inner.channels} channels, width is {self.width}")
        kind = _INNER_KIND[self.variant]
        for f in self.inner.filters:
            if not isinstance(f, kind):
                raise ValueError(f"variant {self.variant} requires {kind.__name__} inner filters, "
                                 f"got {type(f).__name__}")
        if self.variant == "SE" and self.inner.filter_len > MAX_SHORT_FILTER:
            raise ValueError(f"SE inner filter length {self.inner.filter_len} exceeds {MAX_SHORT_FILTER}")


def _featurize(x: np.ndarray, proj: Projection, groups: GroupSpec, dtype: str) -> tuple[np.ndarray, np.ndarray]:
    """Channel projection followed by the short featurizer conv; returns (projected, featurized)."""
    a = projection_dense(proj).T @ x
    b = direct_causal_conv(SeqTensor(a, dtype=dtype), groups).data
    return a, np.asarray(b, dtype=np.float64)


def _inner_conv(u: np.ndarray, cfg: HyenaConfig, dtype: str) -> np.ndarray:
    seq = SeqTensor(u, dtype=dtype)
    if cfg.backend == "direct":
        return np.asarray(direct_causal_conv(seq, cfg.inner).data, dtype=np.float64)
    if cfg.backend == "blocked":
        return np.asarray(block_conv(seq, cfg.inner, cfg.block_size).data, dtype=np.float64)
    return fftmod.fft_conv(u, cfg.inner.taps_per_channel())


@dataclass
class HyenaSaved:
    """Forward intermediates kept for the backward pass."""

    cfg: HyenaConfig
    x: np.ndarray
    proj_q: np.ndarray
    proj_k: np.ndarray
    proj_v: np.ndarray
    q: np.ndarray
    k: np.ndarray
    v: np.ndarray
    gated: np.ndarray  # k * v
    conv_out: np.ndarray  # conv(inner, k * v)
    mixed: np.ndarray  # q * conv_out
    ts_saved: object  # TwoStageSaved when the two-stage kernel ran the inner conv
    dtype: str


def hyena_forward(x: SeqTensor, cfg: HyenaConfig) -> SeqTensor:
    y, _ = hyena_forward_saved(x, cfg)
    return y


def hyena_forward_saved(x: SeqTensor, cfg: HyenaConfig) -> tuple[SeqTensor, HyenaSaved]:
    if x.channels != cfg.width:
        raise ValueError(f"input has {x.channels} channels, operator width is {cfg.width}")
    if cfg.variant == "LI" and cfg.inner.filter_len != x.length:
        raise ValueError(
            f"LI inner filter length {cfg.inner.filter_len} must equal the sequence length {x.length}"
        )
    xd = np.asarray(x.data, dtype=np.float64)
    pq, q = _featurize(xd, cfg.w_q, cfg.q_feat, x.dtype)
    pk, k = _featurize(xd, cfg.w_k, cfg.k_feat, x.dtype)
    pv, v = _featurize(xd, cfg.w_v, cfg.v_feat, x.dtype)

    ts_saved = None
    if cfg.backend == "blocked" and spill_count(cfg.inner.filter_len, cfg.block_size) <= 1:
        mixed_seq, ts_saved = two_stage_forward_saved(
            SeqTensor(v, dtype=x.dtype), cfg.inner, cfg.block_size,
            q=SeqTensor(q, dtype=x.dtype), k=SeqTensor(k, dtype=x.dtype),
        )
        gated = ts_saved.gated_input
        conv_out = ts_saved.conv_out
        mixed = np.asarray(mixed_seq.data, dtype=np.float64)
    else:
        gated = k * v
        conv_out = _inner_conv(gated, cfg, x.dtype)
        mixed = q * conv_out

    y = projection_dense(cfg.w_out).T @ mixed
    saved = HyenaSaved(cfg, xd, pq, pk, pv, q, k, v, gated, conv_out, mixed, ts_saved, x.dtype)
    return SeqTensor(y, dtype=x.dtype), saved


def filter_param_grads(spec: FilterSpec, dtaps: np.ndarray) -> dict[str, np.ndarray]:
    """Pull a tap-space gradient back to the filter's own parameters."""
    if isinstance(spec, ExplicitFilter):
        return {"taps": dtaps.copy()}
    if isinstance(spec, RegularizedFilter):
        t = np.arange(spec.length, dtype=np.float64)
        return {"taps_hat": dtaps * spec.base ** (-spec.decay_rate * t)}
    if isinstance(spec, ImplicitFilter):
        t = np.arange(spec.length, dtype=np.float64)
        powers = spec.poles[None, :] ** t[:, None]  # (lh, n)
        d_res = powers.T @ dtaps
        # d h_t / d pole = residue * t * pole^(t-1); the t=0 row contributes nothing
        tp = np.zeros_like(powers)
        if spec.length > 1:
            tp[1:] = t[1:, None] * powers[:-1]
        d_pole = (dtaps @ tp) * spec.residues
        return {"residues": d_res, "poles": d_pole}
    raise TypeError(f"not a filter spec: {type(spec).__name__}")


@dataclass
class HyenaGrads:
    dx: np.ndarray
    dw_q: object
    dw_k: object
    dw_v: object
    dw_out: object
    # role -> list over groups of {param name -> gradient array}
    filters: dict


def _projection_grad(proj: Projection, d_dense: np.ndarray):
    if isinstance(proj, tuple):
        left, right = proj
        return (d_dense @ right.T, left.T @ d_dense)
    return d_dense


def _feat_backward(
    grad_out: np.ndarray,
    projected: np.ndarray,
    x: np.ndarray,
    proj: Projection,
    groups: GroupSpec,
) -> tuple[np.ndarray, object, list]:
    """Backward through conv(feat, proj^T x): returns (dx term, dproj, filter grads)."""
    dtaps = causal_conv_taps_grad(grad_out, projected, groups)
    da = causal_conv_input_grad(grad_out, groups.taps_per_channel())
    d_dense = x @ da.T
    dx_term = projection_dense(proj) @ da
    fgrads = [filter_param_grads(groups.filters[g], dtaps[g]) for g in range(groups.n_groups)]
    return dx_term, _projection_grad(proj, d_dense), fgrads


def hyena_backward(saved: HyenaSaved, dy) -> HyenaGrads:
    """Chain rule over the whole operator; covers projections and all filter kinds."""
    if not isinstance(saved, HyenaSaved):
        raise ValueError("backward needs the HyenaSaved context from hyena_forward_saved")
    cfg = saved.cfg
    dy = dy.data if isinstance(dy, SeqTensor) else np.asarray(dy, dtype=np.float64)
    if dy.shape != saved.mixed.shape:
        raise ValueError(f"dy shape {dy.shape} does not match forward output {saved.mixed.shape}")

    out_dense = projection_dense(cfg.w_out)
    dmixed = out_dense @ dy
    dw_out = _projection_grad(cfg.w_out, saved.mixed @ dy.T)

    if saved.ts_saved is not None:
        tg = two_stage_backward(saved.ts_saved, dmixed)
        dq, dk, dv = tg.dq, tg.dk, tg.dv
        dtaps_inner = tg.dtaps
    else:
        dq = dmixed * saved.conv_out
        dconv = dmixed * saved.q
        dtaps_inner = causal_conv_taps_grad(dconv, saved.gated, cfg.inner)
        dgated = causal_conv_input_grad(dconv, cfg.inner.taps_per_channel())
        dk = dgated * saved.v
        dv = dgated * saved.k

    inner_fgrads = [filter_param_grads(cfg.inner.filters[g], dtaps_inner[g])
                    for g in range(cfg.inner.n_groups)]

    dx = np.zeros_like(saved.x)
    dx_q, dw_q, q_fgrads = _feat_backward(dq, saved.proj_q, saved.x, cfg.w_q, cfg.q_feat)
    dx_k, dw_k, k_fgrads = _feat_backward(dk, saved.proj_k, saved.x, cfg.w_k, cfg.k_feat)
    dx_v, dw_v, v_fgrads = _feat_backward(dv, saved.proj_v, saved.x, cfg.w_v, cfg.v_feat)
    dx += dx_q + dx_k + dx_v

    return HyenaGrads(
        dx=dx, dw_q=dw_q, dw_k=dw_k, dw_v=dw_v, dw_out=dw_out,
        filters={"q_feat": q_fgrads, "k_feat": k_fgrads, "v_feat": v_fgrads, "inner": inner_fgrads},
    )


# ---------------------------------------------------------------------------
# parameter traversal: shared by finite-difference checks and the trainer

def iter_params(cfg: HyenaConfig) -> Iterator[tuple[tuple, np.ndarray]]:
    """Yield (path, array) for every learnable parameter leaf of a config."""
    for name in ("w_q", "w_k", "w_v", "w_out"):
        proj = getattr(cfg, name)
        if isinstance(proj, tuple):
            yield (name, "left"), proj[0]
            yield (name, "right"), proj[1]
        else:
            yield (name,), proj
    for role in ("q_feat", "k_feat", "v_feat", "inner"):
        groups: GroupSpec = getattr(cfg, role)
        for g, f in enumerate(groups.filters):
            if isinstance(f, ExplicitFilter):
                yield (role, g, "taps"), f.taps
            elif isinstance(f, RegularizedFilter):
                yield (role, g, "taps_hat"), f.taps_hat
            elif isinstance(f, ImplicitFilter):
                yield (role, g, "residues"), f.residues
                yield (role, g, "poles"), f.poles


def grad_for_path(grads: HyenaGrads, path: tuple) -> np.ndarray:
    if path[0].startswith("w_"):
        g = getattr(grads, "d" + path[0])
        if len(path) == 2:
            return g[0] if path[1] == "left" else g[1]
        return g
    role, idx, leaf = path
    return grads.filters[role][idx][leaf]


def _rebuild_filter(f: FilterSpec, leaf: str, value: np.ndarray) -> FilterSpec:
    if isinstance(f, ExplicitFilter):
        return ExplicitFilter(value)
    if isinstance(f, RegularizedFilter):
        return RegularizedFilter(value, f.decay_rate, f.base)
    if leaf == "residues":
        return ImplicitFilter(value, f.poles, f.length)
    return ImplicitFilter(f.residues, value, f.length)


def update_param(cfg: HyenaConfig, path: tuple, value: np.ndarray) -> HyenaConfig:
    """Functional single-leaf update; returns a new config."""
    if path[0].startswith("w_"):
        proj = getattr(cfg, path[0])
        if len(path) == 2:
            proj = (value, proj[1]) if path[1] == "left" else (proj[0], value)
        else:
            proj = value
        return replace(cfg, **{path[0]: proj})
    role, idx, leaf = path
    groups: GroupSpec = getattr(cfg, role)
    filters = list(groups.filters)
    filters[idx] = _rebuild_filter(filters[idx], leaf, value)
    return replace(cfg, **{role: GroupSpec(groups.channels, groups.group_size, tuple(filters))})


# ---------------------------------------------------------------------------
# layouts

@dataclass(frozen=True)
class LayoutSpec:
    """Variant pattern repeated `depth` times with one config per layer."""

    pattern: tuple
    depth: int
    layers: tuple

    def __post_init__(self):
        pattern = tuple(self.pattern)
        layers = tuple(self.layers)
        if not pattern:
            raise ValueError("pattern must be nonempty")
        for v in pattern:
            if v not in VARIANTS:
                raise ValueError(f"unknown variant {v!r} in pattern")
        if self.depth < 1:
            raise ValueError("depth must be >= 1")
        if len(layers) != len(pattern) * self.depth:
            raise ValueError(
                f"need {len(pattern) * self.depth} layer configs "
                f"(pattern {len(pattern)} x depth {self.depth}), got {len(layers)}"
            )
        for i, cfg in enumerate(layers):
            want = pattern[i % len(pattern)]
            if cfg.variant != want:
                raise ValueError(f"layer {i} has variant {cfg.variant}, pattern expects {want}")
        object.__setattr__(self, "pattern", pattern)
        object.__setattr__(self, "layers", layers)


@dataclass(frozen=True)
class OperatorStack:
    layers: tuple
    residual: bool = False


def build_layout(spec: LayoutSpec, residual: bool = False) -> OperatorStack:
    widths = {cfg.width for cfg in spec.layers}
    if len(widths) != 1:
        raise ValueError(f"layer widths differ: {sorted(widths)}")
    return OperatorStack(tuple(spec.layers), residual=residual)


def layout_forward(x: SeqTensor, stack: OperatorStack) -> SeqTensor:
    y, _ = layout_forward_saved(x, stack)
    return y


def layout_forward_saved(x: SeqTensor, stack: OperatorStack) -> tuple[SeqTensor, list]:
    saveds = []
    cur = x
    for cfg in stack.layers:
        out, saved = hyena_forward_saved(cur, cfg)
        saveds.append(saved)
        cur = SeqTensor(cur.data + out.data, dtype=x.dtype) if stack.residual else out
    return cur, saveds


def layout_backward(stack: OperatorStack, saveds: list, dy) -> tuple[np.ndarray, list]:
    """Gradient through the whole stack; returns (dx, per-layer HyenaGrads)."""
    dcur = dy.data if isinstance(dy, SeqTensor) else np.asarray(dy, dtype=np.float64)
    layer_grads: list = [None] * len(stack.layers)
    for i in range(len(stack.layers) - 1, -1, -1):
        g = hyena_backward(saveds[i], dcur)
        layer_grads[i] = g
        dcur = dcur + g.dx if stack.residual else g.dx
    return dcur, layer_grads


# ---------------------------------------------------------------------------
# seeded builders (convenience init, not a training-grade recipe)

DEFAULT_FEATURIZER_LEN = 7
DEFAULT_SE_LEN = 7
DEFAULT_MR_LEN = 128
DEFAULT_LI_POLES = 8
DECAY_SWEEP = (0.01, 2.0)  # decay rates spread linearly over groups


def _rand_taps(rng: np.random.Generator, lh: int) -> np.ndarray:
    return rng.standard_normal(lh) / np.sqrt(lh)


def _explicit_bank(rng, width: int, group_size: int, lh: int) -> GroupSpec:
    n = width // group_size
    return GroupSpec(width, group_size, tuple(ExplicitFilter(_rand_taps(rng, lh)) for _ in range(n)))


def make_inner_bank(
    variant: str,
    width: int,
    group_size: int,
    rng: np.random.Generator,
    filter_len: int | None = None,
    seq_len: int | None = None,
    n_poles: int = DEFAULT_LI_POLES,
    decay_base: float = 2.0,
) -> GroupSpec:
    """Inner filter bank for a variant, with the MR decay rates swept across groups."""
    n = width // group_size
    if variant == "SE":
        lh = DEFAULT_SE_LEN if filter_len is None else filter_len
        return _explicit_bank(rng, width, group_size, lh)
    if variant == "MR":
        lh = DEFAULT_MR_LEN if filter_len is None else filter_len
        rates = np.linspace(DECAY_SWEEP[0], DECAY_SWEEP[1], n)
        return GroupSpec(width, group_size, tuple(
            RegularizedFilter(_rand_taps(rng, lh), float(rates[g]), decay_base) for g in range(n)
        ))
    if variant == "LI":
        if seq_len is None:
            raise ValueError("LI inner filters need the sequence length")
        filters = []
        for _ in range(n):
            poles = rng.uniform(-0.95, 0.95, size=n_poles)
            residues = rng.standard_normal(n_poles) / n_poles
            filters.append(ImplicitFilter(residues, poles, seq_len))
        return GroupSpec(width, group_size, tuple(filters))
    raise ValueError(f"variant must be one of {VARIANTS}, got {variant!r}")


def make_hyena_config(
    variant: str,
    width: int,
    rng: np.random.Generator,
    seq_len: int | None = None,
    group_size: int = 1,
    featurizer_len: int = DEFAULT_FEATURIZER_LEN,
    inner_len: int | None = None,
    block_size: int = 16,
    backend: str = "blocked",
    n_poles: int = DEFAULT_LI_POLES,
) -> HyenaConfig:
    scale = 1.0 / np.sqrt(width)
    projs = [rng.standard_normal((width, width)) * scale for _ in range(4)]
    return HyenaConfig(
        variant=variant,
        width=width,
        w_q=projs[0], w_k=projs[1], w_v=projs[2], w_out=projs[3],
        q_feat=_explicit_bank(rng, width, group_size, featurizer_len),
        k_feat=_explicit_bank(rng, width, group_size, featurizer_len),
        v_feat=_explicit_bank(rng, width, group_size, featurizer_len),
        inner=make_inner_bank(variant, width, group_size, rng,
                              filter_len=inner_len, seq_len=seq_len, n_poles=n_poles),
        block_size=block_size,
        backend=backend,
    )


def make_layout(
    pattern,
    depth: int,
    width: int,
    rng: np.random.Generator,
    seq_len: int | None = None,
    **cfg_kw,
) -> LayoutSpec:
    pattern = tuple(pattern)
    layers = tuple(
        make_hyena_config(pattern[i % len(pattern)], width, rng, seq_len=seq_len, **cfg_kw)
        for i in range(len(pattern) * depth)
    )
    return LayoutSpec(pattern, depth, layers)


def identity_config(
    variant: str = "SE",
    width: int = 1,
    inner: GroupSpec | None = None,
    backend: str = "direct",
    block_size: int = 16,
) -> HyenaConfig:
    """Identity projections and unit featurizers: y collapses to conv(inner, x*x)*x style forms."""
    eye = np.eye(width)
    unit = GroupSpec(width, width, (ExplicitFilter(np.array([1.0])),))
    if inner is None:
        inner = unit
    return HyenaConfig(
        variant=variant, width=width,
        w_q=eye, w_k=eye.copy(), w_v=eye.copy(), w_out=eye.copy(),
        q_feat=unit, k_feat=unit, v_feat=unit,
        inner=inner, block_size=block_size, backend=backend,
    )
