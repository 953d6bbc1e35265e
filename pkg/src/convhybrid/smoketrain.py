"""Tiny end-to-end training loop used as a gradient sanity check.

Fits a two-layer residual stack (one explicit-filter layer, one implicit-
filter layer) to a shift-by-one target on a fixed batch with plain gradient
descent. The point is not the model quality: if every analytic gradient in
the stack is wired correctly, 200 steps must at least halve the loss.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import hyena
from .core import SeqTensor
from .rand import make_rng

POLE_LIMIT = 0.99
CLIP_NORM = 5.0


@dataclass
class TrainResult:
    losses: list[float]
    ratio: float  # final loss / initial loss

    @property
    def initial(self) -> float:
        return self.losses[0]

    @property
    def final(self) -> float:
        return self.losses[-1]


def _clip(g: np.ndarray) -> np.ndarray:
    norm = float(np.linalg.norm(g))
    if norm > CLIP_NORM:
        return g * (CLIP_NORM / norm)
    return g


def _sgd_step(cfg: hyena.HyenaConfig, grads: hyena.HyenaGrads, lr: float) -> hyena.HyenaConfig:
    for path, value in list(hyena.iter_params(cfg)):
        g = hyena.grad_for_path(grads, path)
        # a diverging step would poison every later update; fail loudly instead
        if not np.all(np.isfinite(g)):
            raise FloatingPointError(f"non-finite gradient at {path}")
        new = value - lr * _clip(g)
        if path[-1] == "poles":
            new = np.clip(new, -POLE_LIMIT, POLE_LIMIT)
        cfg = hyena.update_param(cfg, path, new)
    return cfg


def smoke_train(steps: int = 200, seed: int = 0, lr: float = 0.05,
                width: int = 8, length: int = 32) -> TrainResult:
    rng = make_rng(seed, stream=0)
    spec = hyena.make_layout(("SE", "LI"), 1, width, rng, seq_len=length,
                             group_size=1, featurizer_len=3, block_size=8,
                             n_poles=4)
    stack = hyena.build_layout(spec, residual=True)

    x = SeqTensor(rng.standard_normal((width, length)))
    target = np.zeros_like(x.data)
    target[:, 1:] = x.data[:, :-1]

    losses = []
    with np.errstate(over="raise", invalid="raise"):
        for _ in range(max(steps, 1)):
            try:
                y, saveds = hyena.layout_forward_saved(x, stack)
                resid = y.data - target
                loss = float(np.mean(resid * resid))
            except (FloatingPointError, ValueError):
                losses.append(float("inf"))
                break
            losses.append(loss)
            if steps == 0 or lr == 0.0:
                break
            dy = 2.0 * resid / resid.size
            _, layer_grads = hyena.layout_backward(stack, saveds, dy)
            try:
                stack = hyena.OperatorStack(
                    tuple(_sgd_step(cfg, g, lr) for cfg, g in zip(stack.layers, layer_grads)),
                    residual=stack.residual)
            except FloatingPointError:
                losses.append(float("inf"))
                break

    ratio = losses[-1] / losses[0] if losses[0] > 0 else 1.0
    if steps == 0 or lr == 0.0:
        ratio = 1.0
    return TrainResult(losses=losses, ratio=ratio)
