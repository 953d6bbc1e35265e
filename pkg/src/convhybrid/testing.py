"""Shared helpers for randomized verification: input builders and a
central-difference gradient oracle."""

from __future__ import annotations

import numpy as np

from .core import ExplicitFilter, GroupSpec, ImplicitFilter, RegularizedFilter, SeqTensor


def random_seq(rng: np.random.Generator, d: int, length: int, dtype: str = "f64") -> SeqTensor:
    return SeqTensor(rng.standard_normal((d, length)), dtype=dtype)


def random_explicit_groups(rng: np.random.Generator, d: int, group_size: int, lh: int) -> GroupSpec:
    # 1/sqrt(lh) tap scale keeps long-filter f64 accumulation inside 1e-12 tolerances
    n = d // group_size
    return GroupSpec(d, group_size, tuple(
        ExplicitFilter(rng.standard_normal(lh) / np.sqrt(lh)) for _ in range(n)
    ))


def random_mixed_groups(rng: np.random.Generator, d: int, group_size: int, lh: int) -> GroupSpec:
    """Filter bank cycling through the three parameterizations."""
    filters = []
    for g in range(d // group_size):
        kind = g % 3
        if kind == 0:
            filters.append(ExplicitFilter(rng.standard_normal(lh) / np.sqrt(lh)))
        elif kind == 1:
            filters.append(RegularizedFilter(rng.standard_normal(lh) / np.sqrt(lh),
                                             float(rng.uniform(0.01, 2.0)), 2.0))
        else:
            n_poles = 4
            filters.append(ImplicitFilter(rng.standard_normal(n_poles) / n_poles,
                                          rng.uniform(-0.95, 0.95, n_poles), lh))
    return GroupSpec(d, group_size, tuple(filters))


def central_diff(f, x0: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central finite differences of scalar f at x0, elementwise."""
    x0 = np.asarray(x0, dtype=np.float64)
    grad = np.zeros_like(x0)
    flat = grad.ravel()
    base = x0.copy()
    for i in range(base.size):
        old = base.ravel()[i]
        base.ravel()[i] = old + step
        up = f(base)
        base.ravel()[i] = old - step
        down = f(base)
        base.ravel()[i] = old
        flat[i] = (up - down) / (2 * step)
    return grad


def rel_err(a: np.ndarray, b: np.ndarray) -> float:
    """||a - b||_inf scaled by max(||b||_inf, 1)."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    denom = max(float(np.max(np.abs(b))) if b.size else 0.0, 1.0)
    return float(np.max(np.abs(a - b)) / denom) if a.size else 0.0
