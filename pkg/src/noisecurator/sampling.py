"""Budgeted subset selection from learned sample weights."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

SUM_TOL = 1e-9


@dataclass(frozen=True)
class SubsetBudget:
    size: int
    n: int

    def __post_init__(self):
        if not 1 <= self.size <= self.n:
            raise ValueError(f"budget must satisfy 1 <= D <= N, got D={self.size}, N={self.n}")


def _values(weights) -> np.ndarray:
    return np.asarray(getattr(weights, "values", weights), dtype=np.float64)


def normalize_weights(weights, budget) -> np.ndarray:
    """Rescale weights to inclusion probabilities in [0, 1] summing to ``budget``.

    Proportional scaling can push entries above 1; those are capped and the
    leftover mass is spread proportionally over the uncapped entries until
    the sum matches (water-filling). Order is preserved.
    """
    w = _values(weights)
    budget = int(getattr(budget, "size", budget))
    SubsetBudget(budget, w.size)
    if np.any(w < 0):
        raise ValueError("weights must be non-negative")
    total = w.sum()
    if total <= 0:
        raise ValueError("all weights are zero; nothing to normalize")
    positive = w > 0
    n_pos = int(positive.sum())
    if budget >= n_pos:
        if budget > n_pos:
            warnings.warn(
                f"budget {budget} exceeds the {n_pos} positive weights; returning all of them at probability 1",
                RuntimeWarning,
                stacklevel=2,
            )
        return positive.astype(np.float64)

    out = np.zeros_like(w)
    capped = np.zeros(w.size, dtype=bool)
    while True:
        free = positive & ~capped
        remaining = budget - capped.sum()
        out[free] = remaining * w[free] / w[free].sum()
        over = free & (out > 1.0)
        if not over.any():
            break
        capped |= over
        out[capped] = 1.0
    return out


def sample_subset(probabilities, seed: int = 0) -> np.ndarray:
    """Independent Bernoulli(p_i) inclusion; returns the sorted selected indices."""
    p = _values(probabilities)
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("inclusion probabilities must lie in [0, 1]")
    draws = np.random.default_rng(seed).random(p.size)
    return np.flatnonzero(draws < p)


def top_k(weights, k: int, largest: bool = True) -> np.ndarray:
    """Indices of the ``k`` highest (or lowest) weights; ties go to the earlier index."""
    w = _values(weights)
    if not 0 <= k <= w.size:
        raise ValueError("k must lie in [0, N]")
    order = np.argsort(-w if largest else w, kind="stable")
    return np.sort(order[:k])
