"""Label-corruption models and the uniform-noise tolerance oracle."""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .data import Dataset, DatasetError
from .losses import per_sample_losses, symmetric_constant
from .model import ClassifierParams, forward
from .training import TrainConfig, train

NOISE_MODELS = ("uniform", "class", "instance")


@dataclass(frozen=True)
class NoiseSpec:
    """One of three corruption models.

    * ``uniform``: flip with probability ``eta`` to a uniformly chosen other class.
    * ``class``: draw the new label from row ``y`` of the row-stochastic ``matrix``.
    * ``instance``: flip with probability ``eta_max * exp(-margin(x) / tau)``, where
      ``margin`` is the distance to a linear separator fit on the original labels.
    """

    model: str = "uniform"
    eta: float = 0.0
    matrix: Optional[tuple] = None
    eta_max: float = 0.0
    tau: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.model not in NOISE_MODELS:
            raise ValueError(f"unknown noise model {self.model!r}; expected one of {NOISE_MODELS}")
        if self.model == "uniform" and not 0.0 <= self.eta < 1.0:
            raise ValueError("uniform noise rate must lie in [0, 1)")
        if self.model == "instance":
            if not 0.0 <= self.eta_max < 1.0:
                raise ValueError("eta_max must lie in [0, 1)")
            if not self.tau > 0:
                raise ValueError("tau must be positive")
        if self.model == "class":
            if self.matrix is None:
                raise ValueError("class-dependent noise needs a transition matrix")
            m = np.asarray(self.matrix, dtype=np.float64)
            if m.ndim != 2 or m.shape[0] != m.shape[1]:
                raise ValueError("transition matrix must be square")
            if np.any(m < 0) or not np.allclose(m.sum(axis=1), 1.0):
                raise ValueError("transition matrix rows must be probability vectors")
            object.__setattr__(self, "matrix", tuple(map(tuple, m)))
            off = m.copy()
            np.fill_diagonal(off, -np.inf)
            if np.any(off >= np.diag(m)[:, None]):
                warnings.warn(
                    "some off-diagonal rate is not below 1 - eta_i; class-dependent tolerance is not guaranteed",
                    RuntimeWarning,
                    stacklevel=2,
                )


def _flip_uniform(labels: np.ndarray, k: int, flip: np.ndarray, rng) -> np.ndarray:
    # Offset in 1..k-1 picks uniformly among the other classes.
    offset = rng.integers(1, k, size=labels.size) if k > 1 else np.zeros(labels.size, dtype=np.int64)
    return np.where(flip, (labels + offset) % k, labels)


def separator_margins(dataset: Dataset, seed: int = 0) -> np.ndarray:
    """Signed distance of each example to its class's nearest linear decision boundary.

    The separator is a linear softmax model fit with CE on ``dataset.labels``.
    """
    params = train(
        dataset.without_clean_flags(),
        TrainConfig(epochs=20, learning_rate=0.05, optimizer="adam", batch_size=64, seed=seed),
    )
    Z, _ = forward(params, dataset.features)
    rows = np.arange(len(dataset))
    y = dataset.labels
    W = params.weights
    others = Z.copy()
    others[rows, y] = -np.inf
    rival = np.argmax(others, axis=1)
    gap = Z[rows, y] - Z[rows, rival]
    scale = np.linalg.norm(W[y] - W[rival], axis=1)
    return gap / np.maximum(scale, 1e-12)


def flip_probabilities(dataset: Dataset, spec: NoiseSpec) -> np.ndarray:
    """Per-example probability that the label changes under ``spec``."""
    n, k = len(dataset), dataset.num_classes
    if spec.model == "uniform":
        return np.full(n, spec.eta)
    if spec.model == "class":
        m = np.asarray(spec.matrix)
        return 1.0 - np.diag(m)[dataset.labels]
    margin = np.maximum(separator_margins(dataset, spec.seed), 0.0)
    return spec.eta_max * np.exp(-margin / spec.tau)


def inject_noise(dataset: Dataset, spec: NoiseSpec) -> Dataset:
    """Corrupt labels according to ``spec``; ``clean`` marks labels left unchanged."""
    if not dataset.is_vector and spec.model == "instance":
        raise DatasetError("instance-dependent noise needs vector features")
    k = dataset.num_classes
    rng = np.random.default_rng(spec.seed)
    y = dataset.labels
    if spec.model == "class":
        m = np.asarray(spec.matrix)
        if m.shape != (k, k):
            raise ValueError(f"transition matrix must be {k}x{k}")
        new = _draw_class_labels(y, m, rng)
    else:
        flip = rng.random(y.size) < flip_probabilities(dataset, spec)
        new = _flip_uniform(y, k, flip, rng)
    clean = new == y
    if dataset.clean is not None:
        # Examples corrupted by an earlier pass stay flagged noisy.
        clean = clean & dataset.clean
    return dataset.replace(labels=new, clean=clean, provenance="noise-injected")


# --- tolerance oracle -------------------------------------------------------


@dataclass
class ToleranceReport:
    clean_losses: np.ndarray
    noisy_losses: np.ndarray
    expected_slope: Optional[float]
    expected_intercept: Optional[float]
    fitted_slope: float
    fitted_intercept: float
    max_deviation: float
    argmin_clean: int
    argmin_noisy: int

    @property
    def argmin_preserved(self) -> bool:
        return self.argmin_clean == self.argmin_noisy


def _draw_class_labels(labels: np.ndarray, matrix: np.ndarray, rng) -> np.ndarray:
    cdf = np.cumsum(matrix, axis=1)
    u = rng.random(labels.size)
    return np.minimum((u[:, None] >= cdf[labels]).sum(axis=1), matrix.shape[0] - 1)


def tolerance_oracle(
    params_grid: Sequence[ClassifierParams],
    clean: Dataset,
    spec: NoiseSpec,
    loss: str = "rce",
    draws: int = 200,
    a: float = -4.0,
) -> ToleranceReport:
    """Check ``L_noisy = (K-1-K*eta)/(K-1) * L_clean + eta*C/(K-1)`` across a parameter grid.

    ``L_noisy`` is the mean loss over ``draws`` relabellings of ``clean``
    (the same draws for every grid point). For a symmetric loss the
    deviation is measured against the exact identity; for CE, which has no
    constant C, it is measured against the expected slope with the
    least-squares intercept.

    Class-dependent noise has no affine identity; only argmin preservation
    is reported (``max_deviation`` is NaN). That guarantee additionally
    needs a zero-loss clean minimizer, so use separable data.
    """
    if spec.model == "instance":
        raise ValueError("the tolerance oracle supports uniform and class-dependent noise")
    k = clean.num_classes
    clean = clean.without_clean_flags()
    rng = np.random.default_rng(spec.seed)
    draws_labels = []
    if spec.model == "uniform":
        eta = spec.eta
        if eta >= (k - 1) / k:
            raise ValueError("noise rate must be below (K-1)/K")
        for _ in range(draws):
            flip = rng.random(len(clean)) < eta
            draws_labels.append(_flip_uniform(clean.labels, k, flip, rng))
    else:
        m = np.asarray(spec.matrix)
        if m.shape != (k, k):
            raise ValueError(f"transition matrix must be {k}x{k}")
        for _ in range(draws):
            draws_labels.append(_draw_class_labels(clean.labels, m, rng))

    clean_losses, noisy_losses = [], []
    for p in params_grid:
        Z, _ = forward(p, clean.features)
        clean_losses.append(per_sample_losses(loss, Z, clean.labels, a).mean())
        noisy_losses.append(np.mean([per_sample_losses(loss, Z, lbl, a).mean() for lbl in draws_labels]))
    clean_losses, noisy_losses = np.array(clean_losses), np.array(noisy_losses)
    if len(params_grid) > 1 and np.ptp(clean_losses) > 0:
        fitted_slope, fitted_intercept = np.polyfit(clean_losses, noisy_losses, 1)
    else:
        fitted_slope, fitted_intercept = np.nan, np.nan
    if spec.model == "class":
        slope = intercept = None
        max_dev = float("nan")
    else:
        slope = (k - 1 - k * eta) / (k - 1)
        if loss == "ce":
            intercept = None
            ref_intercept = float(np.mean(noisy_losses - slope * clean_losses))
        else:
            intercept = eta * symmetric_constant(loss, k, a) / (k - 1)
            ref_intercept = intercept
        max_dev = float(np.abs(noisy_losses - (slope * clean_losses + ref_intercept)).max())
    return ToleranceReport(
        clean_losses=clean_losses,
        noisy_losses=noisy_losses,
        expected_slope=slope,
        expected_intercept=intercept,
        fitted_slope=float(fitted_slope),
        fitted_intercept=float(fitted_intercept),
        max_deviation=max_dev,
        argmin_clean=int(np.argmin(clean_losses)),
        argmin_noisy=int(np.argmin(noisy_losses)),
    )
