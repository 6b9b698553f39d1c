"""Single-model denoising baselines: confidence filtering and small-loss filtering."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .losses import per_sample_losses
from .model import ClassifierParams, forward, predict_proba
from .training import TrainConfig, train


@dataclass
class FilterReport:
    method: str
    kept: np.ndarray
    scores: np.ndarray


def _keep_top(scores: np.ndarray, keep: int) -> np.ndarray:
    if not 0 <= keep <= scores.size:
        raise ValueError(f"keep must lie in [0, {scores.size}]")
    order = np.argsort(-scores, kind="stable")
    return np.sort(order[:keep])


def confidence_filter(train_set: Dataset, config: TrainConfig, keep: int) -> FilterReport:
    """Keep the ``keep`` examples with the highest mean true-label probability across epochs."""
    train_set = train_set.without_clean_flags()
    rows = np.arange(len(train_set))
    history = []

    def record(_, params):
        history.append(predict_proba(params, train_set.features)[rows, train_set.labels])

    train(train_set, config.with_(loss="ce"), on_epoch=record)
    if history:
        scores = np.mean(history, axis=0)
    else:
        init = ClassifierParams.initialize(train_set.feature_dim, train_set.num_classes, config.hidden, config.seed)
        scores = predict_proba(init, train_set.features)[rows, train_set.labels]
    return FilterReport("confidence", _keep_top(scores, keep), scores)


def small_loss_filter(train_set: Dataset, config: TrainConfig, keep: int) -> FilterReport:
    """Keep the ``keep`` examples with the smallest CE loss after ``config.epochs`` of warm-up.

    The score is the negated loss so larger means cleaner, as for the other filters.
    """
    train_set = train_set.without_clean_flags()
    params = train(train_set, config.with_(loss="ce"))
    Z, _ = forward(params, train_set.features)
    scores = -per_sample_losses("ce", Z, train_set.labels)
    return FilterReport("small-loss", _keep_top(scores, keep), scores)
