"""Cross-entropy and the symmetric (noise-robust) losses RCE and MAE.

For a prediction ``f`` and label ``y``:

* CE  = -log f_y
* RCE = -sum_k f_k log q(k|x) with log 0 replaced by ``a`` (< 0), i.e. ``-a (1 - f_y)``
* MAE = ||f - e_y||_1 = 2 (1 - f_y)

RCE and MAE sum to a constant over all K possible targets; CE does not.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy.special import log_softmax

from .data import Dataset
from .model import ClassifierParams, Prediction, backward, forward

LOSS_KINDS = ("ce", "rce", "mae")
DEFAULT_RCE_A = -4.0


@dataclass(frozen=True)
class RobustLossSpec:
    kind: str = "rce"
    a: float = DEFAULT_RCE_A

    def __post_init__(self):
        if self.kind not in ("rce", "mae"):
            raise ValueError(f"robust loss must be 'rce' or 'mae', got {self.kind!r}")
        if not self.a < 0:
            raise ValueError("RCE constant a (the stand-in for log 0) must be negative")

    def constant(self, n_classes: int) -> float:
        """The symmetric-sum constant C."""
        return symmetric_constant(self.kind, n_classes, self.a)


def symmetric_constant(kind: str, n_classes: int, a: float = DEFAULT_RCE_A) -> float:
    if kind == "rce":
        return -(n_classes - 1) * a
    if kind == "mae":
        return 2.0 * (n_classes - 1)
    raise ValueError(f"{kind!r} has no symmetric-sum constant")


def ce_loss(prediction: Prediction, y: int) -> float:
    return float(-log_softmax(prediction.logits)[y])


def rce_loss(prediction: Prediction, y: int, a: float = DEFAULT_RCE_A) -> float:
    return float(-a * (1.0 - prediction.probabilities[y]))


def mae_loss(prediction: Prediction, y: int) -> float:
    return float(2.0 * (1.0 - prediction.probabilities[y]))


def _check_kind(kind: str) -> None:
    if kind not in LOSS_KINDS:
        raise ValueError(f"unknown loss {kind!r}; expected one of {LOSS_KINDS}")


def per_sample_losses(kind: str, logits: np.ndarray, y: np.ndarray, a: float = DEFAULT_RCE_A) -> np.ndarray:
    _check_kind(kind)
    logp = log_softmax(logits, axis=1)
    rows = np.arange(len(y))
    if kind == "ce":
        return -logp[rows, y]
    f_y = np.exp(logp[rows, y])
    return -a * (1.0 - f_y) if kind == "rce" else 2.0 * (1.0 - f_y)


def logit_gradients(kind: str, logits: np.ndarray, y: np.ndarray, a: float = DEFAULT_RCE_A) -> np.ndarray:
    """Per-sample derivative of the loss with respect to the logits, shape (N, K)."""
    _check_kind(kind)
    f = np.exp(log_softmax(logits, axis=1))
    rows = np.arange(len(y))
    onehot_minus_f = -f
    onehot_minus_f[rows, y] += 1.0
    if kind == "ce":
        return -onehot_minus_f
    # d f_y / d z = f_y (e_y - f); RCE = -a(1 - f_y), MAE = 2(1 - f_y)
    scale = a if kind == "rce" else -2.0
    return scale * f[rows, y][:, None] * onehot_minus_f


def _resolve_weights(weights, n: int) -> Optional[np.ndarray]:
    if weights is None:
        return None
    w = np.asarray(getattr(weights, "values", weights), dtype=np.float64)
    if w.shape != (n,):
        raise ValueError(f"weights have length {w.size} but the dataset has {n} examples")
    return w


def dataset_loss(
    params: ClassifierParams, dataset: Dataset, loss: str = "ce", weights=None, a: float = DEFAULT_RCE_A
) -> float:
    """``(1/N) sum_i w_i l(f(x_i), y_i)`` with ``w_i = 1`` when no weights are given."""
    w = _resolve_weights(weights, len(dataset))
    Z, _ = forward(params, dataset.features)
    values = per_sample_losses(loss, Z, dataset.labels, a)
    if w is not None:
        values = w * values
    return float(values.mean())


def loss_gradient(
    params: ClassifierParams, X: np.ndarray, y: np.ndarray, loss: str = "ce", weights=None, a: float = DEFAULT_RCE_A
) -> np.ndarray:
    """Flat gradient of the (optionally weighted) mean loss over ``(X, y)``."""
    w = _resolve_weights(weights, len(y))
    Z, H = forward(params, X)
    dZ = logit_gradients(loss, Z, y, a)
    if w is not None:
        dZ = dZ * w[:, None]
    return backward(params, X, H, dZ) / len(y)


def robust_loss_gradient(params: ClassifierParams, dataset: Dataset, spec: RobustLossSpec) -> ClassifierParams:
    grad = loss_gradient(params, dataset.features, dataset.labels, spec.kind, a=spec.a)
    return params.with_vector(grad)
