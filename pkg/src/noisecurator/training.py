"""Mini-batch training of the softmax classifier and its scikit-learn wrapper."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Callable, NamedTuple, Optional

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .data import Dataset
from .losses import DEFAULT_RCE_A, LOSS_KINDS, logit_gradients, per_sample_losses
from .model import ClassifierParams, backward, forward, predict_proba

OPTIMIZERS = ("sgd", "adam")


class SGD:
    def __init__(self, lr: float):
        self.lr = lr

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        return theta - self.lr * grad


class Adam:
    def __init__(self, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.lr, self.beta1, self.beta2, self.eps = lr, beta1, beta2, eps
        self.m = self.v = None
        self.t = 0

    def step(self, theta: np.ndarray, grad: np.ndarray) -> np.ndarray:
        if self.m is None:
            self.m = np.zeros_like(theta)
            self.v = np.zeros_like(theta)
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * grad
        self.v = self.beta2 * self.v + (1 - self.beta2) * grad**2
        m_hat = self.m / (1 - self.beta1**self.t)
        v_hat = self.v / (1 - self.beta2**self.t)
        return theta - self.lr * m_hat / (np.sqrt(v_hat) + self.eps)


def make_optimizer(name: str, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    if name == "sgd":
        return SGD(lr)
    if name == "adam":
        return Adam(lr, beta1, beta2, eps)
    raise ValueError(f"unknown optimizer {name!r}; expected one of {OPTIMIZERS}")


@dataclass(frozen=True)
class TrainConfig:
    loss: str = "ce"
    epochs: int = 5
    learning_rate: float = 0.1
    batch_size: int = 100
    optimizer: str = "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    hidden: Optional[int] = None
    rce_a: float = DEFAULT_RCE_A
    seed: int = 0

    def __post_init__(self):
        if self.loss not in LOSS_KINDS:
            raise ValueError(f"unknown loss {self.loss!r}")
        if self.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.optimizer!r}")
        if self.epochs < 0 or self.batch_size < 1 or not self.learning_rate > 0:
            raise ValueError("epochs >= 0, batch_size >= 1 and learning_rate > 0 are required")

    def make_optimizer(self):
        return make_optimizer(self.optimizer, self.learning_rate, self.beta1, self.beta2, self.eps)

    def with_(self, **changes) -> "TrainConfig":
        return replace(self, **changes)


class EpochResult(NamedTuple):
    params: ClassifierParams
    prev_params: ClassifierParams
    last_batch_size: int
    mean_loss: float


def final_batch_size(n: int, batch_size: int) -> int:
    """Size of the last mini-batch of an epoch over ``n`` examples."""
    b = min(batch_size, n)
    return n - b * (math.ceil(n / b) - 1)


def run_epochs(
    params: ClassifierParams,
    X: np.ndarray,
    y: np.ndarray,
    *,
    loss: str,
    epochs: int,
    batch_size: int,
    optimizer,
    rng: np.random.Generator,
    weights: Optional[np.ndarray] = None,
    a: float = DEFAULT_RCE_A,
    on_epoch: Optional[Callable[[int, ClassifierParams], None]] = None,
) -> EpochResult:
    """Minimise the (weighted) mean loss by shuffled mini-batch updates.

    Returns the final parameters, the parameters right before the last
    update, the last batch size and the mean batch loss of the final epoch.
    """
    n = len(y)
    b = min(batch_size, n)
    theta = params.vector.copy()
    prev = theta.copy()
    last_b, epoch_loss = b, float("nan")
    step = 0
    for epoch in range(epochs):
        perm = rng.permutation(n)
        batch_losses = []
        for start in range(0, n, b):
            idx = perm[start : start + b]
            p = params.with_vector(theta)
            Z, H = forward(p, X[idx])
            losses = per_sample_losses(loss, Z, y[idx], a)
            dZ = logit_gradients(loss, Z, y[idx], a)
            if weights is not None:
                losses = losses * weights[idx]
                dZ = dZ * weights[idx][:, None]
            batch_loss = float(losses.mean())
            step += 1
            if not math.isfinite(batch_loss):
                raise FloatingPointError(f"non-finite training loss at epoch {epoch}, step {step}")
            grad = backward(p, X[idx], H, dZ) / len(idx)
            prev = theta
            theta = optimizer.step(theta, grad)
            last_b = len(idx)
            batch_losses.append(batch_loss)
        epoch_loss = float(np.mean(batch_losses))
        if on_epoch is not None:
            on_epoch(epoch + 1, params.with_vector(theta))
    return EpochResult(params.with_vector(theta), params.with_vector(prev), last_b, epoch_loss)


def train(
    dataset: Dataset,
    config: TrainConfig = TrainConfig(),
    weights=None,
    init: Optional[ClassifierParams] = None,
    on_epoch=None,
) -> ClassifierParams:
    """Train a classifier on a vector-mode dataset and return its parameters."""
    if init is None:
        init = ClassifierParams.initialize(dataset.feature_dim, dataset.num_classes, config.hidden, config.seed)
    w = None if weights is None else np.asarray(getattr(weights, "values", weights), dtype=np.float64)
    rng = np.random.default_rng(config.seed)
    return run_epochs(
        init,
        dataset.features,
        dataset.labels,
        loss=config.loss,
        epochs=config.epochs,
        batch_size=config.batch_size,
        optimizer=config.make_optimizer(),
        rng=rng,
        weights=w,
        a=config.rce_a,
        on_epoch=on_epoch,
    ).params


class SoftmaxClassifier(ClassifierMixin, BaseEstimator):
    """Linear or one-hidden-layer softmax classifier trained by mini-batch SGD/Adam.

    Parameters
    ----------
    loss : {"ce", "rce", "mae"}
    hidden : int or None
        Width of the tanh hidden layer; None gives a linear model.
    optimizer : {"sgd", "adam"}
    learning_rate, epochs, batch_size : training schedule.
    rce_a : float
        Stand-in for log 0 in the RCE loss.
    random_state : int
    """

    def __init__(
        self,
        loss="ce",
        hidden=None,
        optimizer="sgd",
        learning_rate=0.1,
        epochs=5,
        batch_size=100,
        rce_a=DEFAULT_RCE_A,
        random_state=0,
    ):
        self.loss = loss
        self.hidden = hidden
        self.optimizer = optimizer
        self.learning_rate = learning_rate
        self.epochs = epochs
        self.batch_size = batch_size
        self.rce_a = rce_a
        self.random_state = random_state

    def _config(self) -> TrainConfig:
        return TrainConfig(
            loss=self.loss,
            epochs=self.epochs,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            optimizer=self.optimizer,
            hidden=self.hidden,
            rce_a=self.rce_a,
            seed=self.random_state,
        )

    def fit(self, X, y, sample_weight=None):
        X, y = check_X_y(X, y, dtype=np.float64)
        check_classification_targets(y)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        self.n_features_in_ = X.shape[1]
        config = self._config()
        init = ClassifierParams.initialize(X.shape[1], len(self.classes_), config.hidden, config.seed)
        w = None if sample_weight is None else np.asarray(sample_weight, dtype=np.float64)
        if w is not None and w.shape != (len(y),):
            raise ValueError("sample_weight must have one entry per sample")
        self.params_ = run_epochs(
            init,
            X,
            encoded,
            loss=config.loss,
            epochs=config.epochs,
            batch_size=config.batch_size,
            optimizer=config.make_optimizer(),
            rng=np.random.default_rng(config.seed),
            weights=w,
            a=config.rce_a,
        ).params
        return self

    def decision_function(self, X):
        check_is_fitted(self, "params_")
        X = check_array(X, dtype=np.float64)
        return forward(self.params_, X)[0]

    def predict_proba(self, X):
        check_is_fitted(self, "params_")
        return predict_proba(self.params_, check_array(X, dtype=np.float64))

    def predict(self, X):
        return self.classes_[np.argmax(self.decision_function(X), axis=1)]
