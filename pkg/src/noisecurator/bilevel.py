"""Bilevel sample reweighting with a noise-robust outer objective.

The inner problem trains the classifier on the weighted CE loss of the
training split. The outer problem adjusts the per-sample weights so that the
robust (RCE or MAE) loss on a *noisy* validation split goes down. The
hypergradient is truncated to the final inner update::

    theta_T = theta_prev - (alpha / B) * sum_{i in batch} w_i * grad l_ce(x_i; theta_prev)
    d L_robust / d w_i = -(alpha / B) * <grad L_robust(theta_T), grad l_ce(x_i; theta_prev)>

and is applied to every training sample, not only those in the last batch.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import NamedTuple, Optional

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.utils.multiclass import check_classification_targets
from sklearn.utils.validation import check_is_fitted, check_X_y

from .data import Dataset, DatasetError
from .evaluation import weight_histogram
from .losses import DEFAULT_RCE_A, RobustLossSpec, dataset_loss, logit_gradients, loss_gradient
from .model import ClassifierParams, forward, per_sample_dots
from .training import OPTIMIZERS, Adam, TrainConfig, final_batch_size, make_optimizer, run_epochs
from .training import train as train_classifier

INITIAL_WEIGHT = 0.5
TRACE_BINS = 20


@dataclass
class SampleWeights:
    values: np.ndarray
    iteration: int = 0

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1:
            raise ValueError("sample weights must be a vector")
        if np.any(self.values < 0) or np.any(self.values > 1):
            raise ValueError("sample weights must lie in [0, 1]")

    def __len__(self):
        return self.values.size


@dataclass(frozen=True)
class BilevelConfig:
    outer_iterations: int = 50
    outer_step: float = 0.1
    outer_optimizer: str = "adam"
    inner_epochs: int = 1
    inner_step: float = 0.1
    inner_batch_size: int = 100
    inner_optimizer: str = "sgd"
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    outer_loss: str = "rce"
    rce_a: float = DEFAULT_RCE_A
    hidden: Optional[int] = None
    warm_start: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.outer_iterations < 1:
            raise ValueError("outer_iterations must be >= 1")
        if not (self.outer_step > 0 and self.inner_step > 0):
            raise ValueError("outer_step and inner_step must be positive")
        if self.inner_epochs < 1 or self.inner_batch_size < 1:
            raise ValueError("inner_epochs and inner_batch_size must be >= 1")
        if self.inner_optimizer not in OPTIMIZERS or self.outer_optimizer not in OPTIMIZERS:
            raise ValueError(f"optimizers must be one of {OPTIMIZERS}")
        RobustLossSpec(self.outer_loss, self.rce_a)

    @property
    def robust_loss(self) -> RobustLossSpec:
        return RobustLossSpec(self.outer_loss, self.rce_a)

    def train_config(self, **changes) -> TrainConfig:
        base = TrainConfig(
            loss="ce",
            epochs=self.inner_epochs,
            learning_rate=self.inner_step,
            batch_size=self.inner_batch_size,
            optimizer=self.inner_optimizer,
            beta1=self.beta1,
            beta2=self.beta2,
            eps=self.eps,
            hidden=self.hidden,
            rce_a=self.rce_a,
            seed=self.seed,
        )
        return replace(base, **changes)

    def make_inner_optimizer(self):
        return make_optimizer(self.inner_optimizer, self.inner_step, self.beta1, self.beta2, self.eps)


@dataclass
class BilevelTrace:
    records: list = field(default_factory=list)
    weight_history: Optional[list] = None

    def to_json(self) -> list:
        return [dict(r) for r in self.records]


class InnerResult(NamedTuple):
    params: ClassifierParams
    prev_params: ClassifierParams
    last_batch_size: int
    train_loss: float


def _check_vector(dataset: Dataset, name: str) -> None:
    if not dataset.is_vector:
        raise DatasetError(f"{name} must be a vector-mode dataset; featurize it first")


def inner_train(
    weights,
    train: Dataset,
    init: ClassifierParams,
    config: BilevelConfig,
    *,
    optimizer=None,
    rng: Optional[np.random.Generator] = None,
) -> InnerResult:
    """Run ``config.inner_epochs`` epochs of weighted-CE mini-batch training from ``init``."""
    w = np.asarray(getattr(weights, "values", weights), dtype=np.float64)
    if w.shape != (len(train),):
        raise ValueError(f"{w.size} weights for {len(train)} training examples")
    if optimizer is None:
        optimizer = config.make_inner_optimizer()
    if rng is None:
        rng = np.random.default_rng(config.seed)
    res = run_epochs(
        init,
        train.features,
        train.labels,
        loss="ce",
        epochs=config.inner_epochs,
        batch_size=config.inner_batch_size,
        optimizer=optimizer,
        rng=rng,
        weights=w,
        a=config.rce_a,
    )
    return InnerResult(*res)


def meta_gradient(
    params: ClassifierParams,
    prev_params: ClassifierParams,
    validation: Dataset,
    train: Dataset,
    config: BilevelConfig,
    batch_size: Optional[int] = None,
) -> np.ndarray:
    """Truncated hypergradient of the validation robust loss with respect to each training weight.

    ``batch_size`` is the size of the final inner mini-batch; by default it
    is derived from ``len(train)`` and ``config.inner_batch_size``. With an
    Adam inner optimizer the step is approximated by the scalar
    ``config.inner_step``.
    """
    if params.size != prev_params.size:
        raise ValueError("params and prev_params have different shapes")
    if validation.feature_dim != params.n_features or train.feature_dim != params.n_features:
        raise ValueError("dataset feature dimension does not match the parameters")
    if batch_size is None:
        batch_size = final_batch_size(len(train), config.inner_batch_size)
    spec = config.robust_loss
    val_grad = loss_gradient(params, validation.features, validation.labels, spec.kind, a=spec.a)
    Z, H = forward(prev_params, train.features)
    dZ = logit_gradients("ce", Z, train.labels)
    dots = per_sample_dots(prev_params, train.features, H, dZ, val_grad)
    return -(config.inner_step / batch_size) * dots


def outer_step(weights: SampleWeights, g: np.ndarray, step: float) -> SampleWeights:
    """Projected gradient step ``w <- clip(w - step * g, 0, 1)``."""
    g = np.asarray(g, dtype=np.float64)
    if g.shape != weights.values.shape:
        raise ValueError("gradient and weights differ in length")
    return SampleWeights(np.clip(weights.values - step * g, 0.0, 1.0), weights.iteration + 1)


def _adam_outer_step(weights: SampleWeights, g: np.ndarray, adam: Adam) -> SampleWeights:
    return SampleWeights(np.clip(adam.step(weights.values, g), 0.0, 1.0), weights.iteration + 1)


def run_bilevel(
    train: Dataset,
    validation: Dataset,
    config: BilevelConfig = BilevelConfig(),
    keep_history: bool = False,
    callback=None,
) -> tuple[SampleWeights, BilevelTrace]:
    """Learn sample weights for ``train`` guided by the robust loss on ``validation``.

    Weights start at 0.5. Each outer iteration trains the classifier on the
    current weights, computes the truncated hypergradient and takes one
    projected step (plain gradient descent or Adam, per
    ``config.outer_optimizer``).
    """
    # Ground-truth flags must never influence the weights.
    train = train.without_clean_flags()
    validation = validation.without_clean_flags()
    _check_vector(train, "train")
    _check_vector(validation, "validation")
    if train.num_classes != validation.num_classes or train.feature_dim != validation.feature_dim:
        raise DatasetError("train and validation must share num_classes and feature_dim")

    rng = np.random.default_rng(config.seed)
    init = ClassifierParams.initialize(train.feature_dim, train.num_classes, config.hidden, config.seed)
    params = init
    inner_opt = config.make_inner_optimizer()
    outer_adam = Adam(config.outer_step, config.beta1, config.beta2, config.eps)
    weights = SampleWeights(np.full(len(train), INITIAL_WEIGHT))
    trace = BilevelTrace(weight_history=[] if keep_history else None)
    spec = config.robust_loss

    for _ in range(config.outer_iterations):
        if not config.warm_start:
            params, inner_opt = init, config.make_inner_optimizer()
        inner = inner_train(weights, train, params, config, optimizer=inner_opt, rng=rng)
        g = meta_gradient(inner.params, inner.prev_params, validation, train, config, inner.last_batch_size)
        if config.outer_optimizer == "adam":
            weights = _adam_outer_step(weights, g, outer_adam)
        else:
            weights = outer_step(weights, g, config.outer_step)
        params = inner.params
        record = {
            "iteration": weights.iteration,
            "outer_loss": dataset_loss(params, validation, spec.kind, a=spec.a),
            "inner_loss": inner.train_loss,
            "mean_weight": float(weights.values.mean()),
            "min_weight": float(weights.values.min()),
            "max_weight": float(weights.values.max()),
            "histogram": weight_histogram(weights.values, TRACE_BINS).tolist(),
        }
        trace.records.append(record)
        if keep_history:
            trace.weight_history.append(weights.values.copy())
        if callback is not None:
            callback(weights, record)
    return weights, trace


def one_level_baseline(train: Dataset, config: BilevelConfig = BilevelConfig(), epochs: Optional[int] = None):
    """Train the classifier directly on the robust loss, without sample weights.

    ``epochs`` defaults to the total inner budget of a bilevel run
    (``outer_iterations * inner_epochs``).
    """
    train = train.without_clean_flags()
    _check_vector(train, "train")
    if epochs is None:
        epochs = config.outer_iterations * config.inner_epochs
    return train_classifier(train, config.train_config(loss=config.outer_loss, epochs=epochs))


class BilevelReweighter(BaseEstimator):
    """Learn per-sample quality weights for a noisily labelled training set.

    ``fit(X, y)`` runs the bilevel loop. When no validation set is passed a
    random ``validation_fraction`` of the (equally noisy) training rows is
    used as the validation split, so every row still receives a weight.
    After fitting, ``sample_weights_`` holds the learned weights and
    ``fit_resample`` draws a budgeted subset from them.
    """

    def __init__(
        self,
        outer_iterations=50,
        outer_step=0.1,
        outer_optimizer="adam",
        inner_epochs=1,
        inner_step=0.1,
        inner_batch_size=100,
        inner_optimizer="sgd",
        outer_loss="rce",
        rce_a=DEFAULT_RCE_A,
        hidden=None,
        warm_start=True,
        validation_fraction=0.2,
        budget=None,
        random_state=0,
    ):
        self.outer_iterations = outer_iterations
        self.outer_step = outer_step
        self.outer_optimizer = outer_optimizer
        self.inner_epochs = inner_epochs
        self.inner_step = inner_step
        self.inner_batch_size = inner_batch_size
        self.inner_optimizer = inner_optimizer
        self.outer_loss = outer_loss
        self.rce_a = rce_a
        self.hidden = hidden
        self.warm_start = warm_start
        self.validation_fraction = validation_fraction
        self.budget = budget
        self.random_state = random_state

    def _config(self) -> BilevelConfig:
        return BilevelConfig(
            outer_iterations=self.outer_iterations,
            outer_step=self.outer_step,
            outer_optimizer=self.outer_optimizer,
            inner_epochs=self.inner_epochs,
            inner_step=self.inner_step,
            inner_batch_size=self.inner_batch_size,
            inner_optimizer=self.inner_optimizer,
            outer_loss=self.outer_loss,
            rce_a=self.rce_a,
            hidden=self.hidden,
            warm_start=self.warm_start,
            seed=self.random_state,
        )

    def fit(self, X, y, X_val=None, y_val=None):
        X, y = check_X_y(X, y, dtype=np.float64)
        check_classification_targets(y)
        self.classes_, encoded = np.unique(y, return_inverse=True)
        self.n_features_in_ = X.shape[1]
        k = len(self.classes_)
        train_ds = Dataset(ids=range(len(y)), labels=encoded, num_classes=k, features=X)
        if X_val is None:
            rng = np.random.default_rng(self.random_state)
            m = max(1, int(round(self.validation_fraction * len(y))))
            val_ds = train_ds.subset(np.sort(rng.choice(len(y), size=m, replace=False)))
        else:
            X_val, y_val = check_X_y(X_val, y_val, dtype=np.float64)
            unknown = np.setdiff1d(y_val, self.classes_)
            if unknown.size:
                raise ValueError(f"validation labels {unknown} not seen in training labels")
            val_ds = Dataset(
                ids=range(len(y_val)),
                labels=np.searchsorted(self.classes_, y_val),
                num_classes=k,
                features=X_val,
            )
        weights, trace = run_bilevel(train_ds, val_ds, self._config())
        self.sample_weights_ = weights.values
        self.trace_ = trace
        return self

    def fit_resample(self, X, y, X_val=None, y_val=None):
        """Fit, then return the rows kept by Bernoulli subset sampling at ``budget``."""
        from .sampling import normalize_weights, sample_subset

        self.fit(X, y, X_val, y_val)
        budget = self.budget if self.budget is not None else int(round(self.sample_weights_.sum()))
        keep = sample_subset(normalize_weights(self.sample_weights_, budget), seed=self.random_state)
        X, y = np.asarray(X), np.asarray(y)
        return X[keep], y[keep]

    def subset_indices(self, budget: int, seed: int = 0) -> np.ndarray:
        from .sampling import normalize_weights, sample_subset

        check_is_fitted(self, "sample_weights_")
        return sample_subset(normalize_weights(self.sample_weights_, budget), seed=seed)
