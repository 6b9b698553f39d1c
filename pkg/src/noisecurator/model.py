"""Featurization and a small softmax classifier with hand-written gradients.

Parameters live in one flat float64 vector so optimizers, inner products and
finite differences all work on plain arrays; :class:`ClassifierParams`
exposes reshaped views of that vector.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from scipy.special import log_softmax, softmax

from .data import Dataset, DatasetError

FEATURE_MODES = ("identity", "hashed-ngram")


@dataclass(frozen=True)
class FeatureSpec:
    mode: str = "identity"
    dim: int = 2
    ngram_order: int = 1

    def __post_init__(self):
        if self.mode not in FEATURE_MODES:
            raise ValueError(f"unknown feature mode {self.mode!r}")
        if self.dim < 1:
            raise ValueError("dim must be positive")
        if self.ngram_order < 1:
            raise ValueError("ngram_order must be >= 1")


def _hash_token(token: str) -> int:
    return int.from_bytes(hashlib.blake2b(token.encode("utf-8"), digest_size=8).digest(), "little")


def hash_text(text: str, dim: int, ngram_order: int = 1) -> np.ndarray:
    """Signed hashed bag of 1..ngram_order word n-grams, L2-normalized."""
    tokens = text.lower().split()
    vec = np.zeros(dim)
    for n in range(1, ngram_order + 1):
        for i in range(len(tokens) - n + 1):
            h = _hash_token(" ".join(tokens[i : i + n]))
            vec[h % dim] += 1.0 if (h >> 63) & 1 else -1.0
    norm = np.linalg.norm(vec)
    return vec / norm if norm > 0 else vec


def featurize(dataset: Dataset, spec: FeatureSpec) -> Dataset:
    if spec.mode == "identity":
        if not dataset.is_vector:
            raise DatasetError("identity featurization needs vector examples; use hashed-ngram for text")
        if dataset.feature_dim != spec.dim:
            raise DatasetError(f"feature length {dataset.feature_dim} != spec dim {spec.dim}")
        return dataset
    if dataset.is_vector:
        raise DatasetError("hashed-ngram featurization needs text examples")
    X = np.stack([hash_text(t, spec.dim, spec.ngram_order) for t in dataset.texts])
    return dataset.replace(features=X, texts=None)


class ClassifierParams:
    """Flat parameter vector of a linear or one-hidden-layer (tanh) softmax model.

    Layout: output weights (K x m), output biases (K), then for the hidden
    architecture hidden weights (h x d) and hidden biases (h), where m is d
    for the linear model and h otherwise.
    """

    def __init__(self, n_features: int, n_classes: int, hidden: Optional[int] = None, vector=None):
        self.n_features = int(n_features)
        self.n_classes = int(n_classes)
        self.hidden = None if hidden in (None, 0) else int(hidden)
        size = self.size_for(self.n_features, self.n_classes, self.hidden)
        if vector is None:
            vector = np.zeros(size)
        # No copy: gradient buffers are filled through these views.
        vector = np.asarray(vector, dtype=np.float64)
        if vector.shape != (size,):
            raise ValueError(f"parameter vector must have length {size}, got {vector.shape}")
        self.vector = vector

    @staticmethod
    def size_for(n_features: int, n_classes: int, hidden: Optional[int]) -> int:
        if hidden:
            return n_classes * hidden + n_classes + hidden * n_features + hidden
        return n_classes * n_features + n_classes

    @classmethod
    def initialize(cls, n_features: int, n_classes: int, hidden: Optional[int] = None, seed: int = 0):
        """Weights ~ U(-0.01, 0.01), biases zero."""
        params = cls(n_features, n_classes, hidden)
        rng = np.random.default_rng(seed)
        params.weights[...] = rng.uniform(-0.01, 0.01, params.weights.shape)
        if params.hidden:
            params.hidden_weights[...] = rng.uniform(-0.01, 0.01, params.hidden_weights.shape)
        return params

    @property
    def arch(self) -> str:
        return "one-hidden-layer" if self.hidden else "linear"

    @property
    def size(self) -> int:
        return self.vector.size

    @property
    def _m(self) -> int:
        return self.hidden or self.n_features

    @property
    def weights(self) -> np.ndarray:
        return self.vector[: self.n_classes * self._m].reshape(self.n_classes, self._m)

    @property
    def biases(self) -> np.ndarray:
        start = self.n_classes * self._m
        return self.vector[start : start + self.n_classes]

    @property
    def hidden_weights(self) -> Optional[np.ndarray]:
        if not self.hidden:
            return None
        start = self.n_classes * self._m + self.n_classes
        return self.vector[start : start + self.hidden * self.n_features].reshape(self.hidden, self.n_features)

    @property
    def hidden_biases(self) -> Optional[np.ndarray]:
        if not self.hidden:
            return None
        return self.vector[self.size - self.hidden :]

    def with_vector(self, vector) -> "ClassifierParams":
        return ClassifierParams(self.n_features, self.n_classes, self.hidden, vector)

    def copy(self) -> "ClassifierParams":
        return self.with_vector(self.vector.copy())

    def __repr__(self):
        return f"ClassifierParams(arch={self.arch!r}, d={self.n_features}, K={self.n_classes}, h={self.hidden})"


@dataclass(frozen=True)
class Prediction:
    logits: np.ndarray
    probabilities: np.ndarray


def forward(params: ClassifierParams, X: np.ndarray):
    """Return ``(logits, hidden_activations)``; activations are None for the linear model."""
    if params.hidden:
        H = np.tanh(X @ params.hidden_weights.T + params.hidden_biases)
        return H @ params.weights.T + params.biases, H
    return X @ params.weights.T + params.biases, None


def backward(params: ClassifierParams, X: np.ndarray, H, dZ: np.ndarray) -> np.ndarray:
    """Flat gradient of ``sum_i <dZ_i, z_i>`` with respect to the parameters."""
    grad = np.empty(params.size)
    g = params.with_vector(grad)
    inputs = X if H is None else H
    g.weights[...] = dZ.T @ inputs
    g.biases[...] = dZ.sum(axis=0)
    if params.hidden:
        dA = (dZ @ params.weights) * (1.0 - H**2)
        g.hidden_weights[...] = dA.T @ X
        g.hidden_biases[...] = dA.sum(axis=0)
    return grad


def per_sample_dots(params: ClassifierParams, X: np.ndarray, H, dZ: np.ndarray, direction: np.ndarray) -> np.ndarray:
    """``<direction, grad_theta <dZ_i, z_i>>`` for every row i, without materialising per-sample gradients."""
    v = params.with_vector(direction)
    inputs = X if H is None else H
    out = np.einsum("ik,ik->i", dZ, inputs @ v.weights.T + v.biases)
    if params.hidden:
        dA = (dZ @ params.weights) * (1.0 - H**2)
        out += np.einsum("ij,ij->i", dA, X @ v.hidden_weights.T + v.hidden_biases)
    return out


def predict_proba(params: ClassifierParams, X: np.ndarray) -> np.ndarray:
    Z, _ = forward(params, np.atleast_2d(X))
    return softmax(Z, axis=1)


def predict(params: ClassifierParams, x) -> Prediction:
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (params.n_features,):
        raise ValueError(f"expected a feature vector of length {params.n_features}")
    if not np.all(np.isfinite(x)):
        raise ValueError("non-finite input")
    z, _ = forward(params, x[None, :])
    z = z[0]
    return Prediction(logits=z, probabilities=softmax(z))


def per_sample_ce_gradient(params: ClassifierParams, x, y: int) -> ClassifierParams:
    """Gradient of ``-log f_y(x)`` with respect to every parameter."""
    X = np.asarray(x, dtype=np.float64)[None, :]
    Z, H = forward(params, X)
    dZ = np.exp(log_softmax(Z, axis=1))
    dZ[0, y] -= 1.0
    return params.with_vector(backward(params, X, H, dZ))


def evaluate_accuracy(params: ClassifierParams, dataset: Dataset) -> float:
    if len(dataset) == 0:
        raise DatasetError("cannot evaluate accuracy on an empty dataset")
    if not dataset.is_vector:
        raise DatasetError("accuracy needs a vector-mode dataset")
    Z, _ = forward(params, dataset.features)
    # np.argmax resolves ties toward the smaller class index.
    return float(np.mean(np.argmax(Z, axis=1) == dataset.labels))


def save_params(params: ClassifierParams, path, **metadata) -> None:
    """Write a little-endian float64 blob plus a ``<path>.json`` sidecar."""
    path = Path(path)
    path.write_bytes(params.vector.astype("<f8").tobytes())
    sidecar = {
        "arch": params.arch,
        "n_features": params.n_features,
        "n_classes": params.n_classes,
        "hidden": params.hidden,
        "dtype": "<f8",
        "size": params.size,
        **metadata,
    }
    Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def load_params(path) -> ClassifierParams:
    path = Path(path)
    meta = json.loads(Path(str(path) + ".json").read_text())
    vector = np.frombuffer(path.read_bytes(), dtype="<f8").astype(np.float64)
    if vector.size != meta["size"]:
        raise ValueError(f"{path}: expected {meta['size']} values, found {vector.size}")
    return ClassifierParams(meta["n_features"], meta["n_classes"], meta.get("hidden"), vector)
