"""Datasets of (features or text, label) pairs with optional ground-truth noise flags.

Training and reweighting code only ever touches ``features`` and ``labels``.
The ``clean`` flags exist for evaluation and are dropped with
:meth:`Dataset.without_clean_flags` before any optimisation starts.
"""

from __future__ import annotations

import csv
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Optional, Sequence

import numpy as np

PROVENANCES = ("ingested", "synthetic", "noise-injected")


class DatasetError(ValueError):
    """Raised for malformed or inconsistent dataset input."""


@dataclass(frozen=True)
class Example:
    id: str
    label: int
    features: Optional[np.ndarray] = None
    text: Optional[str] = None
    clean: Optional[bool] = None


@dataclass(frozen=True, eq=False)
class Dataset:
    """An immutable, ordered collection of labelled examples.

    Vector-mode datasets carry an ``(N, d)`` float matrix in ``features``;
    text-mode datasets carry raw strings in ``texts`` and have no feature
    dimension until they are featurized.
    """

    ids: tuple
    labels: np.ndarray
    num_classes: int
    features: Optional[np.ndarray] = None
    texts: Optional[tuple] = None
    clean: Optional[np.ndarray] = None
    provenance: str = "ingested"
    feature_dim: Optional[int] = field(default=None)

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        n = len(self.ids)
        if self.num_classes < 1:
            raise DatasetError("num_classes must be positive")
        if labels.shape != (n,):
            raise DatasetError("labels must be a vector aligned with ids")
        if n and (labels.min() < 0 or labels.max() >= self.num_classes):
            bad = int(labels[(labels < 0) | (labels >= self.num_classes)][0])
            raise DatasetError(f"label out of range: {bad} not in [0, {self.num_classes})")
        if len(set(self.ids)) != n:
            raise DatasetError("example ids must be unique")
        if self.provenance not in PROVENANCES:
            raise DatasetError(f"unknown provenance {self.provenance!r}")
        if (self.features is None) == (self.texts is None):
            raise DatasetError("exactly one of features or texts must be given")
        if self.features is not None:
            X = np.array(self.features, dtype=np.float64)
            if X.ndim != 2 or X.shape[0] != n:
                raise DatasetError("features must be an (N, d) matrix")
            if X.shape[1] < 1:
                raise DatasetError("feature dimension must be positive")
            X.setflags(write=False)
            object.__setattr__(self, "features", X)
            object.__setattr__(self, "feature_dim", X.shape[1])
        else:
            if len(self.texts) != n:
                raise DatasetError("texts must align with ids")
            object.__setattr__(self, "texts", tuple(self.texts))
            object.__setattr__(self, "feature_dim", None)
        if self.clean is not None:
            flags = np.array(self.clean, dtype=bool)
            if flags.shape != (n,):
                raise DatasetError("clean flags must align with ids")
            flags.setflags(write=False)
            object.__setattr__(self, "clean", flags)
        labels.setflags(write=False)

    def __len__(self) -> int:
        return len(self.ids)

    def __iter__(self) -> Iterator[Example]:
        for i in range(len(self)):
            yield self.example(i)

    def example(self, i: int) -> Example:
        return Example(
            id=self.ids[i],
            label=int(self.labels[i]),
            features=None if self.features is None else self.features[i],
            text=None if self.texts is None else self.texts[i],
            clean=None if self.clean is None else bool(self.clean[i]),
        )

    @property
    def is_vector(self) -> bool:
        return self.features is not None

    def subset(self, indices: Sequence[int]) -> "Dataset":
        idx = np.asarray(indices, dtype=np.int64)
        return Dataset(
            ids=[self.ids[i] for i in idx],
            labels=self.labels[idx],
            num_classes=self.num_classes,
            features=None if self.features is None else self.features[idx],
            texts=None if self.texts is None else [self.texts[i] for i in idx],
            clean=None if self.clean is None else self.clean[idx],
            provenance=self.provenance,
        )

    def replace(self, **changes) -> "Dataset":
        fields = dict(
            ids=self.ids,
            labels=self.labels,
            num_classes=self.num_classes,
            features=self.features,
            texts=self.texts,
            clean=self.clean,
            provenance=self.provenance,
        )
        fields.update(changes)
        return Dataset(**fields)

    def without_clean_flags(self) -> "Dataset":
        if self.clean is None:
            return self
        return self.replace(clean=None)


@dataclass(frozen=True)
class SplitSpec:
    train_fraction: float = 0.8
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.train_fraction < 1.0:
            raise ValueError("train_fraction must lie strictly between 0 and 1")


def _parse_jsonl(path: Path, num_classes: int):
    ids, labels, feats, texts, flags = [], [], [], [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
            except json.JSONDecodeError as exc:
                raise DatasetError(f"line {lineno}: malformed record ({exc.msg})") from None
            if not isinstance(rec, dict) or "id" not in rec or "label" not in rec:
                raise DatasetError(f"line {lineno}: malformed record (needs id and label)")
            has_feat, has_text = "features" in rec, "text" in rec
            if has_feat == has_text:
                raise DatasetError(f"line {lineno}: malformed record (needs exactly one of features/text)")
            label = rec["label"]
            if isinstance(label, bool) or not isinstance(label, int):
                raise DatasetError(f"line {lineno}: malformed record (label must be an integer)")
            if not 0 <= label < num_classes:
                raise DatasetError(f"line {lineno}: label out of range: {label} not in [0, {num_classes})")
            ids.append(str(rec["id"]))
            labels.append(label)
            if has_feat:
                feats.append(rec["features"])
            else:
                texts.append(str(rec["text"]))
            if "clean" in rec:
                flags.append(bool(rec["clean"]))
    if not ids:
        raise DatasetError("empty dataset")
    if feats and texts:
        raise DatasetError("cannot mix feature and text records in one file")
    if flags and len(flags) != len(ids):
        raise DatasetError("clean flag must be present on every record or none")
    if feats:
        d = len(feats[0])
        for lineno, row in enumerate(feats, start=1):
            if len(row) != d:
                raise DatasetError(f"record {lineno}: inconsistent feature length {len(row)} != {d}")
    return ids, labels, feats or None, texts or None, flags or None


def _parse_csv(path: Path, num_classes: int):
    ids, labels, feats = [], [], []
    d = None
    with open(path, newline="", encoding="utf-8") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            if not row:
                continue
            if len(row) < 3:
                raise DatasetError(f"line {lineno}: malformed record (need id,label,f0,...)")
            try:
                label = int(row[1])
                values = [float(v) for v in row[2:]]
            except ValueError:
                raise DatasetError(f"line {lineno}: malformed record (non-numeric field)") from None
            if not 0 <= label < num_classes:
                raise DatasetError(f"line {lineno}: label out of range: {label} not in [0, {num_classes})")
            if d is None:
                d = len(values)
            elif len(values) != d:
                raise DatasetError(f"line {lineno}: inconsistent feature length {len(values)} != {d}")
            ids.append(row[0])
            labels.append(label)
            feats.append(values)
    if not ids:
        raise DatasetError("empty dataset")
    return ids, labels, feats, None, None


def load_dataset(path, num_classes: Optional[int] = None, feature_dim: Optional[int] = None) -> Dataset:
    """Read a ``.jsonl`` or header-less ``.csv`` file.

    ``feature_dim``, when given, is checked against the file's vectors.
    Without ``num_classes`` the class count is taken as max label + 1.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(path)
    bound = num_classes if num_classes is not None else sys.maxsize
    if path.suffix.lower() == ".csv":
        ids, labels, feats, texts, flags = _parse_csv(path, bound)
    else:
        ids, labels, feats, texts, flags = _parse_jsonl(path, bound)
    if num_classes is None:
        num_classes = max(labels) + 1
    if feats is not None and feature_dim is not None and len(feats[0]) != feature_dim:
        raise DatasetError(f"inconsistent feature length {len(feats[0])} != declared {feature_dim}")
    return Dataset(
        ids=ids,
        labels=labels,
        num_classes=num_classes,
        features=None if feats is None else np.asarray(feats, dtype=np.float64),
        texts=texts,
        clean=flags,
        provenance="ingested",
    )


def save_dataset(dataset: Dataset, path) -> None:
    path = Path(path)
    with open(path, "w", encoding="utf-8") as fh:
        for ex in dataset:
            rec = {"id": ex.id, "label": ex.label}
            if ex.features is not None:
                rec["features"] = [float(v) for v in ex.features]
            else:
                rec["text"] = ex.text
            if ex.clean is not None:
                rec["clean"] = ex.clean
            fh.write(json.dumps(rec) + "\n")


def _class_means(n_classes: int, n_features: int, separation: float, rng) -> np.ndarray:
    if n_classes == 1:
        return np.zeros((1, n_features))
    if n_classes <= n_features:
        # Scaled orthonormal columns: every pair sits exactly `separation` apart.
        q, _ = np.linalg.qr(rng.standard_normal((n_features, n_features)))
        return (separation / math.sqrt(2.0)) * q[:, :n_classes].T
    # More classes than dimensions: distinct points of a lattice with spacing `separation`.
    side = math.ceil(n_classes ** (1.0 / n_features)) + 1
    grid = np.stack(np.meshgrid(*[np.arange(side)] * n_features, indexing="ij"), -1).reshape(-1, n_features)
    chosen = rng.choice(len(grid), size=n_classes, replace=False)
    means = grid[chosen].astype(np.float64) * separation
    return means - means.mean(axis=0)


def make_gaussian_blobs(
    n_per_class: int, n_classes: int, n_features: int, separation: float, seed: int = 0
) -> Dataset:
    """Draw ``n_classes`` unit-variance isotropic Gaussian clusters.

    Class means are pairwise at least ``separation`` apart. Examples are
    interleaved in a seeded random order; every example is flagged clean.
    """
    if min(n_per_class, n_classes, n_features) < 1:
        raise ValueError("counts must be >= 1")
    if not separation > 0:
        raise ValueError("separation must be positive")
    rng = np.random.default_rng(seed)
    means = _class_means(n_classes, n_features, separation, rng)
    labels = np.repeat(np.arange(n_classes), n_per_class)
    X = means[labels] + rng.standard_normal((labels.size, n_features))
    order = rng.permutation(labels.size)
    n = labels.size
    width = len(str(n - 1))
    return Dataset(
        ids=[f"blob-{i:0{width}d}" for i in range(n)],
        labels=labels[order],
        num_classes=n_classes,
        features=X[order],
        clean=np.ones(n, dtype=bool),
        provenance="synthetic",
    )


def split(dataset: Dataset, spec: SplitSpec) -> tuple[Dataset, Dataset]:
    """Shuffle and partition into disjoint (train, validation) datasets."""
    n = len(dataset)
    if n == 0:
        raise DatasetError("cannot split an empty dataset")
    n_train = int(round(spec.train_fraction * n))
    if n_train == 0 or n_train == n:
        raise DatasetError(f"split of {n} examples at fraction {spec.train_fraction} leaves one side empty")
    perm = np.random.default_rng(spec.seed).permutation(n)
    return dataset.subset(np.sort(perm[:n_train])), dataset.subset(np.sort(perm[n_train:]))
