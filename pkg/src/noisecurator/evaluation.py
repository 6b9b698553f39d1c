"""Diagnostics: clean/noisy separation, weight histograms, loss surfaces,
cross-loss training curves, Self-BLEU4 and the JSON run report."""

from __future__ import annotations

import hashlib
import json
import math
from collections import Counter
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
from sklearn.metrics import roc_auc_score

from .data import Dataset
from .losses import DEFAULT_RCE_A, dataset_loss
from .model import ClassifierParams
from .training import TrainConfig, train

REPORT_SCHEMA_VERSION = 1


def separation_auroc(scores, clean_flags) -> float:
    """P(score of a random clean sample > score of a random noisy one), ties count half."""
    scores = np.asarray(scores, dtype=np.float64)
    flags = np.asarray(clean_flags, dtype=bool)
    if scores.shape != flags.shape:
        raise ValueError("scores and flags differ in length")
    if flags.all() or not flags.any():
        raise ValueError("AUROC needs both clean and noisy samples")
    return float(roc_auc_score(flags, scores))


def weight_histogram(weights, bins: int = 20) -> np.ndarray:
    """Counts over equal-width bins on [0, 1]; bins are [lo, hi) except the last, which includes 1."""
    if bins < 2:
        raise ValueError("bins must be >= 2")
    counts, _ = np.histogram(np.asarray(weights, dtype=np.float64), bins=bins, range=(0.0, 1.0))
    return counts


# --- loss surface -----------------------------------------------------------


@dataclass
class SurfaceProbe:
    center: ClassifierParams
    u: np.ndarray
    v: np.ndarray
    alphas: np.ndarray
    betas: np.ndarray
    values: dict

    def to_json(self) -> dict:
        return {
            "alphas": self.alphas.tolist(),
            "betas": self.betas.tolist(),
            "values": {k: v.tolist() for k, v in self.values.items()},
        }


def _unit_direction(rng: np.random.Generator, size: int) -> np.ndarray:
    d = rng.standard_normal(size)
    return d / np.linalg.norm(d)


def loss_surface(
    center: ClassifierParams,
    dataset: Dataset,
    kinds: Sequence[str] = ("ce", "rce"),
    grid_size: int = 21,
    seed: int = 0,
    a: float = DEFAULT_RCE_A,
) -> SurfaceProbe:
    """Evaluate ``L(center + alpha*u + beta*v)`` on a ``grid_size`` x ``grid_size`` grid over [-1, 1]^2.

    ``u`` and ``v`` are random unit vectors in flattened parameter space.
    ``values[kind][i, j]`` is the loss at ``(alphas[i], betas[j])``.
    """
    if grid_size < 2:
        raise ValueError("grid_size must be >= 2")
    rng = np.random.default_rng(seed)
    u = _unit_direction(rng, center.size)
    v = _unit_direction(rng, center.size)
    alphas = np.linspace(-1.0, 1.0, grid_size)
    betas = np.linspace(-1.0, 1.0, grid_size)
    values = {k: np.empty((grid_size, grid_size)) for k in kinds}
    for i, al in enumerate(alphas):
        for j, be in enumerate(betas):
            p = center.with_vector(center.vector + al * u + be * v)
            for k in kinds:
                values[k][i, j] = dataset_loss(p, dataset, k, a=a)
    return SurfaceProbe(center, u, v, alphas, betas, values)


def flat_fraction(surface: np.ndarray, spacing: float, threshold: float = 1e-3) -> float:
    """Fraction of grid cells whose finite-difference gradient norm is below ``threshold``."""
    gi, gj = np.gradient(surface, spacing)
    return float(np.mean(np.hypot(gi, gj) < threshold))


# --- training curves --------------------------------------------------------


def cross_loss_curves(train_set: Dataset, config: TrainConfig, train_loss: Optional[str] = None) -> list:
    """Train with one loss and record (CE, RCE) on the training set after every epoch.

    Entry 0 holds the losses at initialization.
    """
    if train_loss is not None:
        config = config.with_(loss=train_loss)
    a = config.rce_a
    init = ClassifierParams.initialize(train_set.feature_dim, train_set.num_classes, config.hidden, config.seed)
    curves = [(dataset_loss(init, train_set, "ce"), dataset_loss(init, train_set, "rce", a=a))]

    def record(_, params):
        curves.append((dataset_loss(params, train_set, "ce"), dataset_loss(params, train_set, "rce", a=a)))

    train(train_set.without_clean_flags(), config, init=init, on_epoch=record)
    return curves


# --- Self-BLEU ---------------------------------------------------------------

BLEU_EPSILON = 1e-9


def _ngrams(tokens, n):
    return Counter(tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1))


def bleu4(hypothesis: Sequence[str], references: Sequence[Sequence[str]]) -> float:
    """Sentence BLEU-4 with uniform weights, clipped counts and the standard brevity penalty.

    A zero n-gram match count is replaced by ``BLEU_EPSILON``.
    """
    hyp_len = len(hypothesis)
    if hyp_len == 0:
        return 0.0
    log_p = 0.0
    for n in range(1, 5):
        hyp = _ngrams(hypothesis, n)
        total = sum(hyp.values())
        if total == 0:
            return 0.0
        max_ref = Counter()
        for ref in references:
            for gram, c in _ngrams(ref, n).items():
                max_ref[gram] = max(max_ref[gram], c)
        matched = sum(min(c, max_ref[g]) for g, c in hyp.items())
        log_p += 0.25 * math.log((matched or BLEU_EPSILON) / total)
    # closest reference length, shorter one on ties
    ref_len = min((abs(len(r) - hyp_len), len(r)) for r in references)[1]
    bp = 1.0 if hyp_len > ref_len else math.exp(1.0 - ref_len / hyp_len)
    return bp * math.exp(log_p)


def self_bleu4(texts: Sequence[str], sample: int = 1000, seed: int = 0) -> float:
    """Mean BLEU-4 of up to ``sample`` random texts against all remaining texts."""
    if len(texts) < 2:
        raise ValueError("Self-BLEU needs at least two texts")
    tokens = [t.split() for t in texts]
    rng = np.random.default_rng(seed)
    n = len(tokens)
    chosen = np.sort(rng.choice(n, size=min(sample, n), replace=False))
    scores = [bleu4(tokens[i], tokens[:i] + tokens[i + 1 :]) for i in chosen]
    return float(np.mean(scores))


# --- report -----------------------------------------------------------------


def file_sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def report_schema() -> dict:
    return json.loads(resources.files("noisecurator").joinpath("report.schema.json").read_text())


def build_report(
    config: dict,
    config_hash: str,
    trace: Optional[list] = None,
    auroc: Optional[float] = None,
    accuracies: Optional[dict] = None,
    surfaces: Optional[dict] = None,
    artifacts: Optional[dict] = None,
    extra: Optional[dict] = None,
) -> dict:
    trace = trace or []
    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "config_hash": config_hash,
        "config": config,
        "trace": trace,
        "histograms": [r["histogram"] for r in trace if "histogram" in r],
        "auroc": auroc,
        "accuracies": accuracies or {},
        "surfaces": surfaces or {},
        "artifacts": artifacts or {},
        "extra": extra or {},
    }


def emit_report(report: dict, path, validate: bool = True) -> None:
    """Write the report as canonical JSON (sorted keys), optionally schema-checked first."""
    if validate:
        import jsonschema

        jsonschema.validate(report, report_schema())
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True) + "\n")
