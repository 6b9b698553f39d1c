"""Flat ``key = value`` run configuration for the pipeline.

One key per line, ``#`` starts a comment. Every key maps to a field of
:class:`RunConfig`; unknown keys, values of the wrong type and a missing
``output_dir`` are rejected with the key named in the message. Values given
as overrides (the CLI flags) win over the file.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
import os
import typing
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Optional

from .bilevel import BilevelConfig
from .model import FeatureSpec
from .noise import NoiseSpec
from .training import TrainConfig

SEED_ENV = "NOISECURATOR_SEED"
REQUIRED = ("output_dir",)
PATH_KEYS = ("train_path", "val_path", "test_path")


class ConfigError(ValueError):
    def __init__(self, key: str, message: str):
        super().__init__(f"{key}: {message}")
        self.key = key


@dataclass(frozen=True)
class RunConfig:
    output_dir: str = ""
    seed: int = 0

    # data: either ingest files or generate Gaussian blobs
    train_path: Optional[str] = None
    val_path: Optional[str] = None
    test_path: Optional[str] = None
    num_classes: Optional[int] = None
    feature_mode: str = "identity"
    feature_dim: Optional[int] = None
    ngram_order: int = 1
    blob_n_per_class: int = 5000
    blob_classes: int = 2
    blob_dim: int = 2
    blob_separation: float = 4.0
    blob_test_per_class: int = 1000
    val_fraction: float = 0.2

    # label noise applied to the training pool ("none" keeps labels as they are)
    noise_model: str = "uniform"
    noise_eta: float = 0.3
    noise_matrix: Optional[str] = None
    noise_eta_max: float = 0.0
    noise_tau: float = 1.0

    # bilevel reweighting
    outer_iterations: int = 50
    outer_step: float = 0.1
    outer_optimizer: str = "adam"
    inner_epochs: int = 1
    inner_step: float = 0.1
    inner_batch_size: int = 100
    inner_optimizer: str = "sgd"
    outer_loss: str = "rce"
    rce_a: float = -4.0
    hidden: Optional[int] = None
    warm_start: bool = True

    # subset selection and the final classifier
    budget: Optional[int] = None
    final_epochs: int = 20
    final_learning_rate: float = 0.1
    final_batch_size: int = 100
    final_optimizer: str = "sgd"
    surface_grid: int = 21

    def bilevel(self) -> BilevelConfig:
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
            seed=self.seed,
        )

    def final_training(self) -> TrainConfig:
        return TrainConfig(
            loss="ce",
            epochs=self.final_epochs,
            learning_rate=self.final_learning_rate,
            batch_size=self.final_batch_size,
            optimizer=self.final_optimizer,
            hidden=self.hidden,
            rce_a=self.rce_a,
            seed=self.seed,
        )

    def noise(self) -> Optional[NoiseSpec]:
        if self.noise_model == "none":
            return None
        matrix = None
        if self.noise_matrix:
            matrix = tuple(tuple(float(v) for v in row.split(",")) for row in self.noise_matrix.split(";"))
        return NoiseSpec(
            model=self.noise_model,
            eta=self.noise_eta,
            matrix=matrix,
            eta_max=self.noise_eta_max,
            tau=self.noise_tau,
            seed=self.seed,
        )

    def features(self) -> FeatureSpec:
        dim = self.feature_dim if self.feature_dim is not None else self.blob_dim
        return FeatureSpec(self.feature_mode, dim, self.ngram_order)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def config_hash(self) -> str:
        """First 16 hex digits of the sha256 of the canonical JSON of every field except ``output_dir``."""
        payload = {k: v for k, v in self.to_dict().items() if k != "output_dir"}
        blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


_HINTS = typing.get_type_hints(RunConfig)
FIELD_NAMES = tuple(f.name for f in fields(RunConfig))


def _base_type(key: str, hints: dict):
    hint = hints[key]
    args = [a for a in typing.get_args(hint) if a is not type(None)]
    return (args[0] if args else hint), type(None) in typing.get_args(hint)


def coerce(key: str, raw, owner=RunConfig) -> object:
    """Convert ``raw`` (a string from a file or flag, or an already typed value) to the type of
    field ``key`` of the dataclass ``owner``."""
    hints = _HINTS if owner is RunConfig else typing.get_type_hints(owner)
    if key not in hints:
        raise ConfigError(key, "unknown config key")
    kind, optional = _base_type(key, hints)
    if not isinstance(raw, str):
        if raw is None and optional:
            return None
        if kind is float and isinstance(raw, int) and not isinstance(raw, bool):
            return float(raw)
        if isinstance(raw, kind) and not (kind is int and isinstance(raw, bool)):
            return raw
        raise ConfigError(key, f"expected {kind.__name__}, got {raw!r}")
    text = raw.strip()
    if optional and text.lower() in ("", "none", "null"):
        return None
    try:
        if kind is bool:
            low = text.lower()
            if low in ("true", "yes", "1", "on"):
                return True
            if low in ("false", "no", "0", "off"):
                return False
            raise ValueError
        if kind is int:
            return int(text)
        if kind is float:
            return float(text)
    except ValueError:
        raise ConfigError(key, f"expected {kind.__name__}, got {text!r}") from None
    return text


def read_config_file(path) -> dict:
    values = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}", f"expected key = value, got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in _HINTS:
            raise ConfigError(key, f"unknown config key (line {lineno})")
        values[key] = coerce(key, value)
    return values


def parse_config(path=None, overrides: Optional[dict] = None, check_paths: bool = True) -> RunConfig:
    """Resolve a :class:`RunConfig` from defaults, then the file, then ``overrides``.

    The seed falls back to the ``NOISECURATOR_SEED`` environment variable when
    neither the file nor the overrides set it.
    """
    values = read_config_file(path) if path is not None else {}
    for key, raw in (overrides or {}).items():
        if raw is not None:
            values[key] = coerce(key, raw)
    if "seed" not in values and os.environ.get(SEED_ENV):
        values["seed"] = coerce("seed", os.environ[SEED_ENV])
    for key in REQUIRED:
        if not values.get(key):
            raise ConfigError(key, "missing required key")
    config = RunConfig(**values)
    if check_paths:
        for key in PATH_KEYS:
            p = getattr(config, key)
            if p is not None and not Path(p).exists():
                raise ConfigError(key, f"file not found: {p}")
    # Fail early on invalid sub-configurations rather than mid-pipeline.
    for build in (config.bilevel, config.final_training, config.noise, config.features):
        try:
            build()
        except ValueError as exc:
            raise ConfigError(build.__name__, str(exc)) from None
    return config
