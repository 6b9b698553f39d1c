"""End-to-end run: data, noise, reweighting, subset sampling, training, evaluation, report.

All artifacts of one run go to ``<output_dir>/run-<config hash>/``, so every
file path names the configuration that produced it, and the report lists the
sha256 of each artifact.
"""

from __future__ import annotations

import dataclasses
import json
import shutil
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .bilevel import run_bilevel
from .config import RunConfig
from .data import SplitSpec, load_dataset, make_gaussian_blobs, save_dataset, split
from .evaluation import build_report, emit_report, file_sha256, loss_surface, separation_auroc
from .model import evaluate_accuracy, featurize, save_params
from .noise import inject_noise
from .sampling import normalize_weights, sample_subset
from .training import train

STAGES = ("data", "reweight", "sample", "train", "evaluate", "surface", "report")


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage


class OutputExistsError(FileExistsError):
    pass


def run_dir(config: RunConfig) -> Path:
    return Path(config.output_dir) / f"run-{config.config_hash()}"


def plan(config: RunConfig) -> list:
    """Human-readable description of every stage, in order."""
    out = run_dir(config)
    if config.train_path:
        source = f"load {config.train_path}" + (f" + {config.val_path}" if config.val_path else "")
    else:
        source = (
            f"generate blobs: {config.blob_classes} classes x {config.blob_n_per_class}, "
            f"d={config.blob_dim}, separation={config.blob_separation}"
        )
    noise = "no label noise" if config.noise_model == "none" else f"{config.noise_model} noise"
    budget = config.budget if config.budget is not None else "round(sum of weights)"
    return [
        f"data: {source}; {noise}; val_fraction={config.val_fraction} -> {out}/train.jsonl, val.jsonl",
        f"reweight: T={config.outer_iterations}, outer_step={config.outer_step} ({config.outer_optimizer}), "
        f"inner {config.inner_epochs} epoch(s) {config.inner_optimizer} lr={config.inner_step}, "
        f"outer loss {config.outer_loss} -> weights.jsonl, trace.json",
        f"sample: budget={budget}, seed={config.seed} -> subset_ids.txt",
        f"train: CE on the subset, {config.final_epochs} epochs -> params.bin",
        "evaluate: accuracies (subset and unweighted noisy baseline), weight AUROC -> metrics.json",
        f"surface: {config.surface_grid}x{config.surface_grid} CE/RCE grid around the trained params -> surface.json",
        "report: report.json with artifact hashes",
    ]


def write_weights(path, ids, weights) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for i, w in zip(ids, np.asarray(weights, dtype=np.float64)):
            fh.write(json.dumps({"id": i, "weight": float(w)}) + "\n")


def read_weights(path) -> tuple:
    ids, values = [], []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                rec = json.loads(line)
                ids.append(str(rec["id"]))
                values.append(float(rec["weight"]))
            except (json.JSONDecodeError, KeyError, TypeError, ValueError):
                raise ValueError(f"{path} line {lineno}: expected {{\"id\": str, \"weight\": float}}") from None
    return ids, np.asarray(values)


def write_ids(path, ids) -> None:
    Path(path).write_text("".join(f"{i}\n" for i in ids), encoding="utf-8")


def read_ids(path) -> list:
    return [line.strip() for line in Path(path).read_text(encoding="utf-8").splitlines() if line.strip()]


def _prepare_data(config: RunConfig):
    seed = config.seed
    test = None
    if config.train_path:
        pool = load_dataset(config.train_path, config.num_classes, config.feature_dim)
        k = pool.num_classes
        val = load_dataset(config.val_path, k) if config.val_path else None
        if config.test_path:
            test = load_dataset(config.test_path, k)
    else:
        n, t = config.blob_n_per_class, config.blob_test_per_class
        blobs = make_gaussian_blobs(n + t, config.blob_classes, config.blob_dim, config.blob_separation, seed)
        if t > 0:
            pool, test = split(blobs, SplitSpec(n / (n + t), seed))
        else:
            pool = blobs
        val = None
    spec = config.features()
    if not pool.is_vector:
        pool = featurize(pool, spec)
        val = featurize(val, spec) if val is not None and not val.is_vector else val
        test = featurize(test, spec) if test is not None and not test.is_vector else test
    noise = config.noise()
    if noise is not None:
        pool = inject_noise(pool, noise)
        if val is not None:
            val = inject_noise(val, dataclasses.replace(noise, seed=seed + 1))
    if val is None:
        train_set, val = split(pool, SplitSpec(1.0 - config.val_fraction, seed))
    else:
        train_set = pool
    return train_set, val, test


def run_pipeline(config: RunConfig, force: bool = False, log: Callable[[str], None] = print) -> dict:
    """Run every stage and return the report. Raises :class:`StageError` naming the failing stage."""
    out = run_dir(config)
    if out.exists() and any(out.iterdir()):
        if not force:
            raise OutputExistsError(f"{out} already holds outputs; pass --force to overwrite")
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)
    chash = config.config_hash()
    artifacts = {}

    def record(name: str, path: Path) -> None:
        artifacts[name] = {"path": path.name, "sha256": file_sha256(path)}

    def stage(name: str):
        log(f"[{name}]")
        return name

    current: Optional[str] = None
    try:
        current = stage("data")
        (out / "config.json").write_text(
            json.dumps({"config_hash": chash, "config": config.to_dict()}, indent=2, sort_keys=True) + "\n"
        )
        record("config", out / "config.json")
        train_set, val, test = _prepare_data(config)
        for name, ds in (("train", train_set), ("val", val), ("test", test)):
            if ds is not None:
                save_dataset(ds, out / f"{name}.jsonl")
                record(name, out / f"{name}.jsonl")

        current = stage("reweight")
        weights, trace = run_bilevel(train_set, val, config.bilevel())
        write_weights(out / "weights.jsonl", train_set.ids, weights.values)
        record("weights", out / "weights.jsonl")
        (out / "trace.json").write_text(json.dumps(trace.records, indent=1) + "\n")
        record("trace", out / "trace.json")

        current = stage("sample")
        budget = config.budget if config.budget is not None else max(1, int(round(weights.values.sum())))
        probs = normalize_weights(weights, budget)
        chosen = sample_subset(probs, config.seed)
        write_ids(out / "subset_ids.txt", [train_set.ids[i] for i in chosen])
        record("subset_ids", out / "subset_ids.txt")

        current = stage("train")
        final_cfg = config.final_training()
        params = train(train_set.subset(chosen), final_cfg)
        save_params(params, out / "params.bin", config_hash=chash)
        record("params", out / "params.bin")
        record("params_meta", out / "params.bin.json")

        current = stage("evaluate")
        eval_set = test if test is not None else val
        baseline = train(train_set, final_cfg)
        accuracies = {
            "subset": evaluate_accuracy(params, eval_set),
            "noisy_full": evaluate_accuracy(baseline, eval_set),
        }
        auroc = None
        if train_set.clean is not None and 0 < train_set.clean.sum() < len(train_set):
            auroc = separation_auroc(weights.values, train_set.clean)
        metrics = {
            "config_hash": chash,
            "evaluated_on": "test" if test is not None else "val",
            "accuracies": accuracies,
            "auroc": auroc,
            "subset_size": int(chosen.size),
            "budget": budget,
        }
        (out / "metrics.json").write_text(json.dumps(metrics, indent=2, sort_keys=True) + "\n")
        record("metrics", out / "metrics.json")

        current = stage("surface")
        probe = loss_surface(params, val, ("ce", "rce"), config.surface_grid, config.seed, config.rce_a)
        surface = {"config_hash": chash, **probe.to_json()}
        (out / "surface.json").write_text(json.dumps(surface) + "\n")
        record("surface", out / "surface.json")

        current = stage("report")
        report = build_report(
            config.to_dict(),
            chash,
            trace=trace.records,
            auroc=auroc,
            accuracies=accuracies,
            surfaces={"final": probe.to_json()},
            artifacts=artifacts,
            extra={"subset_size": int(chosen.size), "budget": budget},
        )
        emit_report(report, out / "report.json")
    except Exception as exc:
        raise StageError(current or "setup", exc) from exc
    log(f"done: {out}")
    return report
