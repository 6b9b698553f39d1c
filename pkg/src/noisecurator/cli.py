"""Command line entry point: ``noisecurator <subcommand> ...``.

Exit status is 0 on success, 1 when a stage or command fails and 2 for
usage or configuration errors.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .baselines import confidence_filter, small_loss_filter
from .bilevel import BilevelConfig, run_bilevel
from .config import FIELD_NAMES, SEED_ENV, ConfigError, RunConfig, coerce, parse_config
from .data import load_dataset, make_gaussian_blobs, save_dataset
from .evaluation import (
    build_report,
    emit_report,
    file_sha256,
    loss_surface,
    separation_auroc,
)
from .model import evaluate_accuracy, load_params, save_params
from .noise import NOISE_MODELS, NoiseSpec, inject_noise
from .pipeline import (
    OutputExistsError,
    StageError,
    plan,
    read_ids,
    read_weights,
    run_pipeline,
    write_ids,
    write_weights,
)
from .sampling import normalize_weights, sample_subset, top_k
from .training import OPTIMIZERS, TrainConfig, train


def _env_seed() -> int:
    raw = os.environ.get(SEED_ENV)
    if raw is None:
        return 0
    try:
        return int(raw)
    except ValueError:
        raise ConfigError(SEED_ENV, f"expected int, got {raw!r}") from None


def _writable(path, force: bool) -> Path:
    path = Path(path)
    if path.exists() and not force:
        raise OutputExistsError(f"{path} exists; pass --force to overwrite")
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def _seed(args) -> int:
    return args.seed if args.seed is not None else _env_seed()


def _select(dataset, ids_path):
    if ids_path is None:
        return dataset
    wanted = read_ids(ids_path)
    index = {i: n for n, i in enumerate(dataset.ids)}
    missing = [i for i in wanted if i not in index]
    if missing:
        raise ValueError(f"{len(missing)} ids not in the dataset, e.g. {missing[0]!r}")
    return dataset.subset(np.sort([index[i] for i in wanted]))


def _matrix(text):
    if text is None:
        return None
    return tuple(tuple(float(v) for v in row.split(",")) for row in text.split(";"))


# --- subcommands ------------------------------------------------------------


def cmd_gen_blobs(args) -> int:
    ds = make_gaussian_blobs(args.n_per_class, args.classes, args.dim, args.separation, _seed(args))
    save_dataset(ds, _writable(args.out, args.force))
    print(f"wrote {len(ds)} examples to {args.out}")
    return 0


def cmd_inject_noise(args) -> int:
    ds = load_dataset(args.input, args.num_classes)
    spec = NoiseSpec(
        model=args.model,
        eta=args.eta,
        matrix=_matrix(args.matrix),
        eta_max=args.eta_max,
        tau=args.tau,
        seed=_seed(args),
    )
    noisy = inject_noise(ds, spec)
    save_dataset(noisy, _writable(args.out, args.force))
    print(f"flipped {int((~noisy.clean).sum())} of {len(noisy)} labels -> {args.out}")
    return 0


def cmd_reweight(args) -> int:
    overrides = {k: getattr(args, k) for k in _BILEVEL_FLAGS if getattr(args, k, None) is not None}
    if args.config:
        shared = {k: v for k, v in overrides.items() if k in FIELD_NAMES}
        run = parse_config(args.config, {"output_dir": ".", **shared}, check_paths=False)
        extra = {k: coerce(k, v, BilevelConfig) for k, v in overrides.items() if k not in FIELD_NAMES}
        config = dataclasses.replace(run.bilevel(), **extra)
    else:
        overrides = {k: coerce(k, v, BilevelConfig) for k, v in overrides.items()}
        overrides.setdefault("seed", _env_seed())
        config = BilevelConfig(**overrides)
    train_set = load_dataset(args.train, args.num_classes)
    val = load_dataset(args.val, train_set.num_classes)
    out_w = _writable(args.out_weights, args.force)
    out_t = _writable(args.out_trace, args.force)
    weights, trace = run_bilevel(train_set, val, config)
    write_weights(out_w, train_set.ids, weights.values)
    out_t.write_text(json.dumps(trace.records, indent=1) + "\n")
    if train_set.clean is not None and 0 < train_set.clean.sum() < len(train_set):
        print(f"weights-vs-clean AUROC {separation_auroc(weights.values, train_set.clean):.4f}")
    print(f"wrote {out_w} and {out_t}")
    return 0


def cmd_sample_subset(args) -> int:
    ids, w = read_weights(args.weights)
    if args.top_k:
        chosen = top_k(w, args.budget)
    else:
        chosen = sample_subset(normalize_weights(w, args.budget), _seed(args))
    write_ids(_writable(args.out, args.force), [ids[i] for i in chosen])
    print(f"selected {chosen.size} ids (budget {args.budget}) -> {args.out}")
    return 0


def cmd_filter(args) -> int:
    ds = load_dataset(args.train, args.num_classes)
    config = TrainConfig(epochs=args.epochs, learning_rate=args.lr, batch_size=args.batch_size, seed=_seed(args))
    method = confidence_filter if args.method == "confidence" else small_loss_filter
    report = method(ds, config, args.keep)
    write_ids(_writable(args.out, args.force), [ds.ids[i] for i in report.kept])
    if ds.clean is not None and 0 < ds.clean.sum() < len(ds):
        print(f"{report.method} score AUROC {separation_auroc(report.scores, ds.clean):.4f}")
    print(f"kept {report.kept.size} ids -> {args.out}")
    return 0


def cmd_train(args) -> int:
    ds = _select(load_dataset(args.train, args.num_classes), args.ids)
    config = TrainConfig(
        loss=args.loss,
        epochs=args.epochs,
        learning_rate=args.lr,
        batch_size=args.batch_size,
        optimizer=args.optimizer,
        hidden=args.hidden,
        rce_a=args.rce_a,
        seed=_seed(args),
    )
    weights = None
    if args.weights:
        ids, w = read_weights(args.weights)
        if ids != list(ds.ids):
            raise ValueError("weights file ids do not match the training set order")
        weights = w
    out = _writable(args.out, args.force)
    params = train(ds, config, weights=weights)
    save_params(params, out, loss=args.loss, epochs=args.epochs, trained_on=str(args.train))
    print(f"trained on {len(ds)} examples -> {out}")
    return 0


def cmd_evaluate(args) -> int:
    params = load_params(args.params)
    ds = load_dataset(args.data, params.n_classes)
    metrics = {"accuracy": evaluate_accuracy(params, ds), "n": len(ds)}
    if args.weights:
        ids, w = read_weights(args.weights)
        wd = load_dataset(args.weights_data, None) if args.weights_data else ds
        if ids != list(wd.ids):
            raise ValueError("weights file ids do not match the dataset order")
        if wd.clean is None:
            raise ValueError("AUROC needs clean flags on the dataset the weights belong to")
        metrics["auroc"] = separation_auroc(w, wd.clean)
    text = json.dumps(metrics, indent=2, sort_keys=True)
    if args.out:
        _writable(args.out, args.force).write_text(text + "\n")
    print(text)
    return 0


def cmd_surface(args) -> int:
    params = load_params(args.params)
    ds = load_dataset(args.data, params.n_classes)
    kinds = tuple(k.strip() for k in args.losses.split(","))
    probe = loss_surface(params, ds, kinds, args.grid, _seed(args), args.rce_a)
    _writable(args.out, args.force).write_text(json.dumps(probe.to_json()) + "\n")
    print(f"{args.grid}x{args.grid} surface for {', '.join(kinds)} -> {args.out}")
    return 0


def cmd_report(args) -> int:
    config = {}
    chash = "unspecified"
    if args.config:
        run = parse_config(args.config, check_paths=False)
        config, chash = run.to_dict(), run.config_hash()
    trace = json.loads(Path(args.trace).read_text()) if args.trace else []
    metrics = json.loads(Path(args.metrics).read_text()) if args.metrics else {}
    surfaces = {}
    if args.surface:
        data = json.loads(Path(args.surface).read_text())
        surfaces["surface"] = {k: data[k] for k in ("alphas", "betas", "values")}
    artifacts = {}
    for item in args.artifact or []:
        name, _, path = item.partition("=")
        if not path:
            raise ValueError(f"--artifact expects name=path, got {item!r}")
        artifacts[name] = {"path": path, "sha256": file_sha256(path)}
    accuracies = metrics.get("accuracies")
    if accuracies is None and "accuracy" in metrics:
        accuracies = {"model": metrics["accuracy"]}
    report = build_report(config, chash, trace, metrics.get("auroc"), accuracies, surfaces, artifacts)
    emit_report(report, _writable(args.out, args.force))
    print(f"report -> {args.out}")
    return 0


def cmd_pipeline(args) -> int:
    overrides = {f.name: getattr(args, f.name) for f in fields(RunConfig) if getattr(args, f.name, None) is not None}
    config = parse_config(args.config, overrides)
    if args.dry_run:
        print(f"config hash {config.config_hash()}")
        for n, line in enumerate(plan(config), start=1):
            print(f"{n}. {line}")
        return 0
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=args.threads):
        report = run_pipeline(config, force=args.force)
    print(json.dumps({"accuracies": report["accuracies"], "auroc": report["auroc"]}, sort_keys=True))
    return 0


# --- parser -----------------------------------------------------------------

_BILEVEL_FLAGS = tuple(f.name for f in fields(BilevelConfig))


def _flag(name: str) -> str:
    return "--" + name.replace("_", "-")


def _common(p, seed=True, num_classes=True):
    p.add_argument("--force", action="store_true", help="overwrite existing output files")
    if seed:
        p.add_argument("--seed", type=int, default=None, help=f"random seed (default: ${SEED_ENV} or 0)")
    if num_classes:
        p.add_argument("--num-classes", type=int, default=None, help="declared K (default: max label + 1)")


def _typed(field_type):
    text = str(field_type)
    if "bool" in text:
        return lambda s: s
    if "int" in text:
        return int
    if "float" in text:
        return float
    return str


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="noisecurator", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-blobs", help="write a clean Gaussian-blobs dataset")
    p.add_argument("--n-per-class", type=int, default=500)
    p.add_argument("--classes", type=int, default=2)
    p.add_argument("--dim", type=int, default=2)
    p.add_argument("--separation", type=float, default=4.0)
    p.add_argument("--out", required=True)
    _common(p, num_classes=False)
    p.set_defaults(func=cmd_gen_blobs)

    p = sub.add_parser("inject-noise", help="corrupt labels with a noise model")
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--model", choices=NOISE_MODELS, default="uniform")
    p.add_argument("--eta", type=float, default=0.0, help="uniform flip rate")
    p.add_argument("--matrix", help='class transition matrix, rows separated by ";", e.g. "0.8,0.2;0.3,0.7"')
    p.add_argument("--eta-max", type=float, default=0.0, help="instance noise: flip rate at the boundary")
    p.add_argument("--tau", type=float, default=1.0, help="instance noise: margin length scale")
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_inject_noise)

    p = sub.add_parser("reweight", help="learn per-sample weights by bilevel optimization")
    p.add_argument("--train", required=True)
    p.add_argument("--val", required=True)
    p.add_argument("--config", help="key = value file; only the optimizer keys are used")
    p.add_argument("--out-weights", required=True)
    p.add_argument("--out-trace", required=True)
    for f in fields(BilevelConfig):
        if f.name == "seed":
            continue
        p.add_argument(_flag(f.name), dest=f.name, type=_typed(f.type), default=None, help=f"default {f.default}")
    _common(p)
    p.set_defaults(func=cmd_reweight)

    p = sub.add_parser("sample-subset", help="draw a budgeted subset from weights")
    p.add_argument("--weights", required=True)
    p.add_argument("--budget", type=int, required=True)
    p.add_argument("--top-k", action="store_true", help="take the budget highest weights instead of sampling")
    p.add_argument("--out", required=True)
    _common(p, num_classes=False)
    p.set_defaults(func=cmd_sample_subset)

    p = sub.add_parser("filter", help="baseline filtering by confidence or small loss")
    p.add_argument("--train", required=True)
    p.add_argument("--method", choices=("confidence", "small-loss"), required=True)
    p.add_argument("--keep", type=int, required=True)
    p.add_argument("--epochs", type=int, default=5)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_filter)

    p = sub.add_parser("train", help="train the classifier")
    p.add_argument("--train", required=True)
    p.add_argument("--ids", help="restrict training to the ids listed in this file")
    p.add_argument("--weights", help="per-sample loss weights (JSONL id/weight, same order as the data)")
    p.add_argument("--loss", choices=("ce", "rce", "mae"), default="ce")
    p.add_argument("--epochs", type=int, default=20)
    p.add_argument("--lr", type=float, default=0.1)
    p.add_argument("--batch-size", type=int, default=100)
    p.add_argument("--optimizer", choices=OPTIMIZERS, default="sgd")
    p.add_argument("--hidden", type=int, default=None, help="hidden units (default: linear model)")
    p.add_argument("--rce-a", type=float, default=-4.0)
    p.add_argument("--out", required=True)
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("evaluate", help="accuracy of saved params, optionally weight AUROC")
    p.add_argument("--params", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--weights", help="weights JSONL to score against clean flags")
    p.add_argument("--weights-data", help="dataset the weights belong to (default: --data)")
    p.add_argument("--out")
    _common(p, seed=False, num_classes=False)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("surface", help="loss values on a random 2-D slice around saved params")
    p.add_argument("--params", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--grid", type=int, default=21)
    p.add_argument("--losses", default="ce,rce")
    p.add_argument("--rce-a", type=float, default=-4.0)
    p.add_argument("--out", required=True)
    _common(p, num_classes=False)
    p.set_defaults(func=cmd_surface)

    p = sub.add_parser("report", help="assemble a schema-checked JSON report")
    p.add_argument("--config")
    p.add_argument("--trace")
    p.add_argument("--metrics")
    p.add_argument("--surface")
    p.add_argument("--artifact", action="append", metavar="NAME=PATH")
    p.add_argument("--out", required=True)
    _common(p, seed=False, num_classes=False)
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("pipeline", help="run every stage end to end")
    p.add_argument("--config", help="key = value file; flags below override it")
    p.add_argument("--dry-run", action="store_true", help="print the resolved stage plan and exit")
    p.add_argument("--threads", type=int, default=None, help="cap BLAS/OpenMP threads")
    p.add_argument("--force", action="store_true", help="overwrite an existing run directory")
    for f in fields(RunConfig):
        p.add_argument(_flag(f.name), dest=f.name, type=_typed(f.type), default=None, help=f"default {f.default!r}")
    p.set_defaults(func=cmd_pipeline)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except OutputExistsError as exc:
        print(f"refusing to overwrite: {exc}", file=sys.stderr)
        return 1
    except StageError as exc:
        print(str(exc), file=sys.stderr)
        return 1
    except (ValueError, OSError, FloatingPointError) as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
