"""Command-line entry point: train, eval, predict, export-embeddings, gradcheck.

Exit codes: 0 success, 1 runtime failure, 2 usage/config error. Every file
artifact is written atomically; reports emit both JSON and delimited/text
forms, with matplotlib figures rendered alongside them.
"""

from __future__ import annotations

import argparse
import hashlib
import io
import json
import os
import sys
from dataclasses import fields

import numpy as np

from . import data as data_mod
from . import metrics as metrics_mod
from . import model as model_mod
from . import plots
from .errors import CgmvaeError, CheckpointError, ConfigError, DatasetParseError, TrainingAborted
from .fileio import atomic_write_text
from .model import ModelConfig
from .presets import PRESETS
from .training import TrainConfig, train
from .verify import run_gradcheck

CONFIG_DEFAULTS = {
    # optimization
    "learning_rate": 1e-3, "batch_size": 128, "epochs": 100, "weight_decay": 0.0,
    "seed": 0, "train_fraction": 1.0, "selection_metric": "example_f1", "threshold": 0.5,
    "kl_warmup_epochs": 20,
    # architecture / objective
    "embed_dim": 2048, "latent_dim": 64, "feature_hidden": [256, 512, 256],
    "label_hidden": [512, 256], "decoder_hidden": [512, 512],
    "dropout": 0.5, "tau": 0.5, "alpha": 1.0, "beta": 0.5, "prior": "mixture",
    # splitting
    "split_seed": 0, "split_fractions": [0.8, 0.1, 0.1],
}

_MODEL_KEYS = {f.name for f in fields(ModelConfig)} - {"input_dim", "n_labels"}
_TRAIN_KEYS = {f.name for f in fields(TrainConfig)}


def _resolve_config(args) -> dict:
    cfg = dict(CONFIG_DEFAULTS)
    if getattr(args, "preset", None):
        if args.preset not in PRESETS:
            raise ConfigError(f"unknown preset {args.preset!r}; choices: {sorted(PRESETS)}")
        cfg.update(PRESETS[args.preset])
    if getattr(args, "config", None):
        if not os.path.exists(args.config):
            raise ConfigError(f"config file not found: {args.config}")
        try:
            with open(args.config, "r", encoding="utf-8") as fh:
                file_cfg = json.load(fh)
        except json.JSONDecodeError as e:
            raise ConfigError(f"config file {args.config} is not valid JSON: {e}") from None
        if not isinstance(file_cfg, dict):
            raise ConfigError(f"config file {args.config} must hold a JSON object")
        unknown = set(file_cfg) - set(CONFIG_DEFAULTS)
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        cfg.update(file_cfg)
    for key in CONFIG_DEFAULTS:
        flag = getattr(args, key, None)
        if flag is not None:
            cfg[key] = flag
    return cfg


def _dataset_paths(args) -> dict:
    """Resolve the dataset source flags into concrete paths."""
    if getattr(args, "sparse", None):
        return {"format": "sparse-multilabel", "sparse": args.sparse}
    x, y = getattr(args, "dataset_x", None), getattr(args, "dataset_y", None)
    if getattr(args, "dataset", None):
        base = args.data_dir or os.environ.get("CGMVAE_DATA_DIR", "data")
        x = x or os.path.join(base, args.dataset, "X.csv")
        y = y or os.path.join(base, args.dataset, "Y.csv")
    if not x or not y:
        raise ConfigError("provide --dataset-x/--dataset-y, --sparse, or --dataset NAME")
    return {"format": "dense-csv", "x": x, "y": y}


def _load_dataset(src: dict, args) -> data_mod.Dataset:
    for key in ("x", "y", "sparse"):
        path = src.get(key)
        if path and not os.path.exists(path):
            raise ConfigError(f"dataset file not found: {path}")
    if src["format"] == "sparse-multilabel":
        ds = data_mod.load_sparse(src["sparse"])
    else:
        names = None
        if getattr(args, "label_names", None):
            with open(args.label_names, "r", encoding="utf-8") as fh:
                names = [line.strip() for line in fh if line.strip()]
        ds = data_mod.load_dense(src["x"], src["y"], label_names=names)
    return ds


def _apply_split(ds, cfg: dict, args):
    manifest = getattr(args, "split_manifest", None)
    if manifest:
        if not os.path.exists(manifest):
            raise ConfigError(f"split manifest not found: {manifest}")
        return data_mod.apply_split_manifest(ds, manifest)
    return data_mod.split(ds, tuple(cfg["split_fractions"]), seed=cfg["split_seed"])


def _fingerprint(paths: list[str]) -> dict:
    out = {}
    for p in paths:
        h = hashlib.sha256()
        with open(p, "rb") as fh:
            h.update(fh.read())
        out[os.path.basename(p)] = h.hexdigest()
    return out


def _write_csv(path: str, arr: np.ndarray, header: str = ""):
    buf = io.StringIO()
    np.savetxt(buf, arr, fmt="%.17g", delimiter=",", header=header, comments="")
    atomic_write_text(path, buf.getvalue())


def _write_pgm(path: str, matrix: np.ndarray):
    """ASCII PGM; similarity +1 renders black, -1 white."""
    px = np.round((1.0 - (np.clip(matrix, -1, 1) + 1.0) / 2.0) * 255).astype(int)
    h, w = px.shape
    lines = ["P2", f"{w} {h}", "255"]
    lines += [" ".join(str(v) for v in row) for row in px]
    atomic_write_text(path, "\n".join(lines) + "\n")


def _report_from_checkpoint(ckpt_path: str, ds, split_name: str, threshold: float):
    """Evaluate a saved checkpoint; uses the normalization stats it carries."""
    params, config, meta = model_mod.load_checkpoint(ckpt_path)
    model_mod.check_compatible(config, ds.n_features, ds.n_labels)
    rows = ds.rows(split_name)
    extra = meta.get("extra") or {}
    if "norm_mean" in extra and "norm_std" in extra:
        x = (ds.features[rows] - extra["norm_mean"]) / extra["norm_std"]
    else:
        x = ds.normalized(rows)
    probs = model_mod.predict(params, config, x)
    return metrics_mod.compute_report(probs, ds.labels[rows], threshold), meta


def _emit_report(report, out_dir: str, stem: str, label_names, figures: bool):
    atomic_write_text(os.path.join(out_dir, f"{stem}.json"), report.to_json() + "\n")
    atomic_write_text(os.path.join(out_dir, f"{stem}.txt"), report.to_table() + "\n")
    if figures:
        plots.save_per_class_f1(report, os.path.join(out_dir, f"{stem}_per_class_f1.png"),
                                label_names)


# ---------------------------------------------------------------------------
# subcommands


def cmd_train(args) -> int:
    cfg = _resolve_config(args)
    src = _dataset_paths(args)
    ds = _load_dataset(src, args)
    ds = _apply_split(ds, cfg, args)

    model_config = ModelConfig(
        input_dim=ds.n_features, n_labels=ds.n_labels,
        **{k: cfg[k] for k in _MODEL_KEYS},
    )
    train_config = TrainConfig(**{k: cfg[k] for k in _TRAIN_KEYS})

    out = args.out
    os.makedirs(out, exist_ok=True)
    artifacts = {
        "best_checkpoint": os.path.join(out, "best.ckpt"),
        "last_checkpoint": os.path.join(out, "last.ckpt"),
        "runlog": os.path.join(out, "runlog.jsonl"),
        "timing": os.path.join(out, "timing.json"),
        "test_report": os.path.join(out, "test_report.json"),
    }
    manifest = {
        "command": "train",
        "preset": args.preset,
        "config_file": args.config,
        "resolved_config": cfg,
        "dataset": {**src, "split_manifest": args.split_manifest,
                    "fingerprint": _fingerprint([p for p in
                                                 (src.get("x"), src.get("y"), src.get("sparse"),
                                                  args.split_manifest) if p])},
        "artifacts": artifacts,
    }
    atomic_write_text(os.path.join(out, "manifest.json"),
                      json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    atomic_write_text(os.path.join(out, "config.resolved.json"),
                      json.dumps(cfg, indent=2, sort_keys=True) + "\n")

    try:
        result = train(ds, model_config, train_config)
    except TrainingAborted as e:
        print(f"training aborted: {e}", file=sys.stderr)
        stats = {"norm_mean": e.dataset.feature_mean, "norm_std": e.dataset.feature_std}
        for tag, params in (("best", e.best_params), ("last_good", e.last_good_params)):
            if params is not None:
                model_mod.save_checkpoint(
                    os.path.join(out, f"{tag}.ckpt"), params, model_config,
                    seed=train_config.seed, epoch=len(e.runlog.records),
                    label_names=ds.label_names, extra_arrays=stats)
        atomic_write_text(artifacts["runlog"], e.runlog.to_jsonl())
        return 1

    eff_ds = result.dataset
    norm_extra = {"norm_mean": eff_ds.feature_mean, "norm_std": eff_ds.feature_std}
    model_mod.save_checkpoint(artifacts["best_checkpoint"], result.best_params, model_config,
                              seed=train_config.seed, epoch=result.runlog.best_epoch,
                              label_names=ds.label_names, extra_arrays=norm_extra)
    model_mod.save_checkpoint(artifacts["last_checkpoint"], result.last_params, model_config,
                              seed=train_config.seed, epoch=train_config.epochs,
                              label_names=ds.label_names, extra_arrays=norm_extra)
    atomic_write_text(artifacts["runlog"], result.runlog.to_jsonl())
    atomic_write_text(artifacts["timing"], json.dumps(
        {"per_epoch_s": result.runlog.wall_clock,
         "total_s": float(np.sum(result.runlog.wall_clock))}, indent=2) + "\n")

    report, _ = _report_from_checkpoint(artifacts["best_checkpoint"], eff_ds, "test",
                                        train_config.threshold)
    _emit_report(report, out, "test_report", ds.label_names, not args.no_figures)
    if not args.no_figures:
        plots.save_training_curves(result.runlog, os.path.join(out, "training_curves.png"))
    print(report.to_table())
    print(f"best epoch {result.runlog.best_epoch}; artifacts in {out}")
    return 0


def cmd_eval(args) -> int:
    src = _dataset_paths(args)
    ds = _load_dataset(src, args)
    cfg = {"split_seed": args.split_seed if args.split_seed is not None else 0,
           "split_fractions": CONFIG_DEFAULTS["split_fractions"]}
    ds = _apply_split(ds, cfg, args)
    threshold = args.threshold if args.threshold is not None else 0.5
    report, meta = _report_from_checkpoint(args.checkpoint, ds, args.split, threshold)
    print(report.to_table())
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        _emit_report(report, args.out, f"{args.split}_report",
                     meta.get("label_names") or ds.label_names, not args.no_figures)
    return 0


def cmd_predict(args) -> int:
    params, config, meta = model_mod.load_checkpoint(args.checkpoint)
    x = data_mod.parse_dense_matrix(args.features, "feature")
    if x.shape[1] != config.input_dim:
        raise CheckpointError(
            f"feature file has D={x.shape[1]}, checkpoint expects D={config.input_dim}")
    extra = meta.get("extra") or {}
    if "norm_mean" in extra and "norm_std" in extra:
        x = (x - extra["norm_mean"]) / extra["norm_std"]
    probs = model_mod.predict(params, config, x)
    _write_csv(args.out, probs)
    print(f"wrote {probs.shape[0]} x {probs.shape[1]} probabilities to {args.out}")
    return 0


def cmd_export_embeddings(args) -> int:
    params, config, meta = model_mod.load_checkpoint(args.checkpoint)
    out = args.out
    os.makedirs(out, exist_ok=True)
    names = meta.get("label_names")
    header = ",".join(names) if names else ""
    emb = params["label_emb"].data
    sim = model_mod.export_label_similarity(params)
    _write_csv(os.path.join(out, "label_embeddings.csv"), emb, header=header)
    _write_csv(os.path.join(out, "label_similarity.csv"), sim, header=header)
    if args.pgm:
        _write_pgm(os.path.join(out, "label_similarity.pgm"), sim)
    if not args.no_figures:
        plots.save_similarity_heatmap(sim, os.path.join(out, "label_similarity.png"), names)
    print(f"exported {emb.shape[0]} label embeddings to {out}")
    return 0


def cmd_gradcheck(args) -> int:
    report = run_gradcheck(tolerance=args.tolerance, seed=args.seed)
    print(report.summary())
    if args.out:
        atomic_write_text(args.out, report.to_json() + "\n")
    return 0 if report.passed else 1


# ---------------------------------------------------------------------------
# argument wiring


def _add_dataset_flags(p: argparse.ArgumentParser):
    p.add_argument("--dataset-x", help="dense features CSV (N x D, no header)")
    p.add_argument("--dataset-y", help="dense labels CSV (N x L of 0/1, no header)")
    p.add_argument("--sparse", help="sparse-multilabel file with #L=.. D=.. header")
    p.add_argument("--dataset", help="named dataset under --data-dir (X.csv/Y.csv pair)")
    p.add_argument("--data-dir", help="base directory for --dataset (default $CGMVAE_DATA_DIR or ./data)")
    p.add_argument("--split-manifest", help="file of N tags in {0,1,2} overriding the random split")
    p.add_argument("--split-seed", type=int, help="seed for the random split (default 0)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cgmvae")
    subs = parser.add_subparsers(dest="command", required=True)

    p = subs.add_parser("train", help="train a model and write run artifacts")
    _add_dataset_flags(p)
    p.add_argument("--label-names", help="optional file with one label name per line")
    p.add_argument("--preset", help=f"hyperparameter preset: {', '.join(sorted(PRESETS))}")
    p.add_argument("--config", help="flat JSON config file (flags override it)")
    p.add_argument("--out", required=True, help="output directory for run artifacts")
    p.add_argument("--no-figures", action="store_true", help="skip PNG rendering")
    p.add_argument("--seed", type=int)
    p.add_argument("--epochs", type=int)
    p.add_argument("--batch-size", dest="batch_size", type=int)
    p.add_argument("--lr", dest="learning_rate", type=float)
    p.add_argument("--weight-decay", dest="weight_decay", type=float)
    p.add_argument("--kl-warmup-epochs", dest="kl_warmup_epochs", type=int)
    p.add_argument("--train-fraction", dest="train_fraction", type=float)
    p.add_argument("--threshold", type=float)
    p.add_argument("--alpha", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--tau", type=float)
    p.add_argument("--embed-dim", dest="embed_dim", type=int)
    p.add_argument("--latent-dim", dest="latent_dim", type=int)
    p.add_argument("--dropout", type=float)
    p.add_argument("--prior", choices=["mixture", "standard"])
    p.set_defaults(func=cmd_train)

    p = subs.add_parser("eval", help="evaluate a checkpoint on one split")
    p.add_argument("--checkpoint", required=True)
    _add_dataset_flags(p)
    p.add_argument("--split", default="test", choices=["train", "val", "test"])
    p.add_argument("--threshold", type=float)
    p.add_argument("--out", help="optional directory for report artifacts")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_eval)

    p = subs.add_parser("predict", help="write class probabilities for a feature file")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--features", required=True, help="dense CSV of feature rows")
    p.add_argument("--out", required=True, help="output CSV path")
    p.set_defaults(func=cmd_predict)

    p = subs.add_parser("export-embeddings", help="dump label embeddings and similarities")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--pgm", action="store_true", help="also write a PGM rendering")
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_export_embeddings)

    p = subs.add_parser("gradcheck", help="run the analytic/finite-difference oracle suite")
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.add_argument("--seed", type=int, default=2)
    p.add_argument("--out", help="optional JSON report path")
    p.set_defaults(func=cmd_gradcheck)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code) if e.code is not None else 2
    try:
        return args.func(args)
    except (ConfigError, DatasetParseError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except FileNotFoundError as e:
        print(f"error: file not found: {e.filename}", file=sys.stderr)
        return 2
    except CgmvaeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
