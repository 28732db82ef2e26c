"""Command-line pipelines: generate, train, embed, label, classify, eval, inspect-checkpoint.

Every command reads an optional JSON config (``--config``); flags override
config values and unknown keys are rejected. All randomness derives from
``--seed`` through named child streams ("split", "init", "train", ...).

Exit codes: 0 success, 2 usage or configuration error, 3 numerical failure,
4 I/O error.
"""

from __future__ import annotations

import argparse
import csv
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from . import amas, mlas, nas, olas
from .checkpoint import inspect, load_checkpoint, model_from_checkpoint, save_checkpoint
from .contrastive import FeedbackBatch
from .data import Dataset, dataset_to_jsonl, load_feedback, load_jsonl, schema_sidecar, write_feedback
from .errors import AttrSeqError, ConfigError, NumericalError, UndefinedMetricError
from .metrics import (
    EmbeddingSet,
    MetricReport,
    accuracy,
    cluster_radius,
    density_cluster,
    knn_outlier_scores,
    nmi,
    roc_auc,
    silhouette,
    write_table,
)
from .numerics import Rng
from .synthetic import OUTLIER_LABEL, generate_synthetic, make_feedback, split_items, split_train_validation

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL, EXIT_IO = 0, 2, 3, 4

DEFAULTS: dict[str, dict] = {
    "generate": {
        "seed": 0, "out": None, "n_classes": 4, "per_class": 50, "u": 11, "r": 288, "len_min": 12, "len_max": 24,
        "noise": 0.0, "n_pairs": 100, "shared_chain": False, "concentration": 0.5, "attr_jitter": 0.0,
        "n_outliers": 0, "support": None,
    },
    "train": {
        "seed": 0, "out": None, "framework": "nas", "data": None, "feedback": None, "dim": 15, "lr": 0.01,
        "epochs": 10, "validation_fraction": 0.2,
        # nas
        "hidden": [], "T_A": 5, "T_S": 5, "eps_A": 1e-6, "eps_S": 1e-6, "per_step_updates": True,
        "corpus_mode": False, "conditioned": True,
        # mlas / olas
        "margin": 1.0, "eps": 1e-6, "fusion": "balanced", "act": "sigmoid", "distance_mode": "exact",
        "pretrain_epochs": 0, "omega_a": 0.5, "layers": 3, "distance": "euclidean", "n_pairs": 200,
        # amas
        "variant": "asha", "lambda": 1.0, "n_first": None, "batch_size": 16, "patience": None, "head": "softmax",
        "scalar_scores": False, "l2": 1e-4, "dropout": True,
    },
    "embed": {"seed": 0, "out": None, "checkpoint": None, "data": None},
    "label": {"seed": 0, "out": None, "checkpoint": None, "gallery": None, "queries": None},
    "classify": {"seed": 0, "out": None, "checkpoint": None, "data": None, "trace": False, "top_k": None},
    "eval": {
        "seed": 0, "out": None, "embeddings": None, "checkpoint": None, "data": None, "outlier_label": OUTLIER_LABEL,
        "k": [5], "min_cluster_size": [5], "radius": None, "runs": [],
    },
    "inspect-checkpoint": {"checkpoint": None},
}

# flag name -> config key
FLAG_KEYS = {
    "seed": "seed", "out": "out", "framework": "framework", "dim": "dim", "lr": "lr", "epochs": "epochs",
    "margin": "margin", "omega_a": "omega_a", "lambda_": "lambda", "k": "k", "min_cluster_size": "min_cluster_size",
    "data": "data", "feedback": "feedback", "checkpoint": "checkpoint", "gallery": "gallery", "queries": "queries",
    "embeddings": "embeddings",
}


class UsageError(ConfigError):
    pass


# ------------------------------------------------------------------ config


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _u64(text: str) -> int:
    value = int(text)
    if not 0 <= value < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="attrseq", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in DEFAULTS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, help="JSON config file")
        if name == "inspect-checkpoint":
            p.add_argument("--checkpoint", type=str)
            p.add_argument("path", nargs="?", help="checkpoint envelope (.json)")
            continue
        p.add_argument("--seed", type=_u64)
        p.add_argument("--out", type=str, help="output directory")
        keys = DEFAULTS[name]
        for flag, key, kind in [
            ("--framework", "framework", str), ("--dim", "dim", int), ("--lr", "lr", float),
            ("--epochs", "epochs", int), ("--margin", "margin", float), ("--omega-a", "omega_a", float),
            ("--data", "data", str), ("--feedback", "feedback", str), ("--checkpoint", "checkpoint", str),
            ("--gallery", "gallery", str), ("--queries", "queries", str), ("--embeddings", "embeddings", str),
        ]:
            if key in keys:
                p.add_argument(flag, dest=key.replace("-", "_"), type=kind)
        if "lambda" in keys:
            p.add_argument("--lambda", dest="lambda_", type=float)
        if "k" in keys:
            p.add_argument("--k", type=_int_list)
        if "min_cluster_size" in keys:
            p.add_argument("--min-cluster-size", dest="min_cluster_size", type=_int_list)
    return parser


def resolve_config(command: str, args: argparse.Namespace) -> dict:
    cfg = dict(DEFAULTS[command])
    if args.config is not None:
        try:
            loaded = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {args.config}: invalid JSON ({exc.msg})") from None
        if not isinstance(loaded, dict):
            raise UsageError(f"config {args.config} must hold a JSON object")
        unknown = sorted(set(loaded) - set(cfg))
        if unknown:
            raise UsageError(f"unknown config keys for {command}: {', '.join(unknown)}")
        cfg.update(loaded)
    for attr, key in FLAG_KEYS.items():
        value = getattr(args, attr, None)
        if value is not None and key in cfg:
            cfg[key] = value
    if command == "inspect-checkpoint" and getattr(args, "path", None):
        cfg["checkpoint"] = args.path
    return cfg


def _require(cfg: dict, *keys: str) -> None:
    missing = [k for k in keys if not cfg.get(k)]
    if missing:
        raise UsageError(f"missing required setting(s): {', '.join(missing)}")


def _existing(path: str, what: str) -> Path:
    p = Path(path)
    if not p.is_file():
        raise UsageError(f"{what} file not found: {path}")
    return p


def _out_dir(cfg: dict) -> Path:
    _require(cfg, "out")
    return Path(cfg["out"])


def _prepare_out(out: Path, cfg: dict) -> None:
    out.mkdir(parents=True, exist_ok=True)
    _write_json(out / "config.json", cfg)


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n", encoding="utf-8")


def _map_records(fn: Callable, records: Sequence) -> list:
    """Order-stable map, parallel when ``ATTRSEQ_THREADS`` > 1."""
    try:
        threads = int(os.environ.get("ATTRSEQ_THREADS", "1"))
    except ValueError:
        raise UsageError("ATTRSEQ_THREADS must be an integer") from None
    if threads <= 1 or len(records) < 2:
        return [fn(rec) for rec in records]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, records))


# ----------------------------------------------------------------- commands


def cmd_generate(cfg: dict) -> None:
    out = _out_dir(cfg)
    if cfg["len_min"] > cfg["len_max"]:
        raise UsageError("len_min must not exceed len_max")
    root = Rng(cfg["seed"])
    ds = generate_synthetic(
        root.child("corpus"), cfg["n_classes"], cfg["per_class"], cfg["u"], cfg["r"],
        (cfg["len_min"], cfg["len_max"]), cfg["noise"], support=cfg["support"], shared_chain=cfg["shared_chain"],
        concentration=cfg["concentration"], attr_jitter=cfg["attr_jitter"], n_outliers=cfg["n_outliers"],
    )
    pairs = make_feedback(ds, root.child("feedback"), cfg["n_pairs"]) if cfg["n_pairs"] else []
    _prepare_out(out, cfg)
    dataset_to_jsonl(ds, out / "dataset.jsonl")
    write_feedback(pairs, out / "feedback.jsonl")
    _write_json(out / "manifest.json", {
        "seed": cfg["seed"], "n_records": len(ds), "n_pairs": len(pairs), "classes": ds.classes(),
        "r": ds.vocab.r, "u": ds.u, "files": ["dataset.jsonl", "feedback.jsonl"],
    })


def _history_csv(path: Path, history: list[dict]) -> None:
    cols = ["epoch", "train_loss", "val_loss"]
    for row in history:
        cols += [k for k in row if k not in cols]
    write_table(path, cols, [[row.get(c, "") for c in cols] for row in history])


def _load_pairs(cfg: dict, ds: Dataset, rng: Rng) -> FeedbackBatch:
    if cfg["feedback"]:
        triplets = load_feedback(_existing(cfg["feedback"], "feedback"), ds)
    else:
        triplets = make_feedback(ds, rng, cfg["n_pairs"])
    if not triplets:
        raise UsageError("no feedback pairs to train on")
    return FeedbackBatch.resolve(ds, triplets)


def _split_pairs(batch: FeedbackBatch, fraction: float, rng: Rng):
    if fraction <= 0 or len(batch) < 2:
        return batch, None
    kept, held = split_items(list(batch.pairs), fraction, rng)
    return FeedbackBatch(tuple(kept)), (FeedbackBatch(tuple(held)) if held else None)


def cmd_train(cfg: dict) -> None:
    _require(cfg, "data")
    out = _out_dir(cfg)
    fw = cfg["framework"]
    if fw not in ("nas", "mlas", "olas", "amas"):
        raise UsageError(f"unknown framework {fw!r}")
    if not 0.0 <= cfg["validation_fraction"] < 1.0:
        raise UsageError("validation_fraction must lie in [0, 1)")
    if cfg["lr"] <= 0 or cfg["epochs"] < 0 or cfg["dim"] < 1:
        raise UsageError("lr must be positive, epochs non-negative and dim >= 1")
    ds = load_jsonl(_existing(cfg["data"], "data"))
    root = Rng(cfg["seed"])
    init_rng, split_rng, train_rng = root.child("init"), root.child("split"), root.child("train")
    dim, lr, epochs = cfg["dim"], cfg["lr"], cfg["epochs"]

    if fw == "nas":
        train, val = _split_records(ds, cfg["validation_fraction"], split_rng)
        model = nas.init_nas(init_rng, ds.u, ds.vocab.r, dim, tuple(cfg["hidden"]), conditioned=cfg["conditioned"])
        model, history = nas.nas_train(
            model, train, lr, cfg["T_A"], cfg["T_S"], cfg["eps_A"], cfg["eps_S"], epochs,
            per_step_updates=cfg["per_step_updates"], corpus_mode=cfg["corpus_mode"], rng=train_rng, validation=val)
    elif fw == "mlas":
        batch, val = _split_pairs(_load_pairs(cfg, ds, root.child("pairs")), cfg["validation_fraction"], split_rng)
        model = mlas.init_mlas(init_rng, ds.u, ds.vocab.r, cfg["fusion"], (dim,), dim, dim, cfg["act"], cfg["margin"])
        model = mlas.mlas_pretrain(model, ds, cfg["omega_a"], cfg["pretrain_epochs"], lr, root.child("pretrain"))
        model, history = mlas.mlas_train(model, batch, lr, epochs, cfg["eps"], train_rng, cfg["distance_mode"], val)
    elif fw == "olas":
        batch, val = _split_pairs(_load_pairs(cfg, ds, root.child("pairs")), cfg["validation_fraction"], split_rng)
        model = olas.init_olas(init_rng, ds.u, ds.vocab.r, dim, (dim,) * cfg["layers"], dim, cfg["margin"],
                               cfg["distance"])
        model, history = olas.olas_train(model, batch, lr, epochs, cfg["eps"], train_rng, val)
    else:
        if any(rec.label is None for rec in ds.records):
            raise UsageError("amas training needs a label on every record")
        train, val = _split_records(ds, cfg["validation_fraction"], split_rng)
        model = amas.init_amas(init_rng, ds.u, ds.vocab.r, ds.classes(), cfg["variant"], dim, dim, cfg["head"],
                               cfg["scalar_scores"], cfg["l2"])
        model, history = amas.amas_train(
            model, train, lr, epochs, cfg["lambda"], train_rng, cfg["n_first"], cfg["batch_size"], cfg["dropout"],
            val, cfg["patience"])

    _prepare_out(out, cfg)
    save_checkpoint(out / "model.json", model, ds.vocab, ds.schema)
    _write_json(out / "schema.json", schema_sidecar(ds))
    _history_csv(out / "history.csv", history)


def _split_records(ds: Dataset, fraction: float, rng: Rng):
    if fraction <= 0:
        return list(ds.records), None
    train, val = split_train_validation(ds, fraction, rng)
    return list(train.records), (list(val.records) or None)


def _load_model(cfg: dict):
    _require(cfg, "checkpoint")
    ckpt = load_checkpoint(_existing(cfg["checkpoint"], "checkpoint"))
    return ckpt, model_from_checkpoint(ckpt)


def _load_for(ckpt, path: str, what: str) -> Dataset:
    return load_jsonl(_existing(path, what), schema=ckpt.schema, vocab=ckpt.vocab)


def embed_function(ckpt, model) -> Callable:
    if ckpt.framework == "nas":
        return lambda rec: nas.nas_embed(model, rec)
    if ckpt.framework == "mlas":
        return lambda rec: mlas.mlas_embed(model, rec)
    if ckpt.framework == "olas":
        return lambda rec: olas.olas_features(model, rec)
    raise UsageError("amas checkpoints classify records; use the classify command")


def cmd_embed(cfg: dict) -> None:
    _require(cfg, "data")
    out = _out_dir(cfg)
    ckpt, model = _load_model(cfg)
    fn = embed_function(ckpt, model)
    ds = _load_for(ckpt, cfg["data"], "data")
    vectors = _map_records(fn, ds.records)
    _prepare_out(out, cfg)
    d = vectors[0].shape[0] if vectors else 0
    write_table(out / "embeddings.csv", ["id"] + [f"dim{j}" for j in range(d)],
                [[rec.id, *v.tolist()] for rec, v in zip(ds.records, vectors)])


def cmd_label(cfg: dict) -> None:
    _require(cfg, "gallery", "queries")
    out = _out_dir(cfg)
    ckpt, model = _load_model(cfg)
    fn = embed_function(ckpt, model)
    gallery = olas.Gallery.from_records(_load_for(ckpt, cfg["gallery"], "gallery").records)
    queries = _load_for(ckpt, cfg["queries"], "queries").records
    features = olas.gallery_features(model, gallery, fn)
    distance = model.distance if ckpt.framework == "olas" else "euclidean"
    preds = _map_records(lambda q: olas.nearest_label(fn(q), features, gallery.labels, distance), queries)
    _prepare_out(out, cfg)
    write_table(out / "labels.csv", ["id", "predicted", "true"],
                [[q.id, p, q.label or ""] for q, p in zip(queries, preds)])
    labeled = [(p, q.label) for q, p in zip(queries, preds) if q.label is not None]
    if labeled:
        per_class: dict[str, list[int]] = {}
        for p, t in labeled:
            per_class.setdefault(t, []).append(int(p == t))
        _write_json(out / "report.json", {
            "accuracy": accuracy([p for p, _ in labeled], [t for _, t in labeled]),
            "per_class": {c: sum(v) / len(v) for c, v in per_class.items()},
            "n_queries": len(labeled),
        })


def cmd_classify(cfg: dict) -> None:
    _require(cfg, "data")
    out = _out_dir(cfg)
    ckpt, model = _load_model(cfg)
    if ckpt.framework != "amas":
        raise UsageError("classify needs an amas checkpoint")
    ds = _load_for(ckpt, cfg["data"], "data")
    top_k = cfg["top_k"] if cfg["top_k"] is not None else sorted({1, min(5, model.n_classes)})
    for k in top_k:
        if not 1 <= k <= model.n_classes:
            raise UsageError(f"top_k entry {k} outside [1, {model.n_classes}]")
    rows = _map_records(lambda rec: amas.prediction_rows(model, [rec])[0], ds.records)
    _prepare_out(out, cfg)
    write_table(out / "predictions.csv",
                ["id", "predicted", "true"] + [f"score_{c}" for c in range(model.n_classes)], rows)
    labeled = [rec for rec in ds.records if rec.label in model.classes]
    if labeled:
        _write_json(out / "report.json", {
            "n": len(labeled),
            "top_k_accuracy": {str(k): amas.topk_accuracy(model, labeled, k) for k in top_k},
        })
    if cfg["trace"]:
        with open(out / "attention.jsonl", "w", encoding="utf-8", newline="\n") as fh:
            for rec in ds.records:
                fh.write(json.dumps(amas.attention_record(model, rec, ds.vocab.items)) + "\n")


def read_embeddings(path: Path) -> EmbeddingSet:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0][:1] != ["id"]:
        raise UsageError(f"{path} is not an embeddings CSV (header must start with 'id')")
    ids = [r[0] for r in rows[1:]]
    try:
        vectors = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=np.float64)
    except ValueError as exc:
        raise UsageError(f"{path}: {exc}") from None
    return EmbeddingSet(tuple(ids), vectors.reshape(len(ids), len(rows[0]) - 1))


def _evaluate(emb: EmbeddingSet, labels: list, cfg: dict) -> tuple[list, list, list[MetricReport]]:
    X = emb.vectors
    reports: list[MetricReport] = []
    auc_rows, nmi_rows = [], []
    binary = [int(l == cfg["outlier_label"]) for l in labels]
    if 0 < sum(binary) < len(binary):
        for k in cfg["k"]:
            value = roc_auc(knn_outlier_scores(X, k), binary)
            auc_rows.append([k, value])
            reports.append(MetricReport("roc_auc", value, len(binary), {"k": k}))
    for size in cfg["min_cluster_size"]:
        radius = cfg["radius"] if cfg["radius"] is not None else cluster_radius(X, size)
        clusters = density_cluster(X, size, radius)
        value = nmi([str(c) for c in clusters], labels)
        nmi_rows.append([size, radius, value, int(clusters.max()) + 1])
        reports.append(MetricReport("nmi", value, len(labels), {"min_cluster_size": size, "radius": radius}))
    try:
        reports.append(MetricReport("silhouette", silhouette(X, labels), len(labels), {}))
    except UndefinedMetricError:
        pass
    return auc_rows, nmi_rows, reports


def cmd_eval(cfg: dict) -> None:
    _require(cfg, "data")
    out = _out_dir(cfg)
    for key in ("k", "min_cluster_size"):
        if not isinstance(cfg[key], list) or not cfg[key]:
            raise UsageError(f"{key} must be a non-empty list")
    for size in cfg["min_cluster_size"]:
        if size < 2:
            raise UsageError("min_cluster_size entries must be >= 2")

    def load_run(entry: dict) -> tuple[EmbeddingSet, list]:
        if entry.get("embeddings"):
            emb = read_embeddings(_existing(entry["embeddings"], "embeddings"))
            ds = load_jsonl(_existing(cfg["data"], "data"))
        elif entry.get("checkpoint"):
            ckpt, model = _load_model({"checkpoint": entry["checkpoint"]})
            ds = _load_for(ckpt, cfg["data"], "data")
            fn = embed_function(ckpt, model)
            emb = EmbeddingSet(tuple(r.id for r in ds.records), np.stack(_map_records(fn, ds.records)))
        else:
            raise UsageError("eval needs 'embeddings' or 'checkpoint'")
        by_id = {r.id: r.label for r in ds.records}
        missing = [i for i in emb.ids if i not in by_id]
        if missing:
            raise UsageError(f"embedding ids missing from the data file, e.g. {missing[0]}")
        labels = [by_id[i] if by_id[i] is not None else "" for i in emb.ids]
        for k in cfg["k"]:
            if not 1 <= k < len(emb):
                raise UsageError(f"k={k} outside [1, {len(emb) - 1}]")
        return emb, labels

    main = load_run(cfg)
    runs = []
    for entry in cfg["runs"]:
        if not isinstance(entry, dict) or "x" not in entry:
            raise UsageError("each run needs an 'x' value and 'embeddings' or 'checkpoint'")
        runs.append((entry, load_run(entry)))

    auc_rows, nmi_rows, reports = _evaluate(*main, cfg)
    run_rows = []
    for entry, (emb, labels) in runs:
        a, n, _ = _evaluate(emb, labels, cfg)
        run_rows.append([entry.get("axis", "x"), entry["x"], a[0][1] if a else "", n[0][2]])
    _prepare_out(out, cfg)
    if auc_rows:
        write_table(out / "auc_vs_k.csv", ["k", "auc"], auc_rows)
    write_table(out / "nmi_vs_min_cluster_size.csv", ["min_cluster_size", "radius", "nmi", "n_clusters"], nmi_rows)
    if run_rows:
        write_table(out / "metric_vs_run.csv", ["axis", "x", "auc", "nmi"], run_rows)
    with open(out / "reports.jsonl", "w", encoding="utf-8", newline="\n") as fh:
        for rep in reports:
            fh.write(rep.to_json() + "\n")
    _write_json(out / "summary.json", {"n": len(main[0]), "reports": [json.loads(r.to_json()) for r in reports]})


def cmd_inspect(cfg: dict) -> None:
    _require(cfg, "checkpoint")
    info = inspect(_existing(cfg["checkpoint"], "checkpoint"))
    print(json.dumps(info, indent=1, sort_keys=True))


COMMANDS = {
    "generate": cmd_generate, "train": cmd_train, "embed": cmd_embed, "label": cmd_label,
    "classify": cmd_classify, "eval": cmd_eval, "inspect-checkpoint": cmd_inspect,
}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        cfg = resolve_config(args.command, args)
        COMMANDS[args.command](cfg)
    except NumericalError as exc:
        print(f"attrseq: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (AttrSeqError, KeyError, ValueError, TypeError) as exc:
        print(f"attrseq: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"attrseq: I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
