"""Command-line pipeline: synth, prepare, train-retriever, train-ranker,
eval, sweeps and the HTTP service.

Every stage writes versioned artifacts stamped with the behavioral config
hash and seed into the output directory and records them in a manifest.
Stages refuse to run when an upstream artifact is missing (exit 3) and
eval refuses artifacts whose config hash disagrees with the active config.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .config import ConfigError, RunConfig
from .control import ControlScheme
from .corpus import (
    AttributeBucketing,
    TEST,
    TRAIN,
    apply_tags,
    corpus_from_document,
    corpus_to_document,
    fit_all_buckets,
    load_corpus,
    load_tags,
    preprocess,
)
from .experiments import (
    SynthConfig,
    generate_synth,
    threshold_sweep,
    token_count_sweep,
    write_synth_files,
)
from .metrics import evaluate_run
from .pipeline import (
    WINDOW_SIZE,
    build_split_instances,
    rank_instances,
    split_windows,
)
from .ranker import ScorerModel, TrainStats, train
from .retrieval import TransitionModel, fit_retriever, read_instances, write_instances

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_MISSING = 3

REPORT_COLUMNS = ("ndcg_at_2", "ndcg_at_5", "hr_at_3", "cp_at_3", "cd")
COLUMN_HEADERS = ("N@2", "N@5", "H@3", "CP@3", "CD")


class MissingArtifactError(Exception):
    def __init__(self, path: Path, stage: str):
        super().__init__(f"missing artifact {path}; run `{stage}` first")
        self.stage = stage


def _write_json(path: Path, doc: dict) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _read_json(path: Path, stage: str) -> dict:
    if not path.is_file():
        raise MissingArtifactError(path, stage)
    return json.loads(path.read_text(encoding="utf-8"))


def _stamp(doc: dict, config: RunConfig) -> dict:
    doc["config_hash"] = config.config_hash
    doc["seed"] = config.seed
    return doc


def _check_hash(doc: dict, config: RunConfig, path: Path) -> None:
    found = doc.get("config_hash")
    if found != config.config_hash:
        raise ConfigError(
            f"{path} was produced under config hash {found}, "
            f"current config hashes to {config.config_hash}; refusing to mix runs"
        )


def _update_manifest(out: Path, stage: str, config: RunConfig, artifacts: list[str]) -> None:
    path = out / "manifest.json"
    manifest = json.loads(path.read_text(encoding="utf-8")) if path.is_file() else {"stages": {}}
    manifest["stages"][stage] = {
        "config_hash": config.config_hash,
        "seed": config.seed,
        "artifacts": sorted(artifacts),
    }
    _write_json(path, manifest)


# ---------------------------------------------------------------------------
# Stages


def cmd_synth(config: RunConfig) -> int:
    synth_config = SynthConfig.from_document(config.synth or {})
    corpus = generate_synth(synth_config)
    target = Path(config.items_path).parent if config.items_path else Path(config.out_dir) / "data"
    paths = write_synth_files(corpus, target)
    print(
        f"synth: wrote {corpus.n_items} items, {corpus.n_interactions} interactions "
        f"for {corpus.n_users} users under {target}"
    )
    _update_manifest(Path(config.out_dir), "synth", config, [str(p) for p in paths.values()])
    return EXIT_OK


def cmd_prepare(config: RunConfig) -> int:
    raw = load_corpus(config.items_path, config.interactions_path)
    if config.tags_path:
        raw = apply_tags(raw, load_tags(config.tags_path))
    processed = preprocess(
        raw,
        config.scheme_attributes,
        min_interactions=config.min_interactions,
        max_history=config.max_history,
    )
    bucketing = fit_all_buckets(processed, config.n_buckets)
    out = Path(config.out_dir)
    _write_json(out / "corpus.json", _stamp(corpus_to_document(processed), config))
    _write_json(
        out / "buckets.json",
        _stamp({attr: b.to_document() for attr, b in bucketing.items()}, config),
    )
    n_windows = len(processed.iter_windows(WINDOW_SIZE))
    print(
        f"prepare: {processed.n_users} users, {processed.n_items} items, "
        f"{processed.n_interactions} interactions, {n_windows} windows"
    )
    _update_manifest(out, "prepare", config, ["corpus.json", "buckets.json"])
    return EXIT_OK


def _load_prepared(config: RunConfig):
    out = Path(config.out_dir)
    corpus_doc = _read_json(out / "corpus.json", "prepare")
    _check_hash(corpus_doc, config, out / "corpus.json")
    buckets_doc = _read_json(out / "buckets.json", "prepare")
    _check_hash(buckets_doc, config, out / "buckets.json")
    corpus = corpus_from_document(corpus_doc)
    bucketing = {
        attr: AttributeBucketing.from_document(doc)
        for attr, doc in buckets_doc.items()
        if attr not in ("config_hash", "seed")
    }
    return corpus, bucketing


def cmd_train_retriever(config: RunConfig) -> int:
    corpus, bucketing = _load_prepared(config)
    out = Path(config.out_dir)
    windows_by_split = split_windows(corpus.iter_windows(WINDOW_SIZE))
    retriever = fit_retriever(windows_by_split[TRAIN], alpha=config.alpha, gamma=config.gamma)
    _write_json(out / "retriever.json", _stamp(retriever.to_document(), config))
    instances = build_split_instances(
        corpus, retriever, config.scheme(), bucketing, config, windows_by_split
    )
    artifacts = ["retriever.json"]
    for split, split_instances in instances.items():
        name = f"instances_{split}.jsonl"
        write_instances(split_instances, out / name)
        artifacts.append(name)
    counts = ", ".join(f"{split}={len(v)}" for split, v in instances.items())
    print(f"train-retriever: catalogue {len(retriever.catalogue)}, instances {counts}")
    _update_manifest(out, "train-retriever", config, artifacts)
    return EXIT_OK


def _load_instances(config: RunConfig, split: str):
    path = Path(config.out_dir) / f"instances_{split}.jsonl"
    if not path.is_file():
        raise MissingArtifactError(path, "train-retriever")
    return read_instances(path)


def cmd_train_ranker(config: RunConfig) -> int:
    corpus, bucketing = _load_prepared(config)
    out = Path(config.out_dir)
    retriever_doc = _read_json(out / "retriever.json", "train-retriever")
    _check_hash(retriever_doc, config, out / "retriever.json")
    retriever = TransitionModel.from_document(retriever_doc)
    train_stats = TrainStats.from_model(retriever)
    train_instances = _load_instances(config, "train")
    val_instances = _load_instances(config, "valid")

    model = ScorerModel(
        architecture=config.architecture, hidden=config.hidden, init_seed=config.seed
    )
    result = train(
        model,
        train_instances,
        config.train_config(),
        corpus.items,
        bucketing,
        train_stats,
        val_instances=val_instances or None,
    )
    checkpoint = {
        "model": result.model.to_document(),
        "train_stats": train_stats.to_document(),
        "train_config": config.train_config().to_document(),
        "epoch_losses": result.epoch_losses,
        "val_hit_rates": result.val_hit_rates,
        "best_epoch": result.best_epoch,
        "skipped_empty_pairs": result.skipped_empty_pairs,
    }
    _write_json(out / "checkpoint.json", _stamp(checkpoint, config))
    losses = ", ".join(f"{loss:.4f}" for loss in result.epoch_losses)
    print(
        f"train-ranker: epoch losses [{losses}], "
        f"best epoch {result.best_epoch}, skipped {result.skipped_empty_pairs} empty-pair instances"
    )
    _update_manifest(out, "train-ranker", config, ["checkpoint.json"])
    return EXIT_OK


def _load_checkpoint(config: RunConfig):
    out = Path(config.out_dir)
    doc = _read_json(out / "checkpoint.json", "train-ranker")
    _check_hash(doc, config, out / "checkpoint.json")
    return ScorerModel.from_document(doc["model"]), TrainStats.from_document(doc["train_stats"])


def cmd_eval(config: RunConfig) -> int:
    corpus, bucketing = _load_prepared(config)
    model, train_stats = _load_checkpoint(config)
    test_instances = _load_instances(config, TEST)
    lists = rank_instances(
        model, test_instances, corpus, bucketing, train_stats, config.workers
    )
    scheme = config.scheme()
    report = evaluate_run(
        lists,
        scheme.name(),
        scheme.n_tokens,
        threshold=config.threshold,
        gain=config.gain,
        seed=config.seed,
        config_hash=config.config_hash,
    )
    out = Path(config.out_dir)
    _write_json(out / "report.json", report.to_document())
    print(_format_table([("test", report)]))
    _update_manifest(out, "eval", config, ["report.json"])
    return EXIT_OK


def _format_table(rows) -> str:
    header = f"{'run':<12}" + "".join(f"{h:>9}" for h in COLUMN_HEADERS)
    lines = [header]
    for label, report in rows:
        doc = report.to_document()
        lines.append(
            f"{str(label):<12}" + "".join(f"{doc[c]:>9.4f}" for c in REPORT_COLUMNS)
        )
    return "\n".join(lines)


def cmd_sweep(config: RunConfig, axis: str) -> int:
    out = Path(config.out_dir)
    if axis == "threshold":
        corpus, bucketing = _load_prepared(config)
        model, train_stats = _load_checkpoint(config)
        test_instances = _load_instances(config, TEST)
        lists = rank_instances(
            model, test_instances, corpus, bucketing, train_stats, config.workers
        )
        sweep = threshold_sweep(
            lists,
            config.scheme(),
            gain=config.gain,
            seed=config.seed,
            config_hash=config.config_hash,
        )
        prefix = "sweep_threshold"
        label = lambda v: f"t={v:g}"
    elif axis == "tokens":
        raw = load_corpus(config.items_path, config.interactions_path)
        if config.tags_path:
            raw = apply_tags(raw, load_tags(config.tags_path))
        schemes = [
            ControlScheme(config.scheme_attributes[: i + 1])
            for i in range(len(config.scheme_attributes))
        ]
        sweep = token_count_sweep(raw, schemes, config)
        prefix = "sweep_tokens"
        label = lambda v: f"n_tokens={v:g}"
    else:
        raise ConfigError(f"unknown sweep axis: {axis}")

    artifacts = []
    rows = []
    for value, report in sweep.points:
        name = f"{prefix}_{label(value).replace('=', '')}.json"
        _write_json(out / name, report.to_document())
        artifacts.append(name)
        rows.append((label(value), report))
    combined = {
        "axis": sweep.axis,
        "baseline": sweep.baseline,
        "points": [
            {"axis_value": value, "report": report.to_document()}
            for value, report in sweep.points
        ],
    }
    _write_json(out / f"{prefix}.json", _stamp(combined, config))
    table = _format_table(rows)
    (out / f"{prefix}.md").write_text(table + "\n", encoding="utf-8")
    artifacts += [f"{prefix}.json", f"{prefix}.md"]
    print(table)
    _update_manifest(out, f"sweep-{axis}", config, artifacts)
    return EXIT_OK


def cmd_serve(config: RunConfig, host: str, port: int) -> int:
    import uvicorn

    from .service import create_app

    app = create_app(config)
    uvicorn.run(app, host=host, port=port, log_level="warning")
    return EXIT_OK


# ---------------------------------------------------------------------------
# Entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ctrlrank",
        description="Attribute-controlled sequential re-ranking pipeline",
    )
    parser.add_argument("--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--seed", type=int, help="override run seed")
        p.add_argument("--out", help="override output directory")
        p.add_argument("--workers", type=int, help="worker threads for ranking stages")
        return p

    add("synth", "generate a synthetic corpus into the configured data paths")
    add("prepare", "load, preprocess, fit buckets and persist the corpus")
    add("train-retriever", "fit the transition retriever and build instances")
    add("train-ranker", "train the scorer on the prepared instances")
    add("eval", "evaluate the checkpoint on the test split")
    sweep = add("sweep", "threshold or token-count sweeps")
    sweep.add_argument("axis", choices=["threshold", "tokens"])
    serve = add("serve", "run the interactive re-ranking service")
    serve.add_argument("--host", default="127.0.0.1")
    serve.add_argument("--port", type=int, default=8000)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO)
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.workers is not None:
        overrides["workers"] = args.workers
    try:
        config = RunConfig.from_toml(args.config, **overrides)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        if args.command == "synth":
            return cmd_synth(config)
        if args.command == "prepare":
            return cmd_prepare(config)
        if args.command == "train-retriever":
            return cmd_train_retriever(config)
        if args.command == "train-ranker":
            return cmd_train_ranker(config)
        if args.command == "eval":
            return cmd_eval(config)
        if args.command == "sweep":
            return cmd_sweep(config, args.axis)
        if args.command == "serve":
            return cmd_serve(config, args.host, args.port)
    except MissingArtifactError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
