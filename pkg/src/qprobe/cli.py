"""Command-line interface.

Subcommands: ingest, annotate, profile, controls, baseline, probe, run,
report. Exit codes: 0 success, 1 validation error, 2 runtime failure.
QPROBE_OUTPUT_DIR overrides any output directory argument.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import baselines, report
from .annotator import annotate_corpus, load_rulepack
from .corpus import load_labeled_corpus, parse_conllu_file, save_labeled_corpus
from .errors import QprobeError
from .evaluation import evaluate
from .features import SubwordTfidf, load_subword_file
from .metrics import profile_corpus
from .probes import EmbeddingStore, ProbeConfig, layer_sweep
from .runner import (
    DEFAULT_RATIOS,
    ExperimentConfig,
    derive_seed,
    make_splits,
    run_experiment,
    load_results,
    sort_results,
    task_kind,
)
from .selectivity import DEFAULT_CONTROL_SEEDS, LabelVariant, make_controls


def _output_dir(value: str) -> Path:
    override = os.environ.get("QPROBE_OUTPUT_DIR")
    return Path(override) if override else Path(value)


def _parse_layers(spec: str) -> list[int]:
    """"1..12" or "1,2,5" or "4"."""
    spec = spec.strip()
    if ".." in spec:
        lo, hi = spec.split("..", 1)
        return list(range(int(lo), int(hi) + 1))
    return [int(part) for part in spec.split(",") if part]


def cmd_ingest(args) -> int:
    sentences = []
    for path in args.inputs:
        sentences.extend(
            parse_conllu_file(path, args.lang, strict=not args.lenient)
        )
    save_labeled_corpus(sentences, args.output)
    print(f"ingested {len(sentences)} sentences -> {args.output}")
    return 0


def cmd_annotate(args) -> int:
    sentences = load_labeled_corpus(args.corpus)
    if args.lang:
        sentences = [s for s in sentences if s.language == args.lang]
    packs = None
    if args.rules:
        pack = load_rulepack("", source=args.rules)
        packs = {pack.language: pack}
    _, coverage = annotate_corpus(sentences, packs, overwrite=args.overwrite)
    save_labeled_corpus(sentences, args.output)
    print(json.dumps(coverage.as_dict(), indent=2, ensure_ascii=False))
    return 0


def cmd_profile(args) -> int:
    sentences = load_labeled_corpus(args.corpus)
    group_by = "language" if args.normalize == "per-language" else "global"
    profiles = profile_corpus(sentences, group_by=group_by)
    save_labeled_corpus(sentences, args.output)
    print(f"profiled {len(profiles)} of {len(sentences)} sentences -> {args.output}")
    return 0


def cmd_controls(args) -> int:
    sentences = load_labeled_corpus(args.corpus)
    labeled = [s for s in sentences if s.question_label is not None]
    if not labeled:
        raise QprobeError("corpus has no question labels; run annotate first")
    labels = np.array([s.question_label for s in labeled])
    seeds = [int(s) for s in args.seeds.split(",")]
    variants = make_controls(labels, n_variants=len(seeds), seeds=seeds)
    payload = {
        "ids": [s.id for s in labeled],
        "real": labels.tolist(),
        "controls": {
            str(v.control_seed): v.labels.tolist() for v in variants
        },
    }
    Path(args.output).write_text(
        json.dumps(payload, ensure_ascii=False), encoding="utf-8"
    )
    print(f"wrote {len(variants)} control variants -> {args.output}")
    return 0


def _single_cell_labels(sentences, task):
    ids, labels = [], []
    if task_kind(task) == "classification":
        for s in sentences:
            if s.question_label is not None:
                ids.append(s.id)
                labels.append(float(s.question_label))
    else:
        key = "combined" if task == "combined_complexity" else task
        for s in sentences:
            block = (s.metrics or {}).get("normalized") or {}
            if key in block:
                ids.append(s.id)
                labels.append(float(block[key]))
    if len(ids) < 3:
        raise QprobeError(f"not enough labeled sentences for task {task!r}")
    return ids, np.array(labels)


def cmd_baseline(args) -> int:
    sentences = load_labeled_corpus(args.corpus)
    if args.lang:
        sentences = [s for s in sentences if s.language == args.lang]
    kind = task_kind(args.task)
    if kind == "regression" and not any(s.metrics for s in sentences):
        profile_corpus(sentences)
    ids, labels = _single_cell_labels(sentences, args.task)
    splits = make_splits(
        ids,
        DEFAULT_RATIOS,
        derive_seed(args.seed, args.lang or "all", args.task, "split"),
        labels=labels if kind == "classification" else None,
    )
    train_pos, val_pos, test_pos = splits.positions(ids)

    if args.model == "dummy":
        model = baselines.fit_dummy(labels[train_pos], kind)
        predictions = model.predict(test_pos.size)
    else:
        sequences = {seq.id: seq for seq in load_subword_file(args.subwords)}
        vectorizer = SubwordTfidf().fit([sequences[i] for i in splits.train])
        X = vectorizer.transform([sequences[i] for i in ids])
        if args.model == "linear":
            if kind == "classification":
                model = baselines.fit_logistic(X[train_pos], labels[train_pos])
            else:
                model = baselines.fit_ridge(X[train_pos], labels[train_pos])
        else:  # gbt
            loss = "logistic" if kind == "classification" else "squared"
            model = baselines.fit_gbt(X[train_pos], labels[train_pos], loss=loss)
        predictions = model.predict(X[test_pos])
    metric = evaluate(predictions, labels[test_pos], kind)
    label = "accuracy" if kind == "classification" else "mse"
    print(f"{args.model} {args.task} {label}: {metric:.4f}")
    if args.save_model:
        baselines.save_model(model, args.save_model)
    return 0


def cmd_probe(args) -> int:
    sentences = load_labeled_corpus(args.corpus)
    if args.lang:
        sentences = [s for s in sentences if s.language == args.lang]
    kind = task_kind(args.task)
    if kind == "regression" and not any(s.metrics for s in sentences):
        profile_corpus(sentences)
    ids, labels = _single_cell_labels(sentences, args.task)
    store = EmbeddingStore.load(args.embeddings)
    rows = store.rows_for(ids)
    layer_indices = _parse_layers(args.layers) if args.layers else store.layer_indices
    sub = EmbeddingStore(
        ids=list(ids),
        layers={k: store.layer(k)[rows] for k in layer_indices},
        dim=store.dim,
        granularity=store.granularity,
        model_id=store.model_id,
        pooling=store.pooling,
    )
    splits = make_splits(
        ids,
        DEFAULT_RATIOS,
        derive_seed(args.seed, args.lang or "all", args.task, "split"),
        labels=labels if kind == "classification" else None,
    )
    variants = [LabelVariant(kind="real", labels=labels)]
    if args.controls:
        variants += make_controls(
            labels, n_variants=len(DEFAULT_CONTROL_SEEDS), seeds=DEFAULT_CONTROL_SEEDS
        )
    config = ProbeConfig(
        task=kind,
        seed=derive_seed(args.seed, args.lang or "all", args.task, "probe"),
        max_epochs=args.max_epochs,
    )
    results = layer_sweep(
        sub,
        [(v.name, v.labels) for v in variants],
        splits.positions(ids),
        config,
        layer_indices=layer_indices,
    )
    for entry in results:
        print(
            f"layer {entry['layer']:>2} {entry['variant']:>12} "
            f"metric={entry['metric']:.4f} stopped={entry['stopped_epoch']}"
        )
    return 0


def cmd_run(args) -> int:
    config = ExperimentConfig.from_file(args.config)
    override = os.environ.get("QPROBE_OUTPUT_DIR")
    if override:
        config.output_dir = override
    results = run_experiment(config)
    failures = [r for r in results if r.error]
    out = Path(config.output_dir)
    report.emit_tables(results, out, fmt=args.format)
    print(f"{len(results)} result rows -> {out}")
    if failures:
        print(f"{len(failures)} cell(s) failed; see results.jsonl", file=sys.stderr)
    return 0


def cmd_report(args) -> int:
    results = sort_results(load_results(args.results))
    if not results:
        raise QprobeError(f"no result rows found in {args.results}")
    out = _output_dir(args.output)
    written = report.emit_tables(results, out, fmt=args.format)
    for path in written:
        print(path)
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="qprobe",
        description="Question complexity metrics, rule-based typing and probing",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="CoNLL-U files to the sentence interchange format")
    p.add_argument("inputs", nargs="+")
    p.add_argument("--lang", required=True, help="ISO 639-3 code")
    p.add_argument("--lenient", action="store_true", help="skip invalid sentences")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("annotate", help="rule-based polar/content labels")
    p.add_argument("--corpus", required=True)
    p.add_argument("--lang", help="restrict to one language")
    p.add_argument("--rules", help="user rule pack file")
    p.add_argument("--overwrite", action="store_true")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_annotate)

    p = sub.add_parser("profile", help="complexity metrics and normalization")
    p.add_argument("--corpus", required=True)
    p.add_argument(
        "--normalize", choices=("per-language", "global"), default="per-language"
    )
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_profile)

    p = sub.add_parser("controls", help="seeded shuffled-label variants")
    p.add_argument("--corpus", required=True)
    p.add_argument(
        "--seeds", default=",".join(str(s) for s in DEFAULT_CONTROL_SEEDS)
    )
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_controls)

    p = sub.add_parser("baseline", help="train and score one statistical baseline")
    p.add_argument("--model", choices=("dummy", "linear", "gbt"), required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--subwords")
    p.add_argument("--task", default="question_type")
    p.add_argument("--lang")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--save-model")
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("probe", help="layer-wise MLP probes over embeddings")
    p.add_argument("--embeddings", required=True, help="QEMB file")
    p.add_argument("--layers", help='e.g. "1..12" or "2,5,9"')
    p.add_argument("--corpus", required=True)
    p.add_argument("--task", default="question_type")
    p.add_argument("--lang")
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--max-epochs", type=int, default=100)
    p.add_argument("--controls", action="store_true", help="also run control variants")
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("run", help="full experiment matrix from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--format", choices=("tsv", "md"), default="tsv")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("report", help="aggregate persisted results into tables")
    p.add_argument("--results", required=True, help="results.jsonl from a run")
    p.add_argument("--format", choices=("tsv", "md"), default="tsv")
    p.add_argument("-o", "--output", default=".")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except (QprobeError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # pragma: no cover - defensive
        print(f"runtime failure: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
