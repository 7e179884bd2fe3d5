"""Experiment orchestration: splits, seeds, the approach matrix, persistence.

A cell is one (language, task, approach); every cell runs on the real
labels plus each shuffled-label control variant, with identical splits for
all variants. Rows are appended to results.jsonl as soon as a cell
finishes, so an interrupted run can resume and skip completed cells (rows
are keyed by the config hash).
"""

from __future__ import annotations

import hashlib
import json
import logging
import math
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import yaml

from . import baselines
from .annotator import annotate_corpus
from .corpus import DepSentence, load_labeled_corpus
from .errors import ConfigError, DataError, QprobeError
from .evaluation import evaluate
from .features import SubwordTfidf, load_subword_file
from .metrics import METRIC_KEYS, profile_corpus
from .probes import EmbeddingStore, ProbeConfig, layer_sweep
from .selectivity import (
    DEFAULT_CONTROL_SEEDS,
    LabelVariant,
    make_controls,
    mean_selectivity,
    selectivity,
)

logger = logging.getLogger(__name__)

CLASSIFICATION_TASKS = ("question_type",)
REGRESSION_TASKS = ("combined_complexity",) + METRIC_KEYS
ALL_TASKS = CLASSIFICATION_TASKS + REGRESSION_TASKS
APPROACHES = ("dummy", "linear", "gbt", "probe")
DEFAULT_RATIOS = (0.70, 0.15, 0.15)


def task_kind(task: str) -> str:
    if task in CLASSIFICATION_TASKS:
        return "classification"
    if task in REGRESSION_TASKS:
        return "regression"
    raise ConfigError(f"unknown task {task!r}")


@dataclass
class SplitIndices:
    train: list
    val: list
    test: list
    ratios: tuple = DEFAULT_RATIOS
    seed: int = 0

    def positions(self, ids: Sequence) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Row positions of each split member within `ids`."""
        where = {item: pos for pos, item in enumerate(ids)}
        return tuple(
            np.array([where[item] for item in part], dtype=int)
            for part in (self.train, self.val, self.test)
        )


def _largest_remainder(quotas: dict, total: int, capacity: dict) -> dict:
    """Integer allocation matching `total`, proportional to quotas."""
    counts = {key: min(int(math.floor(q)), capacity[key]) for key, q in quotas.items()}
    remaining = total - sum(counts.values())
    order = sorted(
        quotas,
        key=lambda key: (-(quotas[key] - math.floor(quotas[key])), str(key)),
    )
    i = 0
    while remaining > 0:
        key = order[i % len(order)]
        if counts[key] < capacity[key]:
            counts[key] += 1
            remaining -= 1
        i += 1
        if i > 10 * len(order) * (remaining + 1):
            raise DataError("allocation failed; capacities too tight")
    return counts


def make_splits(
    ids: Sequence,
    ratios: tuple = DEFAULT_RATIOS,
    seed: int = 0,
    labels: Optional[Sequence] = None,
) -> SplitIndices:
    """Seeded 70/15/15 split: train = floor(.70 n), val = floor(.15 n).

    With `labels`, assignment is stratified: per-class counts follow a
    largest-remainder allocation so the global sizes still obey the floor
    rule exactly.
    """
    ids = list(ids)
    n = len(ids)
    if n < 3:
        raise DataError(f"need at least 3 ids to split, got {n}")
    n_train = int(math.floor(ratios[0] * n))
    n_val = int(math.floor(ratios[1] * n))
    rng = np.random.default_rng(seed)
    if labels is None:
        order = rng.permutation(n)
        shuffled = [ids[i] for i in order]
        return SplitIndices(
            train=shuffled[:n_train],
            val=shuffled[n_train : n_train + n_val],
            test=shuffled[n_train + n_val :],
            ratios=tuple(ratios),
            seed=seed,
        )
    labels = list(labels)
    if len(labels) != n:
        raise DataError("labels and ids are not aligned")
    by_class: dict = {}
    for item, label in zip(ids, labels):
        by_class.setdefault(label, []).append(item)
    class_keys = sorted(by_class, key=str)
    for key in class_keys:
        members = by_class[key]
        order = rng.permutation(len(members))
        by_class[key] = [members[i] for i in order]
    sizes = {key: len(by_class[key]) for key in class_keys}
    train_quota = {key: sizes[key] * n_train / n for key in class_keys}
    train_counts = _largest_remainder(train_quota, n_train, sizes)
    val_capacity = {key: sizes[key] - train_counts[key] for key in class_keys}
    val_quota = {key: sizes[key] * n_val / n for key in class_keys}
    val_counts = _largest_remainder(val_quota, n_val, val_capacity)
    train, val, test = [], [], []
    for key in class_keys:
        members = by_class[key]
        t, v = train_counts[key], val_counts[key]
        train.extend(members[:t])
        val.extend(members[t : t + v])
        test.extend(members[t + v :])
    return SplitIndices(
        train=train, val=val, test=test, ratios=tuple(ratios), seed=seed
    )


@dataclass
class ExperimentConfig:
    corpus_path: str
    output_dir: str
    languages: list = field(default_factory=list)
    tasks: list = field(default_factory=lambda: ["question_type"])
    approaches: list = field(default_factory=lambda: ["dummy", "linear"])
    layer_range: Optional[list] = None
    control_seeds: list = field(default_factory=lambda: list(DEFAULT_CONTROL_SEEDS))
    hyperparameters: dict = field(default_factory=dict)
    subwords_path: Optional[str] = None
    embeddings_path: Optional[str] = None
    run_seed: int = 42
    stratify: bool = True
    normalize: str = "per-language"
    workers: int = 1

    @classmethod
    def from_file(cls, path: str | Path) -> "ExperimentConfig":
        data = yaml.safe_load(Path(path).read_text(encoding="utf-8"))
        if not isinstance(data, dict):
            raise ConfigError("experiment config must be a mapping")
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        if "corpus_path" not in data or "output_dir" not in data:
            raise ConfigError("config requires corpus_path and output_dir")
        return cls(**data)

    def config_hash(self) -> str:
        semantic = {
            key: getattr(self, key)
            for key in sorted(self.__dataclass_fields__)
            if key not in ("output_dir", "workers")
        }
        blob = json.dumps(semantic, sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]

    def validate(self) -> None:
        for task in self.tasks:
            task_kind(task)
        for approach in self.approaches:
            if approach not in APPROACHES:
                raise ConfigError(f"unknown approach {approach!r}")
        if len(set(self.control_seeds)) != len(self.control_seeds):
            raise ConfigError("control seeds must be distinct")
        if self.normalize not in ("per-language", "global"):
            raise ConfigError(f"unknown normalize mode {self.normalize!r}")
        if not Path(self.corpus_path).exists():
            raise ConfigError(f"corpus file not found: {self.corpus_path}")
        needs_features = any(a in self.approaches for a in ("linear", "gbt"))
        if needs_features:
            if not self.subwords_path or not Path(self.subwords_path).exists():
                raise ConfigError(
                    "linear/gbt approaches require an existing subwords_path"
                )
        if "probe" in self.approaches:
            if not self.embeddings_path or not Path(self.embeddings_path).exists():
                raise ConfigError(
                    "the probe approach requires an existing embeddings_path"
                )


@dataclass
class ExperimentResult:
    language: str
    task: str
    approach: str
    variant: str
    metric: Optional[float]
    layer: Optional[int] = None
    selectivity: Optional[float] = None
    s_bar: Optional[float] = None
    wall_time_s: Optional[float] = None
    config_hash: str = ""
    error: Optional[str] = None

    def key(self) -> tuple:
        return (self.language, self.task, self.approach, self.layer, self.variant)

    def to_row(self) -> dict:
        return asdict(self)

    @classmethod
    def from_row(cls, row: dict) -> "ExperimentResult":
        known = {f for f in cls.__dataclass_fields__}
        return cls(**{k: v for k, v in row.items() if k in known})


def derive_seed(run_seed: int, *parts) -> int:
    """Stable per-cell seed from the run seed and the cell key."""
    text = json.dumps([run_seed, *map(str, parts)])
    return int.from_bytes(
        hashlib.sha256(text.encode("utf-8")).digest()[:4], "little"
    )


def expected_row_count(config: ExperimentConfig, n_layers: Optional[int] = None) -> int:
    """Closed-form row count for a fully successful run."""
    variants = 1 + len(config.control_seeds)
    per_cell = 0
    for approach in config.approaches:
        if approach == "probe":
            layers = len(config.layer_range) if config.layer_range else n_layers
            if layers is None:
                raise ConfigError(
                    "layer count unknown: pass n_layers or set layer_range"
                )
            per_cell += layers * variants
        else:
            per_cell += variants
    return len(config.languages) * len(config.tasks) * per_cell


def _variant_sort_key(variant: str) -> tuple:
    if variant == "real":
        return (0, 0)
    return (1, int(variant.rsplit("-", 1)[1]))


def sort_results(results: Sequence[ExperimentResult]) -> list[ExperimentResult]:
    return sorted(
        results,
        key=lambda r: (
            r.language,
            r.task,
            r.approach,
            r.layer if r.layer is not None else -1,
            _variant_sort_key(r.variant),
        ),
    )


class _ResultWriter:
    """Append-only JSONL writer shared by worker threads."""

    def __init__(self, path: Path):
        self.path = path
        self._lock = threading.Lock()

    def write(self, results: Sequence[ExperimentResult]) -> None:
        with self._lock:
            with self.path.open("a", encoding="utf-8") as handle:
                for result in results:
                    handle.write(json.dumps(result.to_row(), sort_keys=True))
                    handle.write("\n")


def load_results(path: str | Path, config_hash: Optional[str] = None) -> list[ExperimentResult]:
    path = Path(path)
    if not path.exists():
        return []
    results = []
    with path.open("r", encoding="utf-8") as handle:
        for line in handle:
            line = line.strip()
            if not line:
                continue
            row = json.loads(line)
            result = ExperimentResult.from_row(row)
            if config_hash is None or result.config_hash == config_hash:
                results.append(result)
    return results


def _task_labels(
    sentences: list[DepSentence], task: str
) -> tuple[list[str], np.ndarray]:
    """Sentence ids and the label vector for one task, exclusions logged."""
    kind = task_kind(task)
    ids, labels = [], []
    if kind == "classification":
        unlabeled = [s for s in sentences if s.question_label is None]
        if unlabeled:
            logger.info(
                "annotating %d unlabeled sentences with builtin rule packs",
                len(unlabeled),
            )
            annotate_corpus(unlabeled)
        for sentence in sentences:
            if sentence.question_label is None:
                logger.warning(
                    "sentence %s has no question label after annotation; skipped",
                    sentence.id,
                )
                continue
            ids.append(sentence.id)
            labels.append(float(sentence.question_label))
    else:
        key = "combined" if task == "combined_complexity" else task
        for sentence in sentences:
            block = (sentence.metrics or {}).get("normalized")
            if not block or key not in block:
                logger.warning(
                    "sentence %s has no normalized metric %r; skipped",
                    sentence.id,
                    key,
                )
                continue
            ids.append(sentence.id)
            labels.append(float(block[key]))
    return ids, np.asarray(labels)


def _attach_selectivity(rows: list[ExperimentResult], kind: str) -> None:
    """Fill S on control rows and the variant-mean S̄ on the real row."""
    by_layer: dict = {}
    for row in rows:
        by_layer.setdefault(row.layer, []).append(row)
    for group in by_layer.values():
        real = next((r for r in group if r.variant == "real"), None)
        if real is None or real.metric is None:
            continue
        scores = []
        for row in group:
            if row.variant == "real" or row.metric is None:
                continue
            try:
                row.selectivity = selectivity(real.metric, row.metric, kind)
                scores.append(row.selectivity)
            except DataError:
                row.selectivity = None
        if scores:
            real.s_bar = mean_selectivity(scores)


class _CellRunner:
    """Shared data and per-cell execution for one run_experiment call."""

    def __init__(self, config: ExperimentConfig):
        self.config = config
        self.hash = config.config_hash()
        corpus = load_labeled_corpus(config.corpus_path)
        if config.languages:
            missing = set(config.languages) - {s.language for s in corpus}
            if missing:
                raise ConfigError(
                    f"corpus has no sentences for languages {sorted(missing)}"
                )
        else:
            config.languages = sorted({s.language for s in corpus})
        self.by_language = {
            lang: [s for s in corpus if s.language == lang]
            for lang in config.languages
        }
        if any(task_kind(t) == "regression" for t in config.tasks):
            group_by = "language" if config.normalize == "per-language" else "global"
            profile_corpus(corpus, group_by=group_by)
        self.sequences = None
        if any(a in config.approaches for a in ("linear", "gbt")):
            self.sequences = {
                seq.id: seq for seq in load_subword_file(config.subwords_path)
            }
        self.store = None
        if "probe" in config.approaches:
            self.store = EmbeddingStore.load(config.embeddings_path)

        # labels, splits and control variants are shared across approaches
        self._cells: dict = {}
        for lang in config.languages:
            for task in config.tasks:
                ids, labels = _task_labels(self.by_language[lang], task)
                if len(ids) < 3:
                    raise ConfigError(
                        f"not enough labeled sentences for ({lang}, {task})"
                    )
                split_seed = derive_seed(config.run_seed, lang, task, "split")
                stratify_labels = (
                    labels
                    if (config.stratify and task_kind(task) == "classification")
                    else None
                )
                splits = make_splits(
                    ids, DEFAULT_RATIOS, split_seed, labels=stratify_labels
                )
                controls = make_controls(
                    labels,
                    n_variants=len(config.control_seeds),
                    seeds=config.control_seeds,
                )
                variants = [LabelVariant(kind="real", labels=labels)] + controls
                self._cells[(lang, task)] = (ids, splits, variants)

    def cell_keys(self) -> list[tuple]:
        return [
            (lang, task, approach)
            for lang in self.config.languages
            for task in self.config.tasks
            for approach in self.config.approaches
        ]

    def _features_for(self, ids, splits: SplitIndices):
        missing = [i for i in ids if i not in self.sequences]
        if missing:
            raise DataError(
                f"{len(missing)} sentence id(s) missing from the subword "
                f"file, first: {missing[0]!r}"
            )
        # vocabulary from the training split only, never val/test
        vectorizer = SubwordTfidf().fit(
            [self.sequences[i] for i in splits.train], split_tag="train"
        )
        return vectorizer.transform([self.sequences[i] for i in ids])

    def run_cell(self, lang: str, task: str, approach: str) -> list[ExperimentResult]:
        config = self.config
        kind = task_kind(task)
        ids, splits, variants = self._cells[(lang, task)]
        train_pos, val_pos, test_pos = splits.positions(ids)
        hp = dict(config.hyperparameters.get(approach, {}))
        started = time.monotonic()
        rows: list[ExperimentResult] = []

        if approach == "probe":
            layer_indices = config.layer_range or self.store.layer_indices
            rows_pos = self.store.rows_for(ids)
            sub_store_layers = {
                k: self.store.layer(k)[rows_pos] for k in layer_indices
            }
            sub_store = EmbeddingStore(
                ids=list(ids),
                layers=sub_store_layers,
                dim=self.store.dim,
                granularity=self.store.granularity,
                model_id=self.store.model_id,
                pooling=self.store.pooling,
            )
            probe_config = ProbeConfig(
                task=kind,
                seed=derive_seed(config.run_seed, lang, task, "probe"),
                **hp,
            )
            sweep = layer_sweep(
                sub_store,
                [(v.name, v.labels) for v in variants],
                (train_pos, val_pos, test_pos),
                probe_config,
                layer_indices=layer_indices,
            )
            for entry in sweep:
                rows.append(
                    ExperimentResult(
                        language=lang,
                        task=task,
                        approach=approach,
                        variant=entry["variant"],
                        metric=entry["metric"],
                        layer=entry["layer"],
                        config_hash=self.hash,
                    )
                )
        else:
            X = None
            if approach in ("linear", "gbt"):
                X = self._features_for(ids, splits)
            for variant in variants:
                y = variant.labels
                if approach == "dummy":
                    model = baselines.fit_dummy(y[train_pos], kind)
                    predictions = model.predict(test_pos.size)
                elif approach == "linear":
                    if kind == "classification":
                        model = baselines.fit_logistic(X[train_pos], y[train_pos], **hp)
                    else:
                        model = baselines.fit_ridge(X[train_pos], y[train_pos], **hp)
                    predictions = model.predict(X[test_pos])
                elif approach == "gbt":
                    loss = "logistic" if kind == "classification" else "squared"
                    model = baselines.fit_gbt(
                        X[train_pos], y[train_pos], loss=loss, **hp
                    )
                    predictions = model.predict(X[test_pos])
                else:
                    raise ConfigError(f"unknown approach {approach!r}")
                metric = evaluate(predictions, y[test_pos], kind)
                rows.append(
                    ExperimentResult(
                        language=lang,
                        task=task,
                        approach=approach,
                        variant=variant.name,
                        metric=metric,
                        config_hash=self.hash,
                    )
                )

        _attach_selectivity(rows, kind)
        elapsed = time.monotonic() - started
        for row in rows:
            row.wall_time_s = round(elapsed / max(len(rows), 1), 6)
        return rows


def run_experiment(config: ExperimentConfig) -> list[ExperimentResult]:
    """Run the full (language, task, approach) matrix and persist rows.

    Already-persisted cells from a previous run with the same config hash
    are reused, so an interrupted run resumes where it stopped. Failed
    cells are recorded with an error marker and do not abort the run.
    """
    config.validate()
    output_dir = Path(config.output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    results_path = output_dir / "results.jsonl"
    runner = _CellRunner(config)
    # record the resolved configuration (stratification, seeds, ...) per run
    (output_dir / "run_config.json").write_text(
        json.dumps(
            {**asdict(config), "config_hash": runner.hash}, sort_keys=True, indent=2
        ),
        encoding="utf-8",
    )

    existing = load_results(results_path, config_hash=runner.hash)
    done_cells = {(r.language, r.task, r.approach) for r in existing}
    writer = _ResultWriter(results_path)

    pending = [key for key in runner.cell_keys() if key not in done_cells]
    logger.info(
        "running %d cells (%d already persisted)", len(pending), len(done_cells)
    )

    def execute(key: tuple) -> list[ExperimentResult]:
        lang, task, approach = key
        try:
            rows = runner.run_cell(lang, task, approach)
        except QprobeError as exc:
            logger.error("cell %s failed: %s", key, exc)
            rows = [
                ExperimentResult(
                    language=lang,
                    task=task,
                    approach=approach,
                    variant="real",
                    metric=None,
                    config_hash=runner.hash,
                    error=str(exc),
                )
            ]
        writer.write(rows)
        return rows

    new_rows: list[ExperimentResult] = []
    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            for rows in pool.map(execute, pending):
                new_rows.extend(rows)
    else:
        for key in pending:
            new_rows.extend(execute(key))

    return sort_results(existing + new_rows)
