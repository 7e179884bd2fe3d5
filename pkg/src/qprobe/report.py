"""Result aggregation into fixed table shapes plus corpus statistics.

Formatting is deterministic: accuracy 1 decimal, MSE 3 decimals,
selectivity 2 decimals, missing cells rendered as an em-dash placeholder.
Identical result sets always produce byte-identical files.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .corpus import DepSentence
from .errors import DataError
from .runner import ExperimentResult, sort_results, task_kind

MISSING = "—"

# fixed thresholds on the max-min error range across layers
FLAT_BELOW = 0.01
OSCILLATING_ABOVE = 0.03


@dataclass(frozen=True)
class LayerProfile:
    values: tuple
    value_range: float
    profile_class: str


def best_layer(per_layer_metrics: dict, task: str) -> tuple[int, float]:
    """Best layer under the task's direction; ties pick the lowest index."""
    if not per_layer_metrics:
        raise DataError("no per-layer metrics")
    kind = "classification" if task == "classification" else "regression"
    best = None
    for layer in sorted(per_layer_metrics):
        value = per_layer_metrics[layer]
        if best is None:
            best = (layer, value)
            continue
        if kind == "classification" and value > best[1]:
            best = (layer, value)
        elif kind == "regression" and value < best[1]:
            best = (layer, value)
    return best


def weakest_layer(per_layer_metrics: dict, task: str) -> tuple[int, float]:
    """Dual of best_layer: argmin accuracy / argmax error, lowest index ties."""
    if not per_layer_metrics:
        raise DataError("no per-layer metrics")
    kind = "classification" if task == "classification" else "regression"
    worst = None
    for layer in sorted(per_layer_metrics):
        value = per_layer_metrics[layer]
        if worst is None:
            worst = (layer, value)
            continue
        if kind == "classification" and value < worst[1]:
            worst = (layer, value)
        elif kind == "regression" and value > worst[1]:
            worst = (layer, value)
    return worst


def layer_profile(per_layer_errors: Sequence[float]) -> LayerProfile:
    """flat (< 0.01), moderate (0.01..0.03 inclusive) or oscillating (> 0.03)."""
    values = tuple(float(v) for v in per_layer_errors)
    if len(values) < 2:
        raise DataError("a layer profile needs at least 2 layers")
    value_range = max(values) - min(values)
    if value_range < FLAT_BELOW:
        cls = "flat"
    elif value_range <= OSCILLATING_ABOVE:
        cls = "moderate"
    else:
        cls = "oscillating"
    return LayerProfile(values=values, value_range=value_range, profile_class=cls)


@dataclass(frozen=True)
class CorpusStats:
    language: str
    sentences: int
    pct_polar: float
    pct_content: float
    mean_combined: Optional[float]


def corpus_stats(sentences: Iterable[DepSentence]) -> list[CorpusStats]:
    """Per-language sentence counts, label shares and mean combined score."""
    by_language: dict[str, list[DepSentence]] = {}
    for sentence in sentences:
        by_language.setdefault(sentence.language, []).append(sentence)
    stats = []
    for language in sorted(by_language):
        group = by_language[language]
        labeled = [s for s in group if s.question_label is not None]
        polar = sum(1 for s in labeled if s.question_label == 1)
        if labeled:
            pct_polar = 100.0 * polar / len(labeled)
        else:
            pct_polar = 0.0
        combined = [
            s.metrics["normalized"]["combined"]
            for s in group
            if s.metrics and "combined" in s.metrics.get("normalized", {})
        ]
        stats.append(
            CorpusStats(
                language=language,
                sentences=len(group),
                pct_polar=round(pct_polar, 1),
                pct_content=round(100.0 - pct_polar, 1) if labeled else 0.0,
                mean_combined=round(float(np.mean(combined)), 2) if combined else None,
            )
        )
    return stats


def _fmt_metric(value: Optional[float], kind: str) -> str:
    if value is None or not np.isfinite(value):
        return MISSING
    if kind == "classification":
        return f"{value:.1f}"
    return f"{value:.3f}"


def _fmt_s(value: Optional[float]) -> str:
    if value is None or not np.isfinite(value):
        return MISSING
    return f"{value:.2f}"


def _write_table(path: Path, header: list[str], rows: list[list[str]], fmt: str) -> None:
    lines = []
    if fmt == "tsv":
        lines.append("\t".join(header))
        lines.extend("\t".join(row) for row in rows)
    elif fmt == "md":
        lines.append("| " + " | ".join(header) + " |")
        lines.append("|" + "|".join(" --- " for _ in header) + "|")
        lines.extend("| " + " | ".join(row) + " |" for row in rows)
    else:
        raise DataError(f"unknown table format {fmt!r}")
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _real_rows(results, task_filter):
    return [
        r
        for r in results
        if r.variant == "real" and r.error is None and task_filter(r.task)
    ]


def _probe_layer_map(results, language, task, variant="real") -> dict:
    return {
        r.layer: r.metric
        for r in results
        if r.approach == "probe"
        and r.language == language
        and r.task == task
        and r.variant == variant
        and r.metric is not None
    }


def _grid_for_task_kind(results, kind: str) -> tuple[list[str], list[list[str]]]:
    """Per-language grid: approach columns with metric and S̄ (Table-2 shape)."""
    rows_real = _real_rows(results, lambda t: task_kind(t) == kind)
    languages = sorted({r.language for r in rows_real})
    tasks = sorted({r.task for r in rows_real})
    header = ["task", "language"]
    for approach in ("dummy", "linear", "gbt"):
        header += [approach, f"{approach}_S_bar"]
    header += ["probe_best", "probe_S_bar", "probe_layer", "best_approach"]
    out_rows = []
    for task in tasks:
        for language in languages:
            cells = {"task": task, "language": language}
            scores = {}
            for approach in ("dummy", "linear", "gbt"):
                match = [
                    r
                    for r in rows_real
                    if r.language == language
                    and r.task == task
                    and r.approach == approach
                ]
                if match:
                    cells[approach] = _fmt_metric(match[0].metric, kind)
                    cells[f"{approach}_S_bar"] = _fmt_s(match[0].s_bar)
                    scores[approach] = match[0].metric
                else:
                    cells[approach] = MISSING
                    cells[f"{approach}_S_bar"] = MISSING
            per_layer = _probe_layer_map(results, language, task)
            if per_layer:
                layer, value = best_layer(per_layer, kind)
                cells["probe_best"] = _fmt_metric(value, kind)
                cells["probe_layer"] = str(layer)
                s_bar = next(
                    (
                        r.s_bar
                        for r in rows_real
                        if r.approach == "probe"
                        and r.language == language
                        and r.task == task
                        and r.layer == layer
                    ),
                    None,
                )
                cells["probe_S_bar"] = _fmt_s(s_bar)
                scores["probe"] = value
            else:
                cells["probe_best"] = MISSING
                cells["probe_S_bar"] = MISSING
                cells["probe_layer"] = MISSING
            if scores:
                if kind == "classification":
                    winner = max(sorted(scores), key=lambda a: scores[a])
                else:
                    winner = min(sorted(scores), key=lambda a: scores[a])
                cells["best_approach"] = winner
            else:
                cells["best_approach"] = MISSING
            out_rows.append([cells.get(column, MISSING) for column in header])
    return header, out_rows


def _detail_rows(results) -> tuple[list[str], list[list[str]]]:
    """Table-4-shaped detail: per approach and language, real vs controls.

    Optimal and weakest probe rows carry the layer index in parentheses,
    e.g. "85.7 (2)".
    """
    header = [
        "task",
        "approach",
        "language",
        "metric",
        "control_mean",
        "delta",
        "S_bar",
    ]
    rows = []
    valid = [r for r in results if r.error is None and r.metric is not None]
    tasks = sorted({r.task for r in valid})
    for task in tasks:
        kind = task_kind(task)
        task_rows = [r for r in valid if r.task == task]
        languages = sorted({r.language for r in task_rows})
        approaches = []
        for approach in ("dummy", "linear", "gbt"):
            if any(r.approach == approach for r in task_rows):
                approaches.append(approach)
        has_probe = any(r.approach == "probe" for r in task_rows)
        probe_blocks = ["probe_optimal", "probe_weakest"] if has_probe else []
        for approach in approaches + probe_blocks:
            for language in languages:
                if approach.startswith("probe_"):
                    per_layer = _probe_layer_map(results, language, task)
                    if not per_layer:
                        continue
                    pick = best_layer if approach == "probe_optimal" else weakest_layer
                    layer, value = pick(per_layer, kind)
                    group = [
                        r
                        for r in task_rows
                        if r.approach == "probe"
                        and r.language == language
                        and r.layer == layer
                    ]
                    metric_text = f"{_fmt_metric(value, kind)} ({layer})"
                else:
                    group = [
                        r
                        for r in task_rows
                        if r.approach == approach and r.language == language
                    ]
                    real = next((r for r in group if r.variant == "real"), None)
                    if real is None:
                        continue
                    value = real.metric
                    metric_text = _fmt_metric(value, kind)
                real = next((r for r in group if r.variant == "real"), None)
                controls = [r.metric for r in group if r.variant != "real"]
                if controls:
                    control_mean = float(np.mean(controls))
                    delta = (
                        value - control_mean
                        if kind == "classification"
                        else control_mean - value
                    )
                else:
                    control_mean = None
                    delta = None
                rows.append(
                    [
                        task,
                        approach,
                        language,
                        metric_text,
                        _fmt_metric(control_mean, kind),
                        _fmt_metric(delta, kind),
                        _fmt_s(real.s_bar if real else None),
                    ]
                )
    return header, rows


def emit_tables(
    results: Sequence[ExperimentResult],
    output_dir: str | Path,
    fmt: str = "tsv",
) -> list[Path]:
    """Write classification, regression, detail and long-form tables.

    Output is sorted canonically first, so two identical result sets give
    byte-identical files regardless of the order rows were produced in.
    """
    if fmt not in ("tsv", "md"):
        raise DataError(f"unknown report format {fmt!r}")
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    results = sort_results(list(results))
    ext = fmt
    written = []

    has_cls = any(task_kind(r.task) == "classification" for r in results)
    has_reg = any(task_kind(r.task) == "regression" for r in results)
    if has_cls:
        header, rows = _grid_for_task_kind(results, "classification")
        path = output_dir / f"classification.{ext}"
        _write_table(path, header, rows, fmt)
        written.append(path)
    if has_reg:
        header, rows = _grid_for_task_kind(results, "regression")
        path = output_dir / f"regression.{ext}"
        _write_table(path, header, rows, fmt)
        written.append(path)

    header, rows = _detail_rows(results)
    path = output_dir / f"detail.{ext}"
    _write_table(path, header, rows, fmt)
    written.append(path)

    # long-form table for external plotting of layer-wise curves
    long_header = ["language", "task", "approach", "layer", "variant", "metric", "S", "S_bar"]
    long_rows = []
    for r in results:
        kind = task_kind(r.task)
        long_rows.append(
            [
                r.language,
                r.task,
                r.approach,
                str(r.layer) if r.layer is not None else MISSING,
                r.variant,
                _fmt_metric(r.metric, kind),
                _fmt_s(r.selectivity),
                _fmt_s(r.s_bar),
            ]
        )
    path = output_dir / "layers_long.tsv"
    _write_table(path, long_header, long_rows, "tsv")
    written.append(path)

    return written


def emit_corpus_stats(
    stats: Sequence[CorpusStats], output_dir: str | Path, fmt: str = "tsv"
) -> Path:
    """Table-1-shaped corpus statistics file."""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    header = ["language", "sentences", "pct_polar", "pct_content", "avg_combined"]
    rows = []
    for entry in stats:
        rows.append(
            [
                entry.language,
                f"{entry.sentences:,}",
                f"{entry.pct_polar:.1f}",
                f"{entry.pct_content:.1f}",
                f"{entry.mean_combined:.2f}" if entry.mean_combined is not None else MISSING,
            ]
        )
    path = output_dir / f"corpus_stats.{fmt}"
    _write_table(path, header, rows, fmt)
    return path
