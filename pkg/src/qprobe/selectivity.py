"""Shuffled-label control tasks and selectivity scores.

A control variant is a seeded uniform permutation of the full label vector,
applied before splitting so train, validation and test all carry control
labels. Selectivity compares performance on real labels against a control:

    classification  S = (acc_real - acc_control) / acc_control
    regression      S = (mse_control - mse_real) / mse_control

Both are positive exactly when the real-label run is better.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import DataError

DEFAULT_CONTROL_SEEDS = (11, 22, 33)


@dataclass(frozen=True)
class LabelVariant:
    kind: str  # "real" or "control"
    labels: np.ndarray
    control_seed: Optional[int] = None

    @property
    def name(self) -> str:
        if self.kind == "real":
            return "real"
        return f"control-{self.control_seed}"


def make_controls(
    labels, n_variants: int = 3, seeds: Optional[Sequence[int]] = None
) -> list[LabelVariant]:
    """Seeded uniform permutations of the label vector, one per seed."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise DataError("cannot build control variants for empty labels")
    if seeds is None:
        seeds = DEFAULT_CONTROL_SEEDS[:n_variants]
    seeds = list(seeds)
    if len(seeds) != n_variants:
        raise DataError(
            f"need {n_variants} control seeds, got {len(seeds)}"
        )
    if len(set(seeds)) != len(seeds):
        raise DataError("control seeds must be distinct")
    variants = []
    for seed in seeds:
        rng = np.random.default_rng(seed)
        permuted = labels[rng.permutation(labels.size)]
        variants.append(
            LabelVariant(kind="control", labels=permuted, control_seed=seed)
        )
    return variants


def selectivity_cls(acc_real: float, acc_control: float) -> float:
    if acc_control <= 0:
        raise DataError("classification selectivity needs acc_control > 0")
    return (acc_real - acc_control) / acc_control


def selectivity_reg(mse_real: float, mse_control: float) -> float:
    if mse_control <= 0:
        raise DataError("regression selectivity needs mse_control > 0")
    return (mse_control - mse_real) / mse_control


def selectivity(real_metric: float, control_metric: float, task: str) -> float:
    if task == "classification":
        return selectivity_cls(real_metric, control_metric)
    if task == "regression":
        return selectivity_reg(real_metric, control_metric)
    raise DataError(f"unknown task {task!r}")


def mean_selectivity(scores: Sequence[float]) -> float:
    scores = list(scores)
    if not scores:
        raise DataError("mean selectivity of an empty score list is undefined")
    return float(np.mean(scores))


@dataclass(frozen=True)
class SelectivityScore:
    """One (real, control) comparison plus the variant-averaged mean."""

    task: str
    real_metric: float
    control_metric: float
    score: float
    mean_over_variants: Optional[float] = None
