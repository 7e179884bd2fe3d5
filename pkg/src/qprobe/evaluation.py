"""Test-set metric computation shared by baselines, probes and the runner."""

from __future__ import annotations

import numpy as np

from .errors import DataError


def evaluate(predictions, labels, task: str) -> float:
    """Accuracy in percent (classification) or MSE (regression).

    Classification thresholds probabilities at 0.5 with ties going to 1.
    """
    predictions = np.asarray(predictions, dtype=float).ravel()
    labels = np.asarray(labels, dtype=float).ravel()
    if predictions.shape != labels.shape:
        raise DataError(
            f"predictions ({predictions.shape}) and labels ({labels.shape}) "
            "are not aligned"
        )
    if task == "classification":
        hard = (predictions >= 0.5).astype(float)
        return 100.0 * float(np.mean(hard == labels))
    if task == "regression":
        return float(np.mean((predictions - labels) ** 2))
    raise DataError(f"unknown task {task!r}")
