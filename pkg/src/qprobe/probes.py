"""Layer-wise MLP probes over frozen sentence embeddings.

Probes are small fully-connected rectifier networks trained with Adam on
binary cross-entropy (classification, sigmoid output) or mean squared
error (regression, linear output). Training is deterministic under a seed:
initialization and the per-epoch shuffle order both derive from it. Early
stopping watches validation loss and restores the best parameters.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .errors import DataError, DivergenceError, FormatError
from .evaluation import evaluate
from .qemb import read_qemb

DEFAULT_HIDDEN = {"classification": [384], "regression": [128, 128]}
ADAM_BETA1 = 0.9
ADAM_BETA2 = 0.999
ADAM_EPS = 1e-8


def mean_pool(token_vectors) -> np.ndarray:
    """Elementwise arithmetic mean of a nonempty stack of equal-width vectors."""
    vectors = np.asarray(token_vectors, dtype=float)
    if vectors.ndim != 2 or vectors.shape[0] == 0:
        raise DataError("mean_pool needs a nonempty list of vectors")
    return vectors.mean(axis=0)


@dataclass
class EmbeddingStore:
    """Per-layer sentence matrices aligned to sentence ids.

    Token-level files are pooled once at load time so every layer exposes
    one row per sentence afterwards.
    """

    ids: list[str]
    layers: dict[int, np.ndarray]
    dim: int
    granularity: str
    model_id: str = "unknown"
    pooling: str = "mean"

    def __post_init__(self):
        self._row_of = {sid: row for row, sid in enumerate(self.ids)}
        if len(self._row_of) != len(self.ids):
            raise FormatError("duplicate sentence ids in embedding store")
        for index, matrix in self.layers.items():
            if matrix.shape != (len(self.ids), self.dim):
                raise FormatError(
                    f"layer {index} block has shape {matrix.shape}, expected "
                    f"({len(self.ids)}, {self.dim})"
                )
            if not np.all(np.isfinite(matrix)):
                raise FormatError(f"layer {index} contains non-finite values")

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    @property
    def layer_indices(self) -> list[int]:
        return sorted(self.layers)

    def layer(self, index: int) -> np.ndarray:
        if index not in self.layers:
            raise KeyError(f"no layer {index} in store (have {self.layer_indices})")
        return self.layers[index]

    def rows_for(self, sentence_ids: Sequence[str]) -> np.ndarray:
        missing = [sid for sid in sentence_ids if sid not in self._row_of]
        if missing:
            raise FormatError(
                f"{len(missing)} sentence id(s) missing from the embedding "
                f"store, first: {missing[0]!r}"
            )
        return np.array([self._row_of[sid] for sid in sentence_ids])

    @classmethod
    def load(cls, path, manifest_path=None) -> "EmbeddingStore":
        data, manifest = read_qemb(path, manifest_path)
        ids = [str(s) for s in manifest["sentence_ids"]]
        layer_indices = [int(i) for i in manifest["layer_indices"]]
        layers = {}
        if data["granularity"] == "token_level":
            counts = data["token_counts"]
            bounds = np.concatenate([[0], np.cumsum(counts)])
            for index, block in zip(layer_indices, data["blocks"]):
                pooled = np.empty((len(ids), data["dim"]))
                for row in range(len(ids)):
                    lo, hi = bounds[row], bounds[row + 1]
                    if hi == lo:
                        raise FormatError(
                            f"sentence {ids[row]!r} has zero token rows"
                        )
                    pooled[row] = mean_pool(block[lo:hi])
                layers[index] = pooled
        else:
            for index, block in zip(layer_indices, data["blocks"]):
                layers[index] = np.asarray(block, dtype=float)
        return cls(
            ids=ids,
            layers=layers,
            dim=data["dim"],
            granularity=data["granularity"],
            model_id=str(manifest.get("model_id", "unknown")),
            pooling=str(manifest.get("pooling", "mean")),
        )


@dataclass
class ProbeConfig:
    task: str = "classification"
    hidden: Optional[list[int]] = None
    learning_rate: float = 1e-3
    batch_size: int = 16
    max_epochs: int = 100
    patience: int = 5
    min_delta: float = 1e-4
    seed: int = 0

    def __post_init__(self):
        if self.task not in ("classification", "regression"):
            raise DataError(f"unknown probe task {self.task!r}")
        if self.hidden is not None and any(h <= 0 for h in self.hidden):
            raise DataError("hidden widths must be positive")
        if self.patience < 1:
            raise DataError("patience must be at least 1")

    def resolved_hidden(self) -> list[int]:
        return list(self.hidden) if self.hidden is not None else list(
            DEFAULT_HIDDEN[self.task]
        )


def _forward(params, X):
    """Returns (activations per layer, output vector)."""
    activations = [X]
    h = X
    for i, (W, b) in enumerate(params):
        z = h @ W + b
        if i < len(params) - 1:
            h = np.maximum(z, 0.0)
            activations.append(h)
        else:
            return activations, z.ravel()
    raise AssertionError("unreachable")


def _loss_and_grads(params, X, y, task):
    """Loss plus gradients for every weight matrix and bias vector."""
    activations, z = _forward(params, X)
    n = y.size
    if task == "classification":
        loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
        dz = (_sigmoid(z) - y) / n
    else:
        diff = z - y
        loss = float(np.mean(diff * diff))
        dz = 2.0 * diff / n
    grads = [None] * len(params)
    delta = dz[:, None]
    for i in range(len(params) - 1, -1, -1):
        W, _ = params[i]
        grads[i] = (activations[i].T @ delta, delta.sum(axis=0))
        if i > 0:
            delta = (delta @ W.T) * (activations[i] > 0.0)
    return loss, grads


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -500, 500)))


class MLPProbe(BaseEstimator):
    """Rectifier MLP probe with Adam training and early stopping.

    Classification defaults to one hidden layer of 384 units, regression to
    two hidden layers of 128; the output layer is a single unit (sigmoid
    applied at predict time for classification).
    """

    def __init__(
        self,
        task="classification",
        hidden=None,
        learning_rate=1e-3,
        batch_size=16,
        max_epochs=100,
        patience=5,
        min_delta=1e-4,
        seed=0,
    ):
        self.task = task
        self.hidden = hidden
        self.learning_rate = learning_rate
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.min_delta = min_delta
        self.seed = seed

    def _config(self) -> ProbeConfig:
        return ProbeConfig(
            task=self.task,
            hidden=self.hidden,
            learning_rate=self.learning_rate,
            batch_size=self.batch_size,
            max_epochs=self.max_epochs,
            patience=self.patience,
            min_delta=self.min_delta,
            seed=self.seed,
        )

    def _init_params(self, dim, widths, rng):
        # uniform fan-in scaling for both weights and biases
        params = []
        fan_in = dim
        for width in widths + [1]:
            bound = 1.0 / np.sqrt(fan_in)
            W = rng.uniform(-bound, bound, size=(fan_in, width))
            b = rng.uniform(-bound, bound, size=width)
            params.append((W, b))
            fan_in = width
        return params

    def _data_loss(self, params, X, y):
        loss, _ = _loss_and_grads(params, X, y, self.task)
        return loss

    def fit(self, X, y, X_val=None, y_val=None):
        config = self._config()
        X = np.asarray(X, dtype=float)
        y = np.asarray(y, dtype=float).ravel()
        if X.ndim != 2 or X.shape[0] != y.size:
            raise DataError("embeddings and labels are not aligned")
        if X.shape[0] == 0:
            raise DataError("empty training split")
        if self.task == "classification" and not np.all(np.isin(y, (0.0, 1.0))):
            raise DataError("classification probes require binary 0/1 labels")
        has_val = X_val is not None and y_val is not None
        if has_val:
            X_val = np.asarray(X_val, dtype=float)
            y_val = np.asarray(y_val, dtype=float).ravel()
            if X_val.shape[0] == 0:
                raise DataError("empty validation split")

        seed_seq = np.random.SeedSequence(config.seed)
        init_seq, shuffle_seq = seed_seq.spawn(2)
        init_rng = np.random.default_rng(init_seq)
        shuffle_rng = np.random.default_rng(shuffle_seq)

        params = self._init_params(X.shape[1], config.resolved_hidden(), init_rng)
        state_m = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]
        state_v = [(np.zeros_like(W), np.zeros_like(b)) for W, b in params]
        step = 0
        lr = config.learning_rate

        best_val = np.inf
        best_params = [(W.copy(), b.copy()) for W, b in params]
        wait = 0
        history = []
        stopped = config.max_epochs
        n = X.shape[0]

        for epoch in range(1, config.max_epochs + 1):
            order = shuffle_rng.permutation(n)
            for start in range(0, n, config.batch_size):
                batch = order[start : start + config.batch_size]
                loss, grads = _loss_and_grads(params, X[batch], y[batch], self.task)
                if not np.isfinite(loss):
                    raise DivergenceError(
                        f"non-finite training loss at epoch {epoch}"
                    )
                step += 1
                new_params = []
                for i, ((W, b), (gW, gb)) in enumerate(zip(params, grads)):
                    mW, mb = state_m[i]
                    vW, vb = state_v[i]
                    mW = ADAM_BETA1 * mW + (1 - ADAM_BETA1) * gW
                    mb = ADAM_BETA1 * mb + (1 - ADAM_BETA1) * gb
                    vW = ADAM_BETA2 * vW + (1 - ADAM_BETA2) * (gW * gW)
                    vb = ADAM_BETA2 * vb + (1 - ADAM_BETA2) * (gb * gb)
                    state_m[i] = (mW, mb)
                    state_v[i] = (vW, vb)
                    bias1 = 1 - ADAM_BETA1**step
                    bias2 = 1 - ADAM_BETA2**step
                    W = W - lr * (mW / bias1) / (np.sqrt(vW / bias2) + ADAM_EPS)
                    b = b - lr * (mb / bias1) / (np.sqrt(vb / bias2) + ADAM_EPS)
                    new_params.append((W, b))
                params = new_params

            train_loss = self._data_loss(params, X, y)
            entry = {"epoch": epoch, "train_loss": train_loss}
            if not np.isfinite(train_loss):
                raise DivergenceError(f"non-finite training loss at epoch {epoch}")
            if has_val:
                val_loss = self._data_loss(params, X_val, y_val)
                if not np.isfinite(val_loss):
                    raise DivergenceError(
                        f"non-finite validation loss at epoch {epoch}"
                    )
                entry["val_loss"] = val_loss
                if best_val - val_loss > config.min_delta:
                    best_val = val_loss
                    best_params = [(W.copy(), b.copy()) for W, b in params]
                    wait = 0
                else:
                    wait += 1
                history.append(entry)
                if wait >= config.patience:
                    stopped = epoch
                    break
            else:
                history.append(entry)
            stopped = epoch

        self.params_ = best_params if has_val else params
        self.history_ = history
        self.stopped_epoch_ = stopped
        self.best_val_loss_ = best_val if has_val else None
        return self

    def _check_fitted(self):
        if not hasattr(self, "params_"):
            raise NotFittedError("MLPProbe is not fitted")

    def decision_function(self, X) -> np.ndarray:
        self._check_fitted()
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.params_[0][0].shape[0]:
            raise DataError(
                f"input dimension {X.shape} does not match probe input "
                f"width {self.params_[0][0].shape[0]}"
            )
        _, z = _forward(self.params_, X)
        return z

    def predict(self, X) -> np.ndarray:
        z = self.decision_function(X)
        if self.task == "classification":
            return _sigmoid(z)
        return z


def train_probe(embeddings, labels, splits, config: ProbeConfig) -> MLPProbe:
    """Train one probe on explicit (train, val, test) row-index splits."""
    train_idx, val_idx, _ = splits
    train_idx = np.asarray(train_idx, dtype=int)
    val_idx = np.asarray(val_idx, dtype=int)
    if train_idx.size == 0 or val_idx.size == 0:
        raise DataError("degenerate split: train and val must be nonempty")
    X = np.asarray(embeddings, dtype=float)
    y = np.asarray(labels, dtype=float).ravel()
    probe = MLPProbe(
        task=config.task,
        hidden=config.hidden,
        learning_rate=config.learning_rate,
        batch_size=config.batch_size,
        max_epochs=config.max_epochs,
        patience=config.patience,
        min_delta=config.min_delta,
        seed=config.seed,
    )
    return probe.fit(X[train_idx], y[train_idx], X[val_idx], y[val_idx])


def probe_predict(probe: MLPProbe, X) -> np.ndarray:
    return probe.predict(X)


def layer_sweep(
    store: EmbeddingStore,
    variants,
    splits,
    config: ProbeConfig,
    layer_indices: Optional[Sequence[int]] = None,
) -> list[dict]:
    """Train one probe per (layer, label variant) and collect test metrics.

    `variants` is a sequence of (name, labels) pairs, real labels first by
    convention; `splits` holds row-index arrays into the store's rows. The
    per-variant metrics are exactly the selectivity inputs downstream.
    """
    train_idx, val_idx, test_idx = (np.asarray(s, dtype=int) for s in splits)
    indices = list(layer_indices) if layer_indices else store.layer_indices
    results = []
    for layer_index in indices:
        X = store.layer(layer_index)
        for name, labels in variants:
            labels = np.asarray(labels, dtype=float).ravel()
            try:
                probe = train_probe(
                    X, labels, (train_idx, val_idx, test_idx), config
                )
            except (DataError, DivergenceError) as exc:
                raise type(exc)(f"layer {layer_index}, variant {name}: {exc}")
            predictions = probe.predict(X[test_idx])
            metric = evaluate(predictions, labels[test_idx], config.task)
            results.append(
                {
                    "layer": layer_index,
                    "variant": name,
                    "metric": metric,
                    "stopped_epoch": probe.stopped_epoch_,
                    "history": probe.history_,
                }
            )
    return results
