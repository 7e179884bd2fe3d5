"""Statistical predictors over TF-IDF features.

Four model families: dummy floors (majority class / mean value), logistic
regression trained by full-batch gradient descent with backtracking, ridge
regression in closed form, and plain gradient-boosted regression trees as
the nonlinear upper bound. All fits are deterministic given data and
hyperparameters; sparse feature matrices are accepted everywhere.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Optional

import numpy as np
from scipy import sparse
from scipy.linalg import cho_factor, cho_solve
from scipy.special import expit
from sklearn.base import BaseEstimator, ClassifierMixin, RegressorMixin
from sklearn.exceptions import NotFittedError

from .errors import DataError

MODEL_DUMP_VERSION = 1


def _as_matrix(X):
    if sparse.issparse(X):
        return X.tocsr()
    X = np.asarray(X, dtype=float)
    if X.ndim != 2:
        raise DataError(f"expected a 2-d feature matrix, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise DataError("feature matrix contains non-finite values")
    return X

def _check_aligned(X, y):
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise DataError(
            f"X has {X.shape[0]} rows but y has {y.shape[0]} entries"
        )
    if not np.all(np.isfinite(y)):
        raise DataError("targets contain non-finite values")
    return y


class DummyPredictor(BaseEstimator):
    """Majority-class or mean-value floor, computed from training labels."""

    def __init__(self, mode="majority_class"):
        self.mode = mode

    def fit(self, X, y):
        y = np.asarray(y, dtype=float).ravel()
        if y.size == 0:
            raise DataError("cannot fit a dummy model on empty labels")
        if self.mode == "majority_class":
            ones = int(np.sum(y == 1))
            zeros = int(np.sum(y == 0))
            # ties go to label 0
            self.statistic_ = 1.0 if ones > zeros else 0.0
        elif self.mode == "mean_value":
            self.statistic_ = float(np.mean(y))
        else:
            raise DataError(f"unknown dummy mode {self.mode!r}")
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "statistic_"):
            raise NotFittedError("DummyPredictor is not fitted")
        n = X if isinstance(X, int) else X.shape[0]
        return np.full(n, self.statistic_)


class LogisticRegressionGD(BaseEstimator, ClassifierMixin):
    """L2-penalized logistic regression by full-batch gradient descent.

    Minimizes mean log-loss + (l2_lambda/2)·||w||^2 with the intercept left
    unpenalized. Steps use Armijo backtracking, so the objective decreases
    monotonically across accepted iterations; training stops once the
    gradient norm drops below tol or max_iter is reached.
    """

    def __init__(self, l2_lambda=None, tol=1e-6, max_iter=1000):
        self.l2_lambda = l2_lambda
        self.tol = tol
        self.max_iter = max_iter

    def _objective(self, X, y, w, b, lam):
        z = X @ w + b
        # mean softplus(z) - y*z is the stable form of the log-loss
        loss = float(np.mean(np.logaddexp(0.0, z) - y * z))
        return loss + 0.5 * lam * float(w @ w)

    def _gradient(self, X, y, w, b, lam):
        z = X @ w + b
        r = expit(z) - y
        grad_w = np.asarray(X.T @ r).ravel() / y.size + lam * w
        grad_b = float(np.mean(r))
        return grad_w, grad_b

    def fit(self, X, y):
        X = _as_matrix(X)
        y = _check_aligned(X, y)
        if not np.all(np.isin(y, (0.0, 1.0))):
            raise DataError("logistic regression requires binary 0/1 labels")
        n, d = X.shape
        lam = (1.0 / n) if self.l2_lambda is None else float(self.l2_lambda)
        if lam < 0:
            raise DataError("l2_lambda must be nonnegative")

        w = np.zeros(d)
        b = 0.0
        objective = self._objective(X, y, w, b, lam)
        history = [objective]
        step = 1.0
        n_iter = 0
        for n_iter in range(1, self.max_iter + 1):
            grad_w, grad_b = self._gradient(X, y, w, b, lam)
            grad_sq = float(grad_w @ grad_w) + grad_b * grad_b
            if np.sqrt(grad_sq) < self.tol:
                n_iter -= 1
                break
            # Armijo backtracking from twice the last accepted step
            step = min(step * 2.0, 1e6)
            accepted = False
            for _ in range(60):
                w_new = w - step * grad_w
                b_new = b - step * grad_b
                candidate = self._objective(X, y, w_new, b_new, lam)
                if candidate <= objective - 1e-4 * step * grad_sq:
                    accepted = True
                    break
                step *= 0.5
            if not accepted:
                break  # no decreasing step representable; converged
            w, b, objective = w_new, b_new, candidate
            history.append(objective)

        self.weights_ = w
        self.intercept_ = b
        self.l2_lambda_ = lam
        self.n_iter_ = n_iter
        self.objective_history_ = history
        return self

    def _check_fitted(self):
        if not hasattr(self, "weights_"):
            raise NotFittedError("LogisticRegressionGD is not fitted")

    def decision_function(self, X) -> np.ndarray:
        self._check_fitted()
        X = _as_matrix(X)
        return np.asarray(X @ self.weights_).ravel() + self.intercept_

    def predict_proba(self, X) -> np.ndarray:
        return expit(self.decision_function(X))

    def predict(self, X) -> np.ndarray:
        return (self.predict_proba(X) >= 0.5).astype(float)


class RidgeRegressor(BaseEstimator, RegressorMixin):
    """Closed-form ridge regression on centered targets.

    Solves (X^T X + l2_lambda I) w = X^T (y - mean(y)) with a Cholesky
    factorization; the intercept is the target mean, so predictions are
    X w + mean(y). When features outnumber samples and l2_lambda > 0 the
    equivalent dual system is solved instead.
    """

    def __init__(self, l2_lambda=1.0):
        self.l2_lambda = l2_lambda

    def fit(self, X, y):
        X = _as_matrix(X)
        y = _check_aligned(X, y)
        n, d = X.shape
        lam = float(self.l2_lambda)
        if lam < 0:
            raise DataError("l2_lambda must be nonnegative")
        y_mean = float(np.mean(y))
        yc = y - y_mean
        if lam > 0 and d > n:
            # dual: w = X^T (X X^T + lam I)^-1 yc, same solution for lam > 0
            gram = np.asarray((X @ X.T).todense() if sparse.issparse(X) else X @ X.T)
            gram[np.diag_indices_from(gram)] += lam
            alpha = cho_solve(cho_factor(gram), yc)
            w = np.asarray(X.T @ alpha).ravel()
        else:
            gram = np.asarray((X.T @ X).todense() if sparse.issparse(X) else X.T @ X)
            gram[np.diag_indices_from(gram)] += lam
            rhs = np.asarray(X.T @ yc).ravel()
            w = cho_solve(cho_factor(gram), rhs)
        self.weights_ = w
        self.intercept_ = y_mean
        return self

    def predict(self, X) -> np.ndarray:
        if not hasattr(self, "weights_"):
            raise NotFittedError("RidgeRegressor is not fitted")
        X = _as_matrix(X)
        return np.asarray(X @ self.weights_).ravel() + self.intercept_


def _sse(total: float, total_sq: float, count: int) -> float:
    if count == 0:
        return 0.0
    return total_sq - total * total / count


class _ColumnCache:
    """Dense column views over a (possibly sparse) feature matrix."""

    def __init__(self, X):
        self._X = X.tocsc() if sparse.issparse(X) else np.asarray(X, dtype=float)
        self._cache: dict[int, np.ndarray] = {}
        self.shape = X.shape

    def column(self, j: int) -> np.ndarray:
        col = self._cache.get(j)
        if col is None:
            if sparse.issparse(self._X):
                col = np.asarray(self._X[:, [j]].todense()).ravel()
            else:
                col = self._X[:, j]
            self._cache[j] = col
        return col


class GradientBoostedTrees(BaseEstimator):
    """Stagewise depth-limited regression trees on negative gradients.

    Squared loss fits residuals y - F with mean-residual leaves; logistic
    loss fits y - sigmoid(F) with Newton-step leaves. Splits maximize
    variance reduction, scanning features in ascending index order so ties
    resolve to the lowest feature index. No subsampling, so training is
    deterministic.
    """

    def __init__(self, rounds=200, max_depth=3, learning_rate=0.1, loss="squared"):
        self.rounds = rounds
        self.max_depth = max_depth
        self.learning_rate = learning_rate
        self.loss = loss

    def _best_split(self, cols, idx, residual):
        best = None  # (gain, feature, threshold)
        r = residual[idx]
        parent_sse = _sse(float(r.sum()), float((r * r).sum()), r.size)
        for j in range(cols.shape[1]):
            values = cols.column(j)[idx]
            order = np.argsort(values, kind="stable")
            v_sorted = values[order]
            r_sorted = r[order]
            prefix = np.cumsum(r_sorted)
            prefix_sq = np.cumsum(r_sorted * r_sorted)
            total, total_sq = prefix[-1], prefix_sq[-1]
            # candidate cut after position k only where the value changes
            for k in range(v_sorted.size - 1):
                if v_sorted[k] == v_sorted[k + 1]:
                    continue
                left = _sse(float(prefix[k]), float(prefix_sq[k]), k + 1)
                right = _sse(
                    float(total - prefix[k]),
                    float(total_sq - prefix_sq[k]),
                    v_sorted.size - k - 1,
                )
                gain = parent_sse - left - right
                if gain > 1e-12 and (best is None or gain > best[0]):
                    threshold = (v_sorted[k] + v_sorted[k + 1]) / 2.0
                    best = (gain, j, float(threshold))
        return best

    def _leaf_value(self, idx, residual, hessian) -> float:
        if hessian is None:
            return float(np.mean(residual[idx]))
        denom = float(np.sum(hessian[idx]))
        return float(np.sum(residual[idx]) / max(denom, 1e-12))

    def _grow(self, cols, idx, residual, hessian, depth):
        if depth >= self.max_depth or idx.size < 2:
            return {"value": self._leaf_value(idx, residual, hessian)}
        split = self._best_split(cols, idx, residual)
        if split is None:
            return {"value": self._leaf_value(idx, residual, hessian)}
        _, feature, threshold = split
        mask = cols.column(feature)[idx] <= threshold
        return {
            "feature": int(feature),
            "threshold": threshold,
            "left": self._grow(cols, idx[mask], residual, hessian, depth + 1),
            "right": self._grow(cols, idx[~mask], residual, hessian, depth + 1),
        }

    def _tree_predict(self, node, cols, n) -> np.ndarray:
        out = np.empty(n)
        stack = [(node, np.arange(n))]
        while stack:
            current, idx = stack.pop()
            if "value" in current:
                out[idx] = current["value"]
                continue
            mask = cols.column(current["feature"])[idx] <= current["threshold"]
            stack.append((current["left"], idx[mask]))
            stack.append((current["right"], idx[~mask]))
        return out

    def fit(self, X, y):
        if self.rounds < 0:
            raise DataError("rounds must be nonnegative")
        if self.loss not in ("squared", "logistic"):
            raise DataError(f"unknown loss {self.loss!r}")
        X = _as_matrix(X)
        y = _check_aligned(X, y)
        if self.loss == "logistic" and not np.all(np.isin(y, (0.0, 1.0))):
            raise DataError("logistic loss requires binary 0/1 labels")
        cols = _ColumnCache(X)
        if self.loss == "squared":
            self.base_score_ = float(np.mean(y))
        else:
            rate = float(np.clip(np.mean(y), 1e-12, 1 - 1e-12))
            self.base_score_ = float(np.log(rate / (1 - rate)))
        F = np.full(y.size, self.base_score_)
        self.trees_ = []
        all_idx = np.arange(y.size)
        for _ in range(self.rounds):
            if self.loss == "squared":
                residual = y - F
                hessian = None
            else:
                p = expit(F)
                residual = y - p
                hessian = p * (1 - p)
            tree = self._grow(cols, all_idx, residual, hessian, depth=0)
            self.trees_.append(tree)
            F = F + self.learning_rate * self._tree_predict(tree, cols, y.size)
        return self

    def decision_function(self, X) -> np.ndarray:
        if not hasattr(self, "trees_"):
            raise NotFittedError("GradientBoostedTrees is not fitted")
        X = _as_matrix(X)
        cols = _ColumnCache(X)
        out = np.full(X.shape[0], self.base_score_)
        for tree in self.trees_:
            out += self.learning_rate * self._tree_predict(tree, cols, X.shape[0])
        return out

    def predict(self, X) -> np.ndarray:
        raw = self.decision_function(X)
        if self.loss == "logistic":
            return expit(raw)
        return raw

    def staged_predict(self, X):
        """Predictions after each boosting round, in round order."""
        if not hasattr(self, "trees_"):
            raise NotFittedError("GradientBoostedTrees is not fitted")
        X = _as_matrix(X)
        cols = _ColumnCache(X)
        out = np.full(X.shape[0], self.base_score_)
        for tree in self.trees_:
            out = out + self.learning_rate * self._tree_predict(tree, cols, X.shape[0])
            yield expit(out) if self.loss == "logistic" else out.copy()


def fit_dummy(labels, task: str) -> DummyPredictor:
    mode = "majority_class" if task == "classification" else "mean_value"
    return DummyPredictor(mode=mode).fit(None, labels)


def predict_dummy(model: DummyPredictor, n: int) -> np.ndarray:
    return model.predict(n)


def fit_logistic(X, y, l2_lambda=None, tol=1e-6, max_iter=1000) -> LogisticRegressionGD:
    return LogisticRegressionGD(l2_lambda=l2_lambda, tol=tol, max_iter=max_iter).fit(X, y)


def fit_ridge(X, y, l2_lambda=1.0) -> RidgeRegressor:
    return RidgeRegressor(l2_lambda=l2_lambda).fit(X, y)


def fit_gbt(X, y, rounds=200, max_depth=3, learning_rate=0.1, loss="squared"):
    return GradientBoostedTrees(
        rounds=rounds, max_depth=max_depth, learning_rate=learning_rate, loss=loss
    ).fit(X, y)


def predict_gbt(model: GradientBoostedTrees, X) -> np.ndarray:
    return model.predict(X)


def dump_model(model, vocabulary_ref: Optional[str] = None) -> dict:
    """Versioned, byte-stable record of a fitted model."""
    record = {
        "format_version": MODEL_DUMP_VERSION,
        "kind": type(model).__name__,
        "hyperparameters": model.get_params(),
        "vocabulary_ref": vocabulary_ref,
    }
    if isinstance(model, DummyPredictor):
        record["statistic"] = model.statistic_
    elif isinstance(model, LogisticRegressionGD):
        record["weights"] = model.weights_.tolist()
        record["intercept"] = model.intercept_
    elif isinstance(model, RidgeRegressor):
        record["weights"] = model.weights_.tolist()
        record["intercept"] = model.intercept_
    elif isinstance(model, GradientBoostedTrees):
        record["base_score"] = model.base_score_
        record["trees"] = model.trees_
    elif type(model).__name__ == "MLPProbe":
        record["init_scheme"] = "uniform_fan_in"
        record["layers"] = [
            {"weights": W.tolist(), "bias": b.tolist()} for W, b in model.params_
        ]
        record["stopped_epoch"] = model.stopped_epoch_
    else:
        raise DataError(f"cannot dump model of type {type(model).__name__}")
    return record


def save_model(model, path: str | Path, vocabulary_ref: Optional[str] = None) -> None:
    record = dump_model(model, vocabulary_ref)
    Path(path).write_text(
        json.dumps(record, sort_keys=True, ensure_ascii=False), encoding="utf-8"
    )


def load_model(path: str | Path):
    record = json.loads(Path(path).read_text(encoding="utf-8"))
    if record.get("format_version") != MODEL_DUMP_VERSION:
        raise DataError(
            f"unsupported model dump version {record.get('format_version')!r}"
        )
    kind = record["kind"]
    params = record["hyperparameters"]
    if kind == "DummyPredictor":
        model = DummyPredictor(**params)
        model.statistic_ = record["statistic"]
    elif kind == "LogisticRegressionGD":
        model = LogisticRegressionGD(**params)
        model.weights_ = np.array(record["weights"])
        model.intercept_ = record["intercept"]
    elif kind == "RidgeRegressor":
        model = RidgeRegressor(**params)
        model.weights_ = np.array(record["weights"])
        model.intercept_ = record["intercept"]
    elif kind == "GradientBoostedTrees":
        model = GradientBoostedTrees(**params)
        model.base_score_ = record["base_score"]
        model.trees_ = record["trees"]
    elif kind == "MLPProbe":
        from .probes import MLPProbe

        model = MLPProbe(**params)
        model.params_ = [
            (np.array(layer["weights"]), np.array(layer["bias"]))
            for layer in record["layers"]
        ]
        model.stopped_epoch_ = record["stopped_epoch"]
        model.history_ = []
    else:
        raise DataError(f"unknown model kind {kind!r}")
    return model
