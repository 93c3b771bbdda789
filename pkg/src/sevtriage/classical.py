"""From-scratch classical classifiers with probability outputs.

All four models share the same surface: a train_* function returning an
immutable model whose ``predict_proba`` gives P(class 1) per row. The
logistic regression trains by full-batch gradient descent with a
backtracking line search, so its loss never increases; trees search
midpoint splits exactly; the forest averages bootstrap trees; KNN
memorizes and votes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import ConfigError, FitError, ShapeError
from .features import FeatureMatrix
from .seeds import substream


def _as_2d(X):
    """Accept FeatureMatrix, scipy sparse, or ndarray; return sparse or dense 2-D."""
    if isinstance(X, FeatureMatrix):
        return X.data
    if sp.issparse(X):
        return sp.csr_matrix(X, dtype=np.float64)
    return np.atleast_2d(np.asarray(X, dtype=np.float64))


def _as_dense(X) -> np.ndarray:
    mat = _as_2d(X)
    return mat.toarray() if sp.issparse(mat) else mat


def _check_width(X, expected: int):
    if X.shape[1] != expected:
        raise ShapeError(f"matrix width {X.shape[1]} != training width {expected}")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


# ---------------------------------------------------------------------------
# Logistic regression


@dataclass(frozen=True)
class LogRegModel:
    weights: np.ndarray
    bias: float
    C: float
    n_iter: int = 0

    def predict_proba(self, X) -> np.ndarray:
        mat = _as_2d(X)
        _check_width(mat, len(self.weights))
        return _sigmoid(np.asarray(mat @ self.weights).ravel() + self.bias)

    def to_dict(self) -> dict:
        return {"weights": self.weights.tolist(), "bias": self.bias, "C": self.C, "n_iter": self.n_iter}

    @classmethod
    def from_dict(cls, d: Mapping) -> "LogRegModel":
        return cls(np.asarray(d["weights"], dtype=np.float64), d["bias"], d["C"], d.get("n_iter", 0))


def logreg_loss(weights: np.ndarray, bias: float, X, y: np.ndarray, C: float) -> float:
    """Mean binary cross-entropy plus ||w||^2 / (2 C n); bias unpenalized."""
    n = X.shape[0]
    z = np.asarray(X @ weights).ravel() + bias
    # log(1 + exp(-|z|)) form is stable for both signs
    bce = np.mean(np.logaddexp(0.0, z) - y * z)
    return float(bce + weights @ weights / (2.0 * C * n))


def logreg_gradient(weights: np.ndarray, bias: float, X, y: np.ndarray, C: float) -> tuple[np.ndarray, float]:
    n = X.shape[0]
    p = _sigmoid(np.asarray(X @ weights).ravel() + bias)
    grad_w = np.asarray((X.T @ (p - y))).ravel() / n + weights / (C * n)
    grad_b = float(np.mean(p - y))
    return grad_w, grad_b


def train_logreg(X, y, C: float = 1.0, max_iter: int = 1000, tol: float = 1e-6) -> LogRegModel:
    """Deterministic full-batch gradient descent from zero initialization.

    Each step backtracks (halving) until the Armijo condition holds, so
    the regularized loss is non-increasing. Stops when the gradient
    infinity-norm drops below ``tol`` or after ``max_iter`` steps.
    """
    if C <= 0:
        raise ConfigError(f"C must be positive, got {C}")
    mat = _as_2d(X)
    y = np.asarray(y, dtype=np.float64).ravel()
    if mat.shape[0] != len(y):
        raise ShapeError(f"{mat.shape[0]} rows but {len(y)} labels")
    if len(np.unique(y)) < 2:
        raise FitError("logistic regression needs both classes present")

    d = mat.shape[1]
    w = np.zeros(d)
    b = 0.0
    loss = logreg_loss(w, b, mat, y, C)
    step = 1.0
    it = 0
    for it in range(1, max_iter + 1):
        gw, gb = logreg_gradient(w, b, mat, y, C)
        gnorm_inf = max(float(np.max(np.abs(gw))) if d else 0.0, abs(gb))
        if gnorm_inf < tol:
            it -= 1
            break
        gsq = float(gw @ gw) + gb * gb
        step = min(step * 2.0, 1e4)
        while True:
            w_new = w - step * gw
            b_new = b - step * gb
            loss_new = logreg_loss(w_new, b_new, mat, y, C)
            if loss_new <= loss - 1e-4 * step * gsq or step < 1e-12:
                break
            step *= 0.5
        if loss_new > loss:
            break  # no descent direction progress left at float precision
        w, b, loss = w_new, b_new, loss_new
    return LogRegModel(w, b, C, n_iter=it)


def top_coefficients(
    model: LogRegModel, names: Sequence[str], n: int = 10
) -> tuple[list[tuple[str, float]], list[tuple[str, float]]]:
    """The n most positive and n most negative weights with their names.

    Positive weights push predictions toward the high-severity class.
    """
    if len(names) != len(model.weights):
        raise ShapeError(f"{len(names)} names for {len(model.weights)} weights")
    order = np.argsort(model.weights, kind="stable")
    n = min(n, len(names))
    top_pos = [(names[j], float(model.weights[j])) for j in order[::-1][:n]]
    top_neg = [(names[j], float(model.weights[j])) for j in order[:n]]
    return top_pos, top_neg


# ---------------------------------------------------------------------------
# Decision tree


@dataclass(frozen=True)
class TreeModel:
    """Flat node array: internal nodes carry a split, leaves carry class counts."""

    nodes: tuple[dict, ...]
    n_features: int
    max_depth: int | None
    min_samples_leaf: int

    def predict_proba(self, X) -> np.ndarray:
        mat = _as_dense(X)
        _check_width(mat, self.n_features)
        out = np.empty(mat.shape[0])
        for i, row in enumerate(mat):
            node = self.nodes[0]
            while "feature" in node:
                node = self.nodes[node["left"] if row[node["feature"]] <= node["threshold"] else node["right"]]
            c0, c1 = node["counts"]
            out[i] = c1 / (c0 + c1)
        return out

    def to_dict(self) -> dict:
        return {
            "nodes": list(self.nodes),
            "n_features": self.n_features,
            "max_depth": self.max_depth,
            "min_samples_leaf": self.min_samples_leaf,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "TreeModel":
        return cls(tuple(d["nodes"]), d["n_features"], d["max_depth"], d["min_samples_leaf"])


def _gini(counts1: np.ndarray, size: np.ndarray) -> np.ndarray:
    p1 = counts1 / size
    p0 = (size - counts1) / size
    return 1.0 - p1 * p1 - p0 * p0


def _best_split(X: np.ndarray, y: np.ndarray, feature_ids: np.ndarray, min_leaf: int):
    """Best (feature, threshold, weighted impurity) over midpoint candidates.

    Candidates are midpoints between consecutive distinct sorted values;
    rows with value <= threshold go left. Lower feature index, then lower
    threshold, wins ties.
    """
    m = len(y)
    best = None
    for j in feature_ids:
        values = X[:, j]
        order = np.argsort(values, kind="stable")
        sv = values[order]
        sy = y[order]
        cut = np.flatnonzero(sv[:-1] < sv[1:])  # split after position i
        if cut.size == 0:
            continue
        left_size = cut + 1
        right_size = m - left_size
        ok = (left_size >= min_leaf) & (right_size >= min_leaf)
        if not np.any(ok):
            continue
        cut = cut[ok]
        left_size = left_size[ok]
        right_size = right_size[ok]
        left_pos = np.cumsum(sy)[cut]
        right_pos = int(np.sum(sy)) - left_pos
        score = (left_size * _gini(left_pos, left_size) + right_size * _gini(right_pos, right_size)) / m
        at = int(np.argmin(score))
        if best is None or score[at] < best[2]:
            threshold = (sv[cut[at]] + sv[cut[at] + 1]) / 2.0
            best = (int(j), float(threshold), float(score[at]))
    return best


def _grow(X, y, depth, nodes, max_depth, min_leaf, rng, mtry):
    counts = (int(np.sum(y == 0)), int(np.sum(y == 1)))
    parent_gini = float(_gini(np.array([counts[1]]), np.array([len(y)]))[0])
    index = len(nodes)
    nodes.append(None)
    depth_ok = max_depth is None or depth < max_depth
    if counts[0] == 0 or counts[1] == 0 or not depth_ok or len(y) < 2 * min_leaf:
        nodes[index] = {"counts": list(counts)}
        return index
    d = X.shape[1]
    if rng is not None and mtry is not None and mtry < d:
        feature_ids = np.sort(rng.choice(d, size=mtry, replace=False))
    else:
        feature_ids = np.arange(d)
    best = _best_split(X, y, feature_ids, min_leaf)
    if best is None or best[2] >= parent_gini:
        nodes[index] = {"counts": list(counts)}
        return index
    j, threshold, _ = best
    mask = X[:, j] <= threshold
    left = _grow(X[mask], y[mask], depth + 1, nodes, max_depth, min_leaf, rng, mtry)
    right = _grow(X[~mask], y[~mask], depth + 1, nodes, max_depth, min_leaf, rng, mtry)
    nodes[index] = {"feature": j, "threshold": threshold, "left": left, "right": right}
    return index


def train_tree(
    X,
    y,
    criterion: str = "gini",
    max_depth: int | None = None,
    min_samples_leaf: int = 1,
    _rng: np.random.Generator | None = None,
    _max_features: int | None = None,
) -> TreeModel:
    """Greedy gini tree over exact midpoint split candidates.

    Growth stops at purity, the depth limit, or the minimum leaf size.
    The underscored arguments are the forest's per-split feature
    subsampling hooks; plain trees ignore them.
    """
    if criterion != "gini":
        raise ConfigError(f"unsupported criterion {criterion!r}")
    mat = _as_dense(X)
    y = np.asarray(y, dtype=np.int64).ravel()
    if mat.shape[0] != len(y):
        raise ShapeError(f"{mat.shape[0]} rows but {len(y)} labels")
    if len(y) < 1:
        raise FitError("cannot fit a tree on an empty dataset")
    nodes: list[dict | None] = []
    _grow(mat, y, 0, nodes, max_depth, min_samples_leaf, _rng, _max_features)
    return TreeModel(tuple(nodes), mat.shape[1], max_depth, min_samples_leaf)


# ---------------------------------------------------------------------------
# Random forest


@dataclass(frozen=True)
class ForestModel:
    trees: tuple[TreeModel, ...]
    tree_seeds: tuple[int, ...]
    features_per_split: str | float

    def predict_proba(self, X) -> np.ndarray:
        per_tree = np.stack([t.predict_proba(X) for t in self.trees])
        return per_tree.mean(axis=0)

    def to_dict(self) -> dict:
        return {
            "trees": [t.to_dict() for t in self.trees],
            "tree_seeds": list(self.tree_seeds),
            "features_per_split": self.features_per_split,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "ForestModel":
        return cls(
            tuple(TreeModel.from_dict(t) for t in d["trees"]),
            tuple(d["tree_seeds"]),
            d["features_per_split"],
        )


def _mtry(features_per_split, d: int) -> int:
    if features_per_split is None:
        return d
    if features_per_split == "sqrt":
        return max(1, int(math.sqrt(d)))
    frac = float(features_per_split)
    if not 0 < frac <= 1:
        raise ConfigError(f"features_per_split fraction must be in (0, 1], got {frac}")
    return max(1, int(round(frac * d)))


def train_forest(
    X,
    y,
    n_trees: int = 100,
    features_per_split: str | float = "sqrt",
    seed: int = 0,
    bootstrap: bool = True,
    max_depth: int | None = None,
    min_samples_leaf: int = 1,
) -> ForestModel:
    """Bootstrap-aggregated gini trees with per-split feature subsampling.

    Every tree draws its own seeded bootstrap sample (n rows with
    replacement) and its own feature-subset stream, so the whole forest
    is reproducible from one seed. ``bootstrap=False`` trains every tree
    on the full sample (test mode).
    """
    if n_trees < 1:
        raise ConfigError(f"n_trees must be >= 1, got {n_trees}")
    mat = _as_dense(X)
    y = np.asarray(y, dtype=np.int64).ravel()
    n, d = mat.shape
    mtry = _mtry(features_per_split, d)
    trees = []
    seeds = []
    for i in range(n_trees):
        tree_seed = substream(seed, f"forest-tree-{i}")
        seeds.append(tree_seed)
        rng = np.random.default_rng(tree_seed)
        idx = rng.integers(0, n, size=n) if bootstrap else np.arange(n)
        trees.append(
            train_tree(
                mat[idx],
                y[idx],
                max_depth=max_depth,
                min_samples_leaf=min_samples_leaf,
                _rng=rng,
                _max_features=mtry if mtry < d else None,
            )
        )
    return ForestModel(tuple(trees), tuple(seeds), features_per_split)


# ---------------------------------------------------------------------------
# K-nearest neighbors


@dataclass(frozen=True)
class KnnModel:
    X_train: np.ndarray
    y_train: np.ndarray
    k: int

    def predict_proba(self, X) -> np.ndarray:
        mat = _as_dense(X)
        _check_width(mat, self.X_train.shape[1])
        n = self.X_train.shape[0]
        out = np.empty(mat.shape[0])
        for i, q in enumerate(mat):
            dists = np.sum((self.X_train - q) ** 2, axis=1)
            order = np.lexsort((np.arange(n), dists))  # distance ties: lower index first
            out[i] = float(np.mean(self.y_train[order[: self.k]]))
        return out

    def to_dict(self) -> dict:
        return {"X_train": self.X_train.tolist(), "y_train": self.y_train.tolist(), "k": self.k}

    @classmethod
    def from_dict(cls, d: Mapping) -> "KnnModel":
        return cls(
            np.asarray(d["X_train"], dtype=np.float64),
            np.asarray(d["y_train"], dtype=np.int64),
            d["k"],
        )


def train_knn(X, y, k: int = 5) -> KnnModel:
    """Memorize the training set for majority voting over the k nearest rows."""
    mat = _as_dense(X)
    y = np.asarray(y, dtype=np.int64).ravel()
    if mat.shape[0] != len(y):
        raise ShapeError(f"{mat.shape[0]} rows but {len(y)} labels")
    if not 1 <= k <= mat.shape[0]:
        raise ConfigError(f"k={k} must be in [1, {mat.shape[0]}]")
    return KnnModel(mat, y, k)


def predict_proba(model, X) -> np.ndarray:
    """Probability of the positive class, per row, for any trained model."""
    return model.predict_proba(X)
