"""kNN, linear discriminant analysis and random forest, written against numpy.

All three share :class:`StandardizationParams` and a :class:`TrainedClassifier`
wrapper that records the class catalogue and the selected feature columns.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ConstantFeatureError, InvalidArgumentError, NotFittedError, NumericError


@dataclass(frozen=True, eq=False)
class StandardizationParams:
    mean: np.ndarray
    std: np.ndarray

    def to_dict(self) -> dict:
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> "StandardizationParams":
        return cls(np.asarray(d["mean"], dtype=float), np.asarray(d["std"], dtype=float))


def standardize_fit(train) -> StandardizationParams:
    x = np.asarray(train, dtype=float)
    if x.ndim != 2 or x.shape[0] == 0:
        raise InvalidArgumentError("training matrix must be non-empty and 2-D")
    std = x.std(axis=0, ddof=1) if x.shape[0] > 1 else np.zeros(x.shape[1])
    bad = np.flatnonzero(~(std > 0))
    if bad.size:
        raise ConstantFeatureError(f"zero-variance feature columns {bad.tolist()}")
    return StandardizationParams(x.mean(axis=0), std)


def informative_columns(train) -> list[int]:
    """Columns whose training values are not all equal."""
    x = np.asarray(train, dtype=float)
    return [int(i) for i in np.flatnonzero(np.ptp(x, axis=0) > 0)]


def standardize_apply(params: StandardizationParams, matrix) -> np.ndarray:
    x = np.asarray(matrix, dtype=float)
    if x.shape[-1] != params.mean.size:
        raise InvalidArgumentError("column count differs from the fitted parameters")
    return (x - params.mean) / params.std


def _check_training(x, labels):
    x = np.asarray(x, dtype=float)
    y = np.asarray(labels)
    if x.ndim != 2 or x.shape[0] == 0:
        raise InvalidArgumentError("empty training matrix")
    if y.shape != (x.shape[0],):
        raise InvalidArgumentError("one label per training row required")
    if not np.all(np.isfinite(x)):
        raise InvalidArgumentError("non-finite training values")
    classes, codes = np.unique(y, return_inverse=True)
    return x, classes, codes


def _argmax_lowest(scores: np.ndarray) -> np.ndarray:
    # np.argmax already returns the first maximum, i.e. the smallest class code
    return np.argmax(scores, axis=1)


# kNN ------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class KnnModel:
    rows: np.ndarray
    codes: np.ndarray
    n_classes: int
    k: int = 5

    def predict_codes(self, queries: np.ndarray) -> np.ndarray:
        q = np.atleast_2d(queries)
        d2 = (np.sum(q ** 2, axis=1)[:, None] - 2 * q @ self.rows.T
              + np.sum(self.rows ** 2, axis=1)[None, :])
        nearest = np.argsort(d2, axis=1, kind="stable")[:, :self.k]
        votes = np.zeros((q.shape[0], self.n_classes))
        np.add.at(votes, (np.repeat(np.arange(q.shape[0]), self.k), self.codes[nearest].ravel()), 1)
        return _argmax_lowest(votes)


def knn_fit(x, codes, n_classes: int, k: int = 5) -> KnnModel:
    if not 1 <= k <= len(codes):
        raise InvalidArgumentError(f"k={k} must lie in [1, {len(codes)}]")
    return KnnModel(np.asarray(x, dtype=float), np.asarray(codes), n_classes, k)


# Linear discriminant ----------------------------------------------------------

@dataclass(frozen=True, eq=False)
class LdaModel:
    means: np.ndarray        # C x p
    covariance: np.ndarray   # pooled p x p
    priors: np.ndarray
    coef: np.ndarray         # C x p, Sigma^-1 mu_c
    intercept: np.ndarray    # C

    def scores(self, queries: np.ndarray) -> np.ndarray:
        return np.atleast_2d(queries) @ self.coef.T + self.intercept

    def predict_codes(self, queries: np.ndarray) -> np.ndarray:
        return _argmax_lowest(self.scores(queries))


def lda_fit(x, codes, n_classes: int, ridge: float = 1e-6) -> LdaModel:
    x = np.asarray(x, dtype=float)
    codes = np.asarray(codes)
    counts = np.bincount(codes, minlength=n_classes)
    if counts.min() < 2:
        raise InvalidArgumentError("discriminant analysis needs at least 2 rows per class")
    means = np.stack([x[codes == c].mean(axis=0) for c in range(n_classes)])
    centred = x - means[codes]
    cov = centred.T @ centred / (x.shape[0] - n_classes)
    priors = counts / counts.sum()
    try:
        chol = np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        cov = cov + ridge * max(np.trace(cov) / cov.shape[0], 1.0) * np.eye(cov.shape[0])
        try:
            chol = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise NumericError("pooled covariance is singular even after ridge") from exc
    inv_means = np.linalg.solve(chol.T, np.linalg.solve(chol, means.T)).T
    intercept = -0.5 * np.sum(means * inv_means, axis=1) + np.log(priors)
    return LdaModel(means, cov, priors, inv_means, intercept)


# Random forest ----------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DecisionTree:
    """Flat arrays; ``leaf_class >= 0`` marks a leaf."""

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_class: np.ndarray

    def predict_codes(self, queries: np.ndarray) -> np.ndarray:
        q = np.atleast_2d(queries)
        node = np.zeros(q.shape[0], dtype=np.intp)
        rows = np.arange(q.shape[0])
        while True:
            internal = self.leaf_class[node] < 0
            if not internal.any():
                return self.leaf_class[node]
            i = rows[internal]
            n = node[internal]
            go_left = q[i, self.feature[n]] <= self.threshold[n]
            node[internal] = np.where(go_left, self.left[n], self.right[n])

    def to_dict(self, node: int = 0) -> dict:
        if self.leaf_class[node] >= 0:
            return {"leaf_class": int(self.leaf_class[node])}
        return {"feature": int(self.feature[node]), "threshold": float(self.threshold[node]),
                "left": self.to_dict(int(self.left[node])),
                "right": self.to_dict(int(self.right[node]))}

    @classmethod
    def from_dict(cls, d: dict) -> "DecisionTree":
        feature, threshold, left, right, leaf = [], [], [], [], []

        def add(rec) -> int:
            idx = len(feature)
            feature.append(-1), threshold.append(0.0), left.append(-1), right.append(-1)
            leaf.append(-1)
            if "leaf_class" in rec and rec.get("leaf_class") is not None:
                leaf[idx] = int(rec["leaf_class"])
            else:
                feature[idx] = int(rec["feature"])
                threshold[idx] = float(rec["threshold"])
                left[idx] = add(rec["left"])
                right[idx] = add(rec["right"])
            return idx

        add(d)
        return cls(np.array(feature), np.array(threshold), np.array(left), np.array(right),
                   np.array(leaf))


def _best_split(x: np.ndarray, onehot: np.ndarray, features: Sequence[int], min_leaf: int):
    """Lowest weighted Gini over candidate features; returns (feature, threshold) or None."""
    n = x.shape[0]
    best = (math.inf, None, None)
    sizes = np.arange(1, n)
    for f in features:
        order = np.argsort(x[:, f], kind="stable")
        v = x[order, f]
        left = np.cumsum(onehot[order], axis=0)[:-1]
        right = left[-1] + onehot[order[-1]] - left
        nl, nr = sizes, n - sizes
        impurity = (nl - np.sum(left ** 2, axis=1) / nl) + (nr - np.sum(right ** 2, axis=1) / nr)
        valid = (v[1:] > v[:-1]) & (nl >= min_leaf) & (nr >= min_leaf)
        if not valid.any():
            continue
        impurity = np.where(valid, impurity, np.inf)
        i = int(np.argmin(impurity))
        if impurity[i] < best[0] - 1e-12:
            best = (impurity[i], f, 0.5 * (v[i] + v[i + 1]))
    return None if best[1] is None else (best[1], best[2])


def _grow_tree(x, codes, n_classes, rng, max_features, max_depth, min_leaf) -> DecisionTree:
    feature, threshold, left, right, leaf = [], [], [], [], []
    onehot = np.eye(n_classes)[codes]
    p = x.shape[1]

    def new_node():
        for arr, v in ((feature, -1), (threshold, 0.0), (left, -1), (right, -1), (leaf, -1)):
            arr.append(v)
        return len(feature) - 1

    stack = [(new_node(), np.arange(x.shape[0]), 0)]
    while stack:
        node, idx, depth = stack.pop()
        counts = onehot[idx].sum(axis=0)
        majority = int(np.argmax(counts))
        if (np.count_nonzero(counts) == 1 or idx.size < 2 * min_leaf
                or (max_depth is not None and depth >= max_depth)):
            leaf[node] = majority
            continue
        order = rng.permutation(p)
        split = _best_split(x[idx], onehot[idx], order[:max_features], min_leaf)
        if split is None and max_features < p:
            split = _best_split(x[idx], onehot[idx], order[max_features:], min_leaf)
        if split is None:
            leaf[node] = majority
            continue
        f, thr = split
        go_left = x[idx, f] <= thr
        feature[node], threshold[node] = f, thr
        l_node, r_node = new_node(), new_node()
        left[node], right[node] = l_node, r_node
        stack.append((r_node, idx[~go_left], depth + 1))
        stack.append((l_node, idx[go_left], depth + 1))
    return DecisionTree(np.array(feature), np.array(threshold), np.array(left),
                        np.array(right), np.array(leaf))


@dataclass(frozen=True, eq=False)
class ForestModel:
    trees: tuple[DecisionTree, ...]
    n_classes: int

    def predict_codes(self, queries: np.ndarray) -> np.ndarray:
        q = np.atleast_2d(queries)
        votes = np.zeros((q.shape[0], self.n_classes))
        rows = np.arange(q.shape[0])
        for t in self.trees:
            votes[rows, t.predict_codes(q)] += 1
        return _argmax_lowest(votes)


def randf_fit(x, codes, n_classes: int, n_trees: int = 100, max_depth: Optional[int] = None,
              min_leaf: int = 1, features_per_split: Optional[int] = None,
              seed: int = 0) -> ForestModel:
    x = np.asarray(x, dtype=float)
    codes = np.asarray(codes)
    n, p = x.shape
    if n < 2:
        raise InvalidArgumentError("random forest needs at least 2 training rows")
    if n_trees < 1 or min_leaf < 1:
        raise InvalidArgumentError("n_trees and min_leaf must be positive")
    m = features_per_split or int(math.ceil(math.sqrt(p)))
    if not 1 <= m <= p:
        raise InvalidArgumentError(f"features_per_split must lie in [1, {p}]")
    trees = []
    for child in np.random.SeedSequence(seed).spawn(n_trees):
        rng = np.random.default_rng(child)
        boot = rng.integers(0, n, n)
        trees.append(_grow_tree(x[boot], codes[boot], n_classes, rng, m, max_depth, min_leaf))
    return ForestModel(tuple(trees), n_classes)


# Shared wrapper -------------------------------------------------------------

KINDS = ("knn", "da", "randf")


@dataclass(frozen=True)
class ClassifierConfig:
    k: int = 5
    ridge: float = 1e-6
    n_trees: int = 100
    max_depth: Optional[int] = None
    min_leaf: int = 1
    features_per_split: Optional[int] = None
    seed: int = 0


@dataclass(frozen=True, eq=False)
class TrainedClassifier:
    kind: str
    classes: tuple
    selected: tuple[int, ...]
    scaler: StandardizationParams
    model: object = field(repr=False)

    def predict(self, matrix) -> list:
        """Labels for raw (unstandardized, all-column) feature rows."""
        x = np.atleast_2d(np.asarray(matrix, dtype=float))
        z = standardize_apply(self.scaler, x[:, list(self.selected)])
        return [self.classes[c] for c in self.model.predict_codes(z)]

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "classes": list(self.classes), "selected": list(self.selected),
             "scaler": self.scaler.to_dict()}
        m = self.model
        if self.kind == "knn":
            d["params"] = {"k": m.k, "rows": m.rows.tolist(), "codes": m.codes.tolist()}
        elif self.kind == "da":
            d["params"] = {"means": m.means.tolist(), "covariance": m.covariance.tolist(),
                           "priors": m.priors.tolist(), "coef": m.coef.tolist(),
                           "intercept": m.intercept.tolist()}
        else:
            d["params"] = {"trees": [t.to_dict() for t in m.trees]}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainedClassifier":
        kind, p = d["kind"], d["params"]
        classes = tuple(d["classes"])
        if kind == "knn":
            model = KnnModel(np.asarray(p["rows"], dtype=float), np.asarray(p["codes"], dtype=int),
                             len(classes), int(p["k"]))
        elif kind == "da":
            model = LdaModel(*(np.asarray(p[key], dtype=float) for key in
                               ("means", "covariance", "priors", "coef", "intercept")))
        elif kind == "randf":
            model = ForestModel(tuple(DecisionTree.from_dict(t) for t in p["trees"]), len(classes))
        else:
            raise InvalidArgumentError(f"unknown classifier kind {kind!r}")
        return cls(kind, classes, tuple(d["selected"]),
                   StandardizationParams.from_dict(d["scaler"]), model)


def fit_classifier(kind: str, matrix, labels, selected: Optional[Sequence[int]] = None,
                   config: ClassifierConfig = ClassifierConfig()) -> TrainedClassifier:
    """Standardize the selected columns on the training rows, then fit ``kind``."""
    if kind not in KINDS:
        raise InvalidArgumentError(f"classifier kind must be one of {KINDS}")
    x, classes, codes = _check_training(matrix, labels)
    sel = tuple(range(x.shape[1])) if selected is None else tuple(int(i) for i in selected)
    if not sel or min(sel) < 0 or max(sel) >= x.shape[1]:
        raise InvalidArgumentError("selected columns out of range")
    scaler = standardize_fit(x[:, list(sel)])
    z = standardize_apply(scaler, x[:, list(sel)])
    c = classes.size
    if kind == "knn":
        model = knn_fit(z, codes, c, config.k)
    elif kind == "da":
        model = lda_fit(z, codes, c, config.ridge)
    else:
        model = randf_fit(z, codes, c, config.n_trees, config.max_depth, config.min_leaf,
                          config.features_per_split, config.seed)
    return TrainedClassifier(kind, tuple(classes.tolist()), sel, scaler, model)


class UnfittedClassifier:
    """Placeholder that raises on use, for bundles trained without a classifier."""

    def predict(self, matrix):
        raise NotFittedError("classifier has not been fitted")
