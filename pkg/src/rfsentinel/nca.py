"""Neighbourhood component analysis with one weight per feature.

Distances are weighted L1, ``d_ij = sum_r w_r^2 |x_ir - x_jr|``, and neighbour
probabilities use the kernel ``exp(-d / kernel_width)``. The weights maximise
the expected leave-one-out accuracy minus ``lambda * sum(w^2)``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import InvalidArgumentError

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class FeatureDataset:
    matrix: np.ndarray
    labels: np.ndarray
    feature_names: tuple[str, ...] = ()
    standardized: bool = False

    def __post_init__(self):
        x = np.asarray(self.matrix, dtype=float)
        y = np.asarray(self.labels)
        if x.ndim != 2 or y.ndim != 1 or x.shape[0] != y.size:
            raise InvalidArgumentError("matrix must be n x p with one label per row")
        if not np.all(np.isfinite(x)):
            raise InvalidArgumentError("feature matrix has non-finite entries")
        classes, counts = np.unique(y, return_counts=True)
        if classes.size < 2:
            raise InvalidArgumentError("need at least 2 classes")
        if counts.min() < 2:
            raise InvalidArgumentError("every class needs at least 2 rows")
        names = tuple(self.feature_names) or tuple(f"f{i}" for i in range(x.shape[1]))
        if len(names) != x.shape[1]:
            raise InvalidArgumentError("feature_names length must match the column count")
        object.__setattr__(self, "matrix", x)
        object.__setattr__(self, "labels", y)
        object.__setattr__(self, "feature_names", names)

    @property
    def n_features(self) -> int:
        return self.matrix.shape[1]


@dataclass(frozen=True)
class NcaConfig:
    lam: Optional[float] = None     # None -> 1 / n_rows
    kernel_width: float = 1.0
    learning_rate: float = 0.1
    max_iters: int = 100
    grad_tolerance: float = 1e-4

    def __post_init__(self):
        if self.lam is not None and self.lam < 0:
            raise InvalidArgumentError("lambda must be nonnegative")
        if not self.kernel_width > 0:
            raise InvalidArgumentError("kernel_width must be positive")
        if not self.learning_rate > 0 or self.max_iters < 1:
            raise InvalidArgumentError("learning_rate and max_iters must be positive")

    def lam_for(self, n_rows: int) -> float:
        return 1.0 / n_rows if self.lam is None else self.lam


@dataclass(frozen=True, eq=False)
class FeatureWeights:
    w: np.ndarray
    objective_trace: tuple[float, ...] = ()
    lam: float = 0.0
    kernel_width: float = 1.0
    iterations: int = 0
    converged: bool = True
    selected_indices: tuple[int, ...] = field(default=())

    def ranking(self) -> list[int]:
        return select_top_k(self.w, self.w.size)

    def with_selection(self, k: int) -> "FeatureWeights":
        return FeatureWeights(self.w, self.objective_trace, self.lam, self.kernel_width,
                              self.iterations, self.converged, tuple(select_top_k(self.w, k)))

    def to_dict(self) -> dict:
        return {"weights": self.w.tolist(), "lambda": self.lam,
                "kernel_width": self.kernel_width, "iterations": self.iterations,
                "converged": self.converged, "selected_indices": list(self.selected_indices)}

    @classmethod
    def from_dict(cls, d: dict) -> "FeatureWeights":
        return cls(np.asarray(d["weights"], dtype=float), (), float(d["lambda"]),
                   float(d["kernel_width"]), int(d["iterations"]), bool(d.get("converged", True)),
                   tuple(int(i) for i in d["selected_indices"]))


def _check(w, dataset: FeatureDataset) -> np.ndarray:
    if not dataset.standardized:
        raise InvalidArgumentError("NCA expects a standardized dataset")
    w = np.asarray(w, dtype=float)
    if w.shape != (dataset.n_features,):
        raise InvalidArgumentError(f"w must have length {dataset.n_features}")
    return w


def _abs_differences(x: np.ndarray) -> np.ndarray:
    """Per-feature |x_ir - x_jr| as a (p, n, n) array."""
    return np.abs(x.T[:, :, None] - x.T[:, None, :])


def _neighbour_probs(w: np.ndarray, diffs: np.ndarray, width: float) -> np.ndarray:
    d = np.tensordot(w ** 2, diffs, axes=1)
    a = -d / width
    np.fill_diagonal(a, -np.inf)
    a -= a.max(axis=1, keepdims=True)  # row-wise shift keeps exp in range
    k = np.exp(a)
    return k / k.sum(axis=1, keepdims=True)


def _same_class(labels: np.ndarray) -> np.ndarray:
    return (labels[:, None] == labels[None, :]).astype(float)


def nca_objective(w, dataset: FeatureDataset, config: NcaConfig = NcaConfig()) -> float:
    w = _check(w, dataset)
    x, y = dataset.matrix, dataset.labels
    p = _neighbour_probs(w, _abs_differences(x), config.kernel_width)
    hit = np.sum(p * _same_class(y), axis=1)
    return float(hit.mean() - config.lam_for(x.shape[0]) * np.sum(w ** 2))


def _objective_and_gradient(w, diffs, same, width, lam) -> tuple[float, np.ndarray]:
    p = _neighbour_probs(w, diffs, width)
    py = p * same
    hit = py.sum(axis=1)
    # sum_j p_ij |dx_ijr| and its same-class part, for every (r, i)
    expected = np.einsum("rij,ij->ri", diffs, p)
    expected_same = np.einsum("rij,ij->ri", diffs, py)
    grad = 2 * w / width * np.mean(hit * expected - expected_same, axis=1) - 2 * lam * w
    return float(hit.mean() - lam * np.sum(w ** 2)), grad


def nca_gradient(w, dataset: FeatureDataset, config: NcaConfig = NcaConfig()) -> np.ndarray:
    w = _check(w, dataset)
    return _objective_and_gradient(w, _abs_differences(dataset.matrix), _same_class(dataset.labels),
                                   config.kernel_width, config.lam_for(dataset.matrix.shape[0]))[1]


def fit_weights(dataset: FeatureDataset, config: NcaConfig = NcaConfig(),
                top_k: Optional[int] = None) -> FeatureWeights:
    """Gradient ascent from all-ones with step halving on failure and growth on success."""
    w = _check(np.ones(dataset.n_features), dataset)
    diffs, same = _abs_differences(dataset.matrix), _same_class(dataset.labels)
    lam = config.lam_for(dataset.matrix.shape[0])
    f, g = _objective_and_gradient(w, diffs, same, config.kernel_width, lam)
    trace = [f]
    step = config.learning_rate
    converged = False
    it = 0
    for it in range(1, config.max_iters + 1):
        if np.max(np.abs(g)) < config.grad_tolerance:
            converged = True
            break
        cand = w + step * g
        f_new, g_new = _objective_and_gradient(cand, diffs, same, config.kernel_width, lam)
        if f_new >= f:
            w, f, g = cand, f_new, g_new
            trace.append(f)
            step *= 1.5
        else:
            step /= 2
            if step < 1e-12:
                converged = True
                break
    if not converged:
        log.info("NCA stopped at max_iters=%d with |grad|=%.3g", config.max_iters,
                    np.max(np.abs(g)))
    # weights enter only squared; report magnitudes
    weights = FeatureWeights(np.abs(w), tuple(trace), lam, config.kernel_width, it, converged)
    return weights.with_selection(top_k) if top_k is not None else weights


def select_top_k(weights, k: int) -> list[int]:
    """Indices of the ``k`` largest weights, ties to the lower index."""
    w = np.asarray(getattr(weights, "w", weights), dtype=float)
    if not 1 <= k <= w.size:
        raise InvalidArgumentError(f"k must lie in [1, {w.size}]")
    order = np.lexsort((np.arange(w.size), -w))
    return [int(i) for i in order[:k]]


def nca_dataset(matrix, labels, feature_names: Sequence[str] = ()) -> FeatureDataset:
    """Standardize ``matrix`` column-wise and wrap it for NCA."""
    from .classifiers import standardize_apply, standardize_fit

    params = standardize_fit(matrix)
    return FeatureDataset(standardize_apply(params, matrix), np.asarray(labels),
                          tuple(feature_names), standardized=True)
