"""Exhaustive k-nearest-neighbour classification with selectable distance."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dataset import LabeledDataset
from .errors import SpeckleLabError, ValidationError

__all__ = [
    "METRICS", "KnnConfig", "EvalResult", "distance", "pairwise_distances", "fit_predict", "predict",
    "evaluate_grid",
]

METRICS = ("euclidean", "manhattan", "chebyshev", "cosine")
N_CLASSES = 3


@dataclass(frozen=True)
class KnnConfig:
    k: int = 3
    metric: str = "euclidean"
    standardize: bool = True

    def __post_init__(self):
        if not isinstance(self.k, (int, np.integer)) or self.k < 1:
            raise ValidationError(f"k must be a positive integer, got {self.k!r}")
        if self.metric not in METRICS:
            raise ValidationError(f"unknown metric {self.metric!r}; choose from {METRICS}")


@dataclass(frozen=True)
class EvalResult:
    accuracy: float
    confusion: np.ndarray  # rows = true class 1..3, cols = predicted
    config: KnnConfig
    split_seed: int | None = None
    swapped: bool = False
    predictions: np.ndarray | None = None
    dropped_features: tuple[int, ...] = ()

    def to_json(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "confusion": self.confusion.tolist(),
            "config": {"k": self.config.k, "metric": self.config.metric, "standardize": self.config.standardize},
            "split_seed": self.split_seed,
            "swapped": self.swapped,
            "dropped_features": list(self.dropped_features),
        }

    @classmethod
    def from_json(cls, d) -> "EvalResult":
        return cls(
            accuracy=d["accuracy"], confusion=np.asarray(d["confusion"], dtype=np.int64),
            config=KnnConfig(**d["config"]), split_seed=d["split_seed"], swapped=d["swapped"],
            dropped_features=tuple(d.get("dropped_features", ())),
        )


def distance(a, b, metric: str = "euclidean") -> float:
    """Distance between two feature rows."""
    return float(pairwise_distances(np.atleast_2d(a), np.atleast_2d(b), metric)[0, 0])


def pairwise_distances(A: np.ndarray, B: np.ndarray, metric: str) -> np.ndarray:
    """Distances from every row of ``A`` to every row of ``B``."""
    A = np.asarray(A, dtype=float)
    B = np.asarray(B, dtype=float)
    diff = A[:, None, :] - B[None, :, :]
    if metric == "euclidean":
        return np.sqrt(np.sum(diff * diff, axis=2))
    if metric == "manhattan":
        return np.sum(np.abs(diff), axis=2)
    if metric == "chebyshev":
        return np.max(np.abs(diff), axis=2) if A.shape[1] else np.zeros(diff.shape[:2])
    if metric == "cosine":
        na = np.sqrt(np.sum(A * A, axis=1))
        nb = np.sqrt(np.sum(B * B, axis=1))
        if np.any(na == 0) or np.any(nb == 0):
            raise SpeckleLabError("cosine distance is undefined for a zero vector")
        return 1.0 - (A @ B.T) / (na[:, None] * nb[None, :])
    raise ValidationError(f"unknown metric {metric!r}")


def _vote(D: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    """Majority vote for every row of the test-by-train distance matrix ``D``.

    All training rows tied with the k-th smallest distance vote.  Vote ties
    go to the class with the smaller summed distance, then the lower label.
    """
    kth = np.partition(D, k - 1, axis=1)[:, k - 1]
    nb = D <= kth[:, None]
    onehot = (labels[:, None] == np.arange(1, N_CLASSES + 1)[None, :]).astype(float)
    counts = nb.astype(float) @ onehot
    sums = np.where(nb, D, 0.0) @ onehot
    tied = counts == counts.max(axis=1, keepdims=True)
    sums = np.where(tied, sums, np.inf)
    return np.argmin(sums, axis=1).astype(np.int64) + 1


def _standardize(train_x, test_x):
    mu = train_x.mean(axis=0)
    sd = train_x.std(axis=0)
    keep = sd > 0
    dropped = tuple(int(i) for i in np.flatnonzero(~keep))
    return (train_x[:, keep] - mu[keep]) / sd[keep], (test_x[:, keep] - mu[keep]) / sd[keep], dropped


def _prepare(train: LabeledDataset, test_x, standardize: bool):
    tr, te = train.features, np.asarray(test_x, dtype=float)
    if standardize:
        return _standardize(tr, te)
    return tr, te, ()


def predict(train: LabeledDataset, test_x: np.ndarray, cfg: KnnConfig):
    """Return ``(predictions, dropped_feature_indices)``."""
    if cfg.k > len(train):
        raise ValidationError(f"k={cfg.k} exceeds the {len(train)} training rows")
    tr, te, dropped = _prepare(train, test_x, cfg.standardize)
    return _vote(pairwise_distances(te, tr, cfg.metric), train.labels, cfg.k), dropped


def _score(test: LabeledDataset, preds, cfg, split_seed, swapped, dropped) -> EvalResult:
    conf = np.zeros((N_CLASSES, N_CLASSES), dtype=np.int64)
    np.add.at(conf, (test.labels - 1, preds - 1), 1)
    acc = float(np.trace(conf) / conf.sum())
    return EvalResult(acc, conf, cfg, split_seed, swapped, preds, dropped)


def _check(train, test):
    if len(test) == 0:
        raise ValidationError("empty test set")
    if train.set_kind != test.set_kind:
        raise ValidationError(f"set_kind mismatch: train {train.set_kind}, test {test.set_kind}")


def fit_predict(train: LabeledDataset, test: LabeledDataset, cfg: KnnConfig,
                split_seed=None, swapped: bool = False) -> EvalResult:
    """Classify every test row against the training rows and score it."""
    _check(train, test)
    preds, dropped = predict(train, test.features, cfg)
    return _score(test, preds, cfg, split_seed, swapped, dropped)


def evaluate_grid(train: LabeledDataset, test: LabeledDataset, ks, metrics, standardize: bool = True,
                  split_seed=None, swapped: bool = False) -> dict:
    """``fit_predict`` for every (k, metric) pair, sharing the distance
    matrix across k.  Returns ``{(k, metric): EvalResult}``."""
    _check(train, test)
    if max(ks) > len(train):
        raise ValidationError(f"k={max(ks)} exceeds the {len(train)} training rows")
    tr, te, dropped = _prepare(train, test.features, standardize)
    out = {}
    for metric in metrics:
        D = pairwise_distances(te, tr, metric)
        for k in ks:
            cfg = KnnConfig(k, metric, standardize)
            out[(k, metric)] = _score(test, _vote(D, train.labels, k), cfg, split_seed, swapped, dropped)
    return out
