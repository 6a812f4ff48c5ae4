from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import List, Optional, Sequence

import numpy as np

from ..errors import ConfigError, EmptyGrid, TooFewSamples
from ..features import LabeledDataset
from ..session import LABELS
from .forest import train_forest
from .gbm import train_gbm
from .svm import train_svm

KINDS = ("forest", "svm", "gbm")


def default_grid(kind: str) -> List[dict]:
    if kind == "forest":
        return [
            {"n_trees": n, "max_depth": d}
            for n, d in itertools.product((50, 100, 200), (None, 4, 8))
        ]
    if kind == "svm":
        kernels = [{"kernel": "linear"}] + [{"kernel": "rbf", "gamma": g} for g in (0.01, 0.1, 1.0)]
        return [{"C": c, **k} for c, k in itertools.product((0.1, 1.0, 10.0, 100.0), kernels)]
    if kind == "gbm":
        return [
            {"n_rounds": r, "learning_rate": lr, "max_depth": d}
            for r, lr, d in itertools.product((50, 100), (0.05, 0.1, 0.3), (2, 3))
        ]
    raise ConfigError(f"unknown classifier kind {kind!r}; expected one of {KINDS}")


def train_model(kind: str, train: LabeledDataset, params: Optional[dict] = None, seed: int = 0):
    params = dict(params or {})
    if kind == "forest":
        return train_forest(train, params, seed)
    if kind == "svm":
        allowed = {"C", "kernel", "gamma", "tol", "max_passes"}
        if set(params) - allowed:
            raise ConfigError(f"unknown svm parameters {sorted(set(params) - allowed)}")
        return train_svm(train, **params)
    if kind == "gbm":
        allowed = {"n_rounds", "learning_rate", "max_depth"}
        if set(params) - allowed:
            raise ConfigError(f"unknown gbm parameters {sorted(set(params) - allowed)}")
        return train_gbm(train, **params)
    raise ConfigError(f"unknown classifier kind {kind!r}; expected one of {KINDS}")


@dataclass
class CvResult:
    kind: str
    grid: List[dict]
    mean_accuracy: List[float]
    fold_accuracy: List[List[float]]
    chosen: int
    k_folds: int
    seed: int

    @property
    def best_params(self) -> dict:
        return dict(self.grid[self.chosen])


def stratified_folds(train: LabeledDataset, k_folds: int, seed: int) -> np.ndarray:
    """Fold id per row: each class is shuffled with its own seeded stream and
    dealt round-robin into the folds."""
    folds = np.empty(len(train), dtype=np.int64)
    labels = np.array([lab.value for lab in train.labels])
    for c, lab in enumerate(LABELS):
        idx = np.flatnonzero(labels == lab.value)
        perm = np.random.default_rng([int(seed), c]).permutation(idx)
        folds[perm] = np.arange(len(perm)) % k_folds
    return folds


def resolve_folds(train: LabeledDataset, k_folds: Optional[int]) -> int:
    smallest = min(train.class_counts().values())
    if smallest < 2:
        raise TooFewSamples(f"every class needs >= 2 rows for cross-validation, smallest has {smallest}")
    if k_folds is None:
        return min(5, smallest)
    if k_folds < 2:
        raise ConfigError(f"k_folds must be >= 2, got {k_folds}")
    return min(int(k_folds), smallest)


def grid_search_cv(
    train: LabeledDataset,
    kind: str,
    grid: Optional[Sequence[dict]] = None,
    k_folds: Optional[int] = None,
    seed: int = 0,
) -> CvResult:
    """Stratified k-fold accuracy for every grid point. The chosen point has
    the highest mean accuracy, earliest grid index on ties. ``k_folds``
    defaults to min(5, smallest class) and is capped at the smallest class."""
    grid = default_grid(kind) if grid is None else [dict(g) for g in grid]
    if not grid:
        raise EmptyGrid("grid has no points")
    k = resolve_folds(train, k_folds)
    folds = stratified_folds(train, k, seed)
    labels = train.labels
    means, per_fold = [], []
    for params in grid:
        accs = []
        for f in range(k):
            tr = train.subset(np.flatnonzero(folds != f))
            te = np.flatnonzero(folds == f)
            model = train_model(kind, tr, params, seed)
            hits = sum(model.predict_row(train.X[i])[0] is labels[i] for i in te)
            accs.append(hits / len(te))
        per_fold.append(accs)
        means.append(float(np.mean(accs)))
    best = max(means)
    chosen = next(i for i, m in enumerate(means) if m == best)
    return CvResult(kind, grid, means, per_fold, chosen, k, int(seed))
