"""Binary decision trees on numeric features.

Rows go left when ``x[feature] <= threshold``. Candidate thresholds are the
midpoints between consecutive distinct values of a feature inside the node.
Among equally good splits the lowest feature index wins, then the lowest
threshold.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np

from ..session import Label

_TIE = 1e-12


@dataclass
class TreeNode:
    feature: int = -1
    threshold: float = 0.0
    left: Optional["TreeNode"] = None
    right: Optional["TreeNode"] = None
    # leaf payload
    counts: tuple = (0, 0)  # (CNN, RNN), bootstrap-weighted
    prediction: Optional[Label] = None
    value: float = 0.0  # boosting leaves

    @property
    def is_leaf(self) -> bool:
        return self.left is None

    def leaf_for(self, x) -> "TreeNode":
        node = self
        while node.left is not None:
            node = node.left if x[node.feature] <= node.threshold else node.right
        return node

    def depth(self) -> int:
        if self.is_leaf:
            return 0
        return 1 + max(self.left.depth(), self.right.depth())

    def to_dict(self) -> dict:
        if self.is_leaf:
            return {
                "counts": [int(c) for c in self.counts],
                "prediction": None if self.prediction is None else self.prediction.value,
                "value": float(self.value),
            }
        return {
            "feature": int(self.feature),
            "threshold": float(self.threshold),
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "TreeNode":
        if "feature" in d:
            return cls(
                feature=int(d["feature"]),
                threshold=float(d["threshold"]),
                left=cls.from_dict(d["left"]),
                right=cls.from_dict(d["right"]),
            )
        pred = d.get("prediction")
        return cls(
            counts=tuple(int(c) for c in d["counts"]),
            prediction=None if pred is None else Label(pred),
            value=float(d["value"]),
        )


def _midpoints(xs: np.ndarray, i: np.ndarray) -> np.ndarray:
    a, b = xs[i], xs[i + 1]
    with np.errstate(over="ignore"):
        total = a + b
    # (a + b) / 2 is the correctly rounded midpoint unless the sum overflows
    mid = np.where(np.isfinite(total), total / 2, a + (b - a) / 2)
    # adjacent floats: keep the lower value so the partition is unchanged
    return np.where(mid >= b, a, mid)


def _best_split(X: np.ndarray, features: Sequence[int], score_fn: Callable):
    """Return (feature, threshold, score) maximizing ``score_fn`` or None.

    ``score_fn(order, boundary_idx)`` gives the split quality (higher is
    better) for every boundary of the sorted column.
    """
    best = None
    for f in sorted(features):
        x = X[:, f]
        order = np.argsort(x, kind="stable")
        xs = x[order]
        cut = np.flatnonzero(xs[:-1] < xs[1:])
        if cut.size == 0:
            continue
        score = score_fn(order, cut)
        top = score.max()
        if best is None or top > best[2] + _TIE:
            j = int(np.flatnonzero(score >= top - _TIE)[0])
            best = (f, float(_midpoints(xs, cut[j : j + 1])[0]), float(score[j]))
    return best


def gini_split(X: np.ndarray, pos: np.ndarray, features: Sequence[int]):
    """Best split by weighted Gini impurity; ``pos`` is 1 for CNN rows.

    Maximizes sum over children of (p^2 + q^2) / n, which is equivalent to
    minimizing the size-weighted Gini impurity.
    """
    n = len(pos)
    total = pos.sum()

    def score(order, cut):
        cp = np.cumsum(pos[order])
        nl = cut + 1.0
        pl = cp[cut].astype(np.float64)
        nr = n - nl
        pr = total - pl
        return (pl**2 + (nl - pl) ** 2) / nl + (pr**2 + (nr - pr) ** 2) / nr

    return _best_split(X, features, score)


def gini(pos_count: float, n: float) -> float:
    if n == 0:
        return 0.0
    p = pos_count / n
    return 1.0 - p * p - (1 - p) * (1 - p)


def sse_split(X: np.ndarray, r: np.ndarray, features: Sequence[int]):
    """Best split by squared error of ``r`` (maximizes sum_l^2/n_l + sum_r^2/n_r)."""
    n = len(r)
    total = r.sum()

    def score(order, cut):
        cs = np.cumsum(r[order])
        nl = cut + 1.0
        sl = cs[cut]
        return sl**2 / nl + (total - sl) ** 2 / (n - nl)

    return _best_split(X, features, score)


def majority(counts, tie_order: Sequence[Label]) -> Label:
    """Majority label from (CNN, RNN) counts; ties resolved by ``tie_order``."""
    c = {Label.CNN: counts[0], Label.RNN: counts[1]}
    if c[Label.CNN] != c[Label.RNN]:
        return Label.CNN if c[Label.CNN] > c[Label.RNN] else Label.RNN
    return tie_order[0]


def grow_classifier(
    X: np.ndarray,
    pos: np.ndarray,
    *,
    max_depth: Optional[int],
    min_samples_split: int,
    feature_sampler: Callable[[int], Sequence[int]],
    tie_order: Sequence[Label],
    depth: int = 0,
) -> TreeNode:
    n = len(pos)
    n_pos = int(pos.sum())
    counts = (n_pos, n - n_pos)
    stop = (
        n_pos in (0, n)
        or (max_depth is not None and depth >= max_depth)
        or n < min_samples_split
    )
    split = None if stop else gini_split(X, pos, feature_sampler(X.shape[1]))
    if split is None:
        return TreeNode(counts=counts, prediction=majority(counts, tie_order))
    f, thr, _ = split
    go_left = X[:, f] <= thr
    kw = dict(
        max_depth=max_depth,
        min_samples_split=min_samples_split,
        feature_sampler=feature_sampler,
        tie_order=tie_order,
        depth=depth + 1,
    )
    return TreeNode(
        feature=f,
        threshold=thr,
        left=grow_classifier(X[go_left], pos[go_left], **kw),
        right=grow_classifier(X[~go_left], pos[~go_left], **kw),
        counts=counts,
    )


def grow_regressor(
    X: np.ndarray,
    r: np.ndarray,
    h: np.ndarray,
    *,
    max_depth: int,
    min_samples_split: int = 2,
    depth: int = 0,
) -> TreeNode:
    """Squared-error regression tree with Newton leaf values sum(r)/sum(h)."""
    n = len(r)
    split = None
    if depth < max_depth and n >= min_samples_split:
        split = sse_split(X, r, range(X.shape[1]))
        if split is not None:
            parent = r.sum() ** 2 / n
            if split[2] - parent <= _TIE * max(1.0, abs(parent)):
                split = None
    if split is None:
        return TreeNode(counts=(n, 0), value=float(r.sum() / max(h.sum(), 1e-12)))
    f, thr, _ = split
    go_left = X[:, f] <= thr
    return TreeNode(
        feature=f,
        threshold=thr,
        left=grow_regressor(X[go_left], r[go_left], h[go_left], max_depth=max_depth,
                            min_samples_split=min_samples_split, depth=depth + 1),
        right=grow_regressor(X[~go_left], r[~go_left], h[~go_left], max_depth=max_depth,
                             min_samples_split=min_samples_split, depth=depth + 1),
    )


def predict_values(tree: TreeNode, X: np.ndarray) -> np.ndarray:
    return np.array([tree.leaf_for(x).value for x in X], dtype=np.float64)
