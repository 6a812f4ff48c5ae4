from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

from ..errors import ConfigError
from ..features import LabeledDataset
from ..session import Label
from .tree import TreeNode, grow_classifier, majority

DEFAULT_PARAMS = dict(n_trees=100, max_depth=None, min_samples_split=2, m_try=None, bootstrap=True)


@dataclass
class ForestModel:
    trees: List[TreeNode]
    params: dict
    seed: int
    names: Tuple[str, ...]
    class_counts: Tuple[int, int]  # training rows (CNN, RNN), for vote ties
    kind = "forest"

    @property
    def tie_order(self) -> Tuple[Label, Label]:
        cnn, rnn = self.class_counts
        return (Label.RNN, Label.CNN) if rnn > cnn else (Label.CNN, Label.RNN)

    def predict_row(self, x) -> Tuple[Label, float]:
        votes = [0, 0]
        for t in self.trees:
            votes[0 if t.leaf_for(x).prediction is Label.CNN else 1] += 1
        label = majority(votes, self.tie_order)
        share = votes[0 if label is Label.CNN else 1] / len(self.trees)
        return label, share

    def payload(self) -> dict:
        return {"trees": [t.to_dict() for t in self.trees], "class_counts": [int(c) for c in self.class_counts]}

    @classmethod
    def from_payload(cls, payload, params, seed, names):
        return cls(
            [TreeNode.from_dict(t) for t in payload["trees"]],
            dict(params),
            seed,
            tuple(names),
            tuple(payload["class_counts"]),
        )


def resolve_params(params: Optional[dict], n_features: int) -> dict:
    p = dict(DEFAULT_PARAMS)
    p.update(params or {})
    unknown = set(p) - set(DEFAULT_PARAMS)
    if unknown:
        raise ConfigError(f"unknown forest parameters {sorted(unknown)}")
    if p["m_try"] is None:
        p["m_try"] = math.ceil(math.sqrt(n_features))
    p["m_try"] = max(1, min(int(p["m_try"]), n_features))
    p["n_trees"] = int(p["n_trees"])
    if p["max_depth"] is not None:
        p["max_depth"] = int(p["max_depth"])
    return p


def train_forest(train: LabeledDataset, params: Optional[dict] = None, seed: int = 0) -> ForestModel:
    """Random forest of Gini trees.

    Tree ``i`` draws its bootstrap sample and its per-node feature subsets
    from ``default_rng([seed, i])``, so the forest depends only on
    (train, params, seed). ``bootstrap=False`` with ``m_try`` equal to the
    feature count grows plain deterministic decision trees.
    """
    train.require_both_classes()
    X = train.X
    n, d = X.shape
    pos = (train.y > 0).astype(np.int64)
    p = resolve_params(params, d)
    counts = train.class_counts()
    class_counts = (counts[Label.CNN], counts[Label.RNN])
    tie = (Label.RNN, Label.CNN) if class_counts[1] > class_counts[0] else (Label.CNN, Label.RNN)
    trees = []
    for i in range(p["n_trees"]):
        rng = np.random.default_rng([int(seed), i])
        idx = rng.integers(0, n, n) if p["bootstrap"] else np.arange(n)
        m_try = p["m_try"]

        def sampler(dim, rng=rng, m_try=m_try):
            if m_try >= dim:
                return range(dim)
            return rng.choice(dim, size=m_try, replace=False)

        trees.append(
            grow_classifier(
                X[idx],
                pos[idx],
                max_depth=p["max_depth"],
                min_samples_split=int(p["min_samples_split"]),
                feature_sampler=sampler,
                tie_order=tie,
            )
        )
    return ForestModel(trees, p, int(seed), train.names, class_counts)
