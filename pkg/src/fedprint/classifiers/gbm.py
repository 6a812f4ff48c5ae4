"""Binary logistic gradient boosting with Newton leaf values.

The positive class is CNN. Scores start at the training log-odds and each
round adds ``learning_rate`` times a small regression tree fit to the
residuals ``y - p``. Trees are split on raw (unscaled) features.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import List, Tuple

import numpy as np

from ..errors import ConfigError
from ..features import LabeledDataset
from ..session import Label
from .tree import TreeNode, grow_regressor, predict_values


def sigmoid(F):
    return np.exp(-np.logaddexp(0.0, -np.asarray(F, dtype=np.float64)))


def log_loss(y01: np.ndarray, F: np.ndarray) -> float:
    return float(np.mean(np.logaddexp(0.0, -(2 * y01 - 1) * F)))


@dataclass
class GbmModel:
    initial_score: float
    trees: List[TreeNode]
    learning_rate: float
    max_depth: int
    names: Tuple[str, ...]
    losses: List[float]  # training log-loss after each round
    kind = "gbm"
    seed = 0

    @property
    def n_rounds(self) -> int:
        return len(self.trees)

    @property
    def params(self) -> dict:
        return {"n_rounds": self.n_rounds, "learning_rate": self.learning_rate, "max_depth": self.max_depth}

    def raw_score(self, X) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        F = np.full(len(X), self.initial_score)
        for t in self.trees:
            F += self.learning_rate * predict_values(t, X)
        return F

    def staged_scores(self, X):
        X = np.atleast_2d(np.asarray(X, dtype=np.float64))
        F = np.full(len(X), self.initial_score)
        for t in self.trees:
            F = F + self.learning_rate * predict_values(t, X)
            yield F

    def predict_row(self, x) -> Tuple[Label, float]:
        p = float(sigmoid(self.raw_score(x))[0])
        return (Label.CNN, p) if p >= 0.5 else (Label.RNN, 1.0 - p)

    def payload(self) -> dict:
        return {
            "initial_score": self.initial_score,
            "trees": [t.to_dict() for t in self.trees],
            "losses": list(self.losses),
        }

    @classmethod
    def from_payload(cls, payload, params, seed, names):
        return cls(
            float(payload["initial_score"]),
            [TreeNode.from_dict(t) for t in payload["trees"]],
            float(params["learning_rate"]),
            int(params["max_depth"]),
            tuple(names),
            [float(v) for v in payload["losses"]],
        )


def train_gbm(
    train: LabeledDataset, n_rounds: int = 100, learning_rate: float = 0.1, max_depth: int = 3
) -> GbmModel:
    train.require_both_classes()
    if int(n_rounds) < 0 or not learning_rate > 0 or int(max_depth) < 1:
        raise ConfigError("need n_rounds >= 0, learning_rate > 0, max_depth >= 1")
    X = train.X
    y01 = (train.y > 0).astype(np.float64)
    n_pos = y01.sum()
    F0 = math.log(n_pos / (len(y01) - n_pos))
    F = np.full(len(y01), F0)
    trees, losses = [], []
    for _ in range(int(n_rounds)):
        p = sigmoid(F)
        tree = grow_regressor(X, y01 - p, p * (1 - p), max_depth=int(max_depth))
        F = F + learning_rate * predict_values(tree, X)
        trees.append(tree)
        losses.append(log_loss(y01, F))
    return GbmModel(F0, trees, float(learning_rate), int(max_depth), train.names, losses)
