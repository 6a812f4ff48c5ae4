from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ArityMismatch, EmptyDataset


@dataclass(frozen=True, eq=False)
class Scaler:
    """Per-feature z-scoring with training-set statistics (population std).

    Zero-variance features pass through unchanged.
    """

    mean: np.ndarray
    std: np.ndarray

    def transform(self, rows) -> np.ndarray:
        X = np.asarray(rows, dtype=np.float64)
        one = X.ndim == 1
        X = np.atleast_2d(X)
        if X.shape[1] != len(self.mean):
            raise ArityMismatch(f"rows have {X.shape[1]} features, scaler expects {len(self.mean)}")
        live = self.std > 0
        out = X.copy()
        out[:, live] = (X[:, live] - self.mean[live]) / self.std[live]
        return out[0] if one else out

    def to_dict(self):
        return {"mean": self.mean.tolist(), "std": self.std.tolist()}

    @classmethod
    def from_dict(cls, d):
        return cls(np.array(d["mean"], dtype=np.float64), np.array(d["std"], dtype=np.float64))


def fit_scaler(rows) -> Scaler:
    X = np.atleast_2d(np.asarray(getattr(rows, "X", rows), dtype=np.float64))
    if X.shape[0] == 0:
        raise EmptyDataset("cannot fit a scaler on zero rows")
    return Scaler(X.mean(axis=0), X.std(axis=0))


def apply_scaler(scaler: Scaler, rows) -> np.ndarray:
    return scaler.transform(rows)
