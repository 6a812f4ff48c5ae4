"""Fingerprinting classifiers: random forest, SMO-trained SVM and logistic
gradient boosting, plus grid-search cross-validation and model files."""
from __future__ import annotations

from typing import List, NamedTuple

import numpy as np

from ..errors import ArityMismatch
from ..features import LabeledDataset
from ..session import Label
from .cv import KINDS, CvResult, default_grid, grid_search_cv, stratified_folds, train_model
from .forest import ForestModel, train_forest
from .gbm import GbmModel, train_gbm
from .persist import load_model, save_model
from .scaler import Scaler, apply_scaler, fit_scaler
from .svm import SvmModel, train_svm
from .tree import TreeNode


class Prediction(NamedTuple):
    label: Label
    score: float


def predict(model, row) -> Prediction:
    """Forest: majority vote, score = vote share. SVM: sign of the decision
    value (0 counts as CNN), score = |decision|. GBM: CNN when p >= 0.5,
    score = probability of the returned label."""
    x = np.asarray(row, dtype=np.float64).ravel()
    if x.size != len(model.names):
        raise ArityMismatch(f"row has {x.size} features, model expects {len(model.names)}")
    return Prediction(*model.predict_row(x))


def predict_dataset(model, ds: LabeledDataset) -> List[Prediction]:
    """Predict every row after projecting ``ds`` onto the model's feature
    names."""
    if tuple(ds.names) != tuple(model.names):
        ds = ds.project(model.names)
    return [predict(model, x) for x in ds.X]


__all__ = [
    "KINDS",
    "CvResult",
    "ForestModel",
    "GbmModel",
    "Prediction",
    "Scaler",
    "SvmModel",
    "TreeNode",
    "apply_scaler",
    "default_grid",
    "fit_scaler",
    "grid_search_cv",
    "load_model",
    "predict",
    "predict_dataset",
    "save_model",
    "stratified_folds",
    "train_forest",
    "train_gbm",
    "train_model",
    "train_svm",
]
