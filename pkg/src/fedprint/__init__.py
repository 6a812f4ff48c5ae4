"""Classify which model architecture (CNN or RNN) a federated-learning client
is training from the sizes, directions and timing of its packets."""
from .errors import ConfigError, DataError, FingerprintError, NonConvergenceWarning
from .session import Condition, Direction, Endpoint, Label, PacketRecord, TraceSession, segment_session
from .pcap import parse_pcap, write_pcap
from .csvio import read_csv, write_csv
from .features import (
    FEATURE_NAMES,
    LabeledDataset,
    build_dataset,
    extract_features,
    fisher_score,
    kl_divergence,
    rank_features,
    select_features,
)
from .classifiers import grid_search_cv, load_model, predict, save_model, train_forest, train_gbm, train_svm
from .evaluation import confusion, evaluate, metrics

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "FingerprintError",
    "NonConvergenceWarning",
    "Condition",
    "Direction",
    "Endpoint",
    "Label",
    "PacketRecord",
    "TraceSession",
    "segment_session",
    "parse_pcap",
    "write_pcap",
    "read_csv",
    "write_csv",
    "FEATURE_NAMES",
    "LabeledDataset",
    "build_dataset",
    "extract_features",
    "fisher_score",
    "kl_divergence",
    "rank_features",
    "select_features",
    "grid_search_cv",
    "load_model",
    "predict",
    "save_model",
    "train_forest",
    "train_gbm",
    "train_svm",
    "confusion",
    "evaluate",
    "metrics",
]
