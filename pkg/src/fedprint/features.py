"""Session-level statistical features and their discriminability.

Thirteen features per session, in the fixed ``FEATURE_NAMES`` order:
frame-length statistics, direction statistics and interarrival statistics.
Standard deviations are population (ddof=0) throughout. Capture duration is
deliberately not a feature because it only reflects how long the sniffer ran.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .errors import (
    ArityMismatch,
    BadRange,
    EdgeMismatch,
    EmptyDataset,
    EmptyValues,
    IndexOutOfRange,
    MinPacketsNotMet,
    SchemaMismatch,
    SingleClassDataset,
    UnlabeledSession,
)
from .session import LABELS, Label, TraceSession

FEATURE_NAMES = (
    "mean_frame",
    "std_frame",
    "min_frame",
    "max_frame",
    "peaks_frame",
    "mean_dir",
    "uplink_prop",
    "downlink_prop",
    "mean_ia",
    "std_ia",
    "min_ia",
    "max_ia",
    "peaks_ia",
)
N_FEATURES = len(FEATURE_NAMES)

SMOOTHING = 1e-9
RANK_TIE = 1e-12  # relative; absorbs rounding in exactly tied Fisher scores
DEFAULT_BINS = 20
DEFAULT_K = 8


def interarrival_series(session: TraceSession) -> np.ndarray:
    if len(session) < 2:
        raise MinPacketsNotMet(
            f"session {session.session_id!r} has {len(session)} packet(s), need >= 2"
        )
    return np.diff(session.timestamps)


def count_peaks(series) -> int:
    """Strict local maxima that also exceed mean + one population std."""
    x = np.asarray(series, dtype=np.float64)
    if x.size < 3:
        return 0
    threshold = x.mean() + x.std()
    mid = x[1:-1]
    return int(np.count_nonzero((mid > x[:-2]) & (mid > x[2:]) & (mid > threshold)))


def _stats(x: np.ndarray) -> Tuple[float, float, float, float]:
    lo, hi = float(x.min()), float(x.max())
    # summation error can push the mean of a near-constant series past its extremes
    mean = min(max(float(x.mean()), lo), hi)
    return mean, float(x.std()), lo, hi


def extract_features(session: TraceSession) -> np.ndarray:
    ia = interarrival_series(session)
    frames = session.frame_lengths.astype(np.float64)
    n = len(session)
    n_up = int(np.count_nonzero(session.directions > 0))
    mf, sf, lof, hif = _stats(frames)
    mi, si, loi, hii = _stats(ia)
    return np.array(
        [
            mf, sf, lof, hif, count_peaks(frames),
            (n_up - (n - n_up)) / n, n_up / n, (n - n_up) / n,
            mi, si, loi, hii, count_peaks(ia),
        ],
        dtype=np.float64,
    )


def feature_dict(vector) -> dict:
    return dict(zip(FEATURE_NAMES, np.asarray(vector).tolist()))


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    X: np.ndarray
    labels: Tuple[Label, ...]
    names: Tuple[str, ...] = FEATURE_NAMES
    session_ids: Optional[Tuple[str, ...]] = None

    def __post_init__(self):
        X = np.array(self.X, dtype=np.float64)
        if X.ndim != 2:
            raise SchemaMismatch("feature matrix must be 2-D")
        labels = tuple(Label(lab) for lab in self.labels)
        names = tuple(self.names)
        if X.shape[0] == 0:
            raise EmptyDataset("dataset has no rows")
        if X.shape[0] != len(labels):
            raise SchemaMismatch(f"{X.shape[0]} rows but {len(labels)} labels")
        if X.shape[1] != len(names):
            raise SchemaMismatch(f"rows have {X.shape[1]} features, schema has {len(names)}")
        if len(set(names)) != len(names):
            raise SchemaMismatch(f"duplicate feature names in {names}")
        X.flags.writeable = False
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "names", names)
        if self.session_ids is not None:
            ids = tuple(self.session_ids)
            if len(ids) != len(labels):
                raise SchemaMismatch("session_ids length differs from labels")
            object.__setattr__(self, "session_ids", ids)

    def __len__(self):
        return len(self.labels)

    @property
    def y(self) -> np.ndarray:
        """Labels as +1 (CNN) / -1 (RNN)."""
        return np.array([lab.sign for lab in self.labels], dtype=np.int64)

    def class_counts(self) -> dict:
        return {lab: self.labels.count(lab) for lab in LABELS}

    def require_both_classes(self):
        counts = self.class_counts()
        missing = [str(lab) for lab, c in counts.items() if c == 0]
        if missing:
            raise SingleClassDataset(f"dataset has no {'/'.join(missing)} rows")

    def subset(self, idx) -> "LabeledDataset":
        idx = list(idx)
        return LabeledDataset(
            self.X[idx],
            [self.labels[i] for i in idx],
            self.names,
            None if self.session_ids is None else [self.session_ids[i] for i in idx],
        )

    def project(self, names: Sequence[str]) -> "LabeledDataset":
        """Columns by name, in the given order."""
        missing = [n for n in names if n not in self.names]
        if missing:
            raise ArityMismatch(f"dataset lacks features {missing}")
        cols = [self.names.index(n) for n in names]
        return LabeledDataset(self.X[:, cols], self.labels, tuple(names), self.session_ids)


def build_dataset(sessions: Sequence[TraceSession]) -> LabeledDataset:
    if not sessions:
        raise EmptyDataset("no sessions given")
    rows = []
    for s in sessions:
        if s.label is None:
            raise UnlabeledSession(f"session {s.session_id!r} has no label")
        rows.append(extract_features(s))
    return LabeledDataset(
        np.vstack(rows),
        [s.label for s in sessions],
        FEATURE_NAMES,
        [s.session_id for s in sessions],
    )


def write_dataset_csv(ds: LabeledDataset) -> str:
    """Feature matrix as CSV: optional leading ``session_id``, the feature
    columns, then ``label``."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    with_ids = ds.session_ids is not None
    w.writerow((["session_id"] if with_ids else []) + list(ds.names) + ["label"])
    for i, row in enumerate(ds.X.tolist()):
        w.writerow(([ds.session_ids[i]] if with_ids else []) + [repr(v) for v in row] + [ds.labels[i].value])
    return buf.getvalue()


def read_dataset_csv(text: str) -> LabeledDataset:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise SchemaMismatch("empty feature CSV")
    header = rows[0]
    if not header or header[-1] != "label":
        raise SchemaMismatch(f"feature CSV must end with a 'label' column, got {header}")
    with_ids = header[0] == "session_id"
    names = header[1 if with_ids else 0:-1]
    X, labels, ids = [], [], []
    for i, row in enumerate(rows[1:], start=1):
        if not row:
            continue
        if len(row) != len(header):
            raise SchemaMismatch(f"feature CSV row {i} has {len(row)} fields, expected {len(header)}")
        try:
            labels.append(Label(row[-1]))
        except ValueError:
            raise SchemaMismatch(f"feature CSV row {i}: unknown label {row[-1]!r}") from None
        X.append([float(v) for v in row[1 if with_ids else 0:-1]])
        if with_ids:
            ids.append(row[0])
    if not X:
        raise EmptyDataset("feature CSV has no rows")
    return LabeledDataset(np.array(X), labels, names, ids if with_ids else None)


# --- distribution estimates -------------------------------------------------


@dataclass(frozen=True, eq=False)
class Histogram:
    edges: np.ndarray
    mass: np.ndarray

    def __post_init__(self):
        edges = np.asarray(self.edges, dtype=np.float64)
        mass = np.asarray(self.mass, dtype=np.float64)
        if len(edges) != len(mass) + 1 or np.any(np.diff(edges) <= 0):
            raise BadRange("histogram edges must be strictly increasing, one more than bins")
        if np.any(mass < 0) or abs(mass.sum() - 1.0) > 1e-9:
            raise ValueError("histogram mass must be non-negative and sum to 1")
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "mass", mass)


def estimate_histogram(values, bins: int, range: Tuple[float, float]) -> Histogram:
    """Equal-width, epsilon-smoothed probability histogram. Values outside
    the range are clamped into the end bins."""
    lo, hi = float(range[0]), float(range[1])
    if not lo < hi:
        raise BadRange(f"histogram range needs lo < hi, got [{lo}, {hi}]")
    if int(bins) < 1:
        raise BadRange(f"bins must be >= 1, got {bins}")
    x = np.asarray(values, dtype=np.float64).ravel()
    if x.size == 0:
        raise EmptyValues("cannot estimate a histogram from no values")
    bins = int(bins)
    idx = np.clip(np.floor((x - lo) / (hi - lo) * bins), 0, bins - 1).astype(np.int64)
    counts = np.bincount(idx, minlength=bins).astype(np.float64)
    mass = (counts + SMOOTHING) / (x.size + bins * SMOOTHING)
    return Histogram(np.linspace(lo, hi, bins + 1), mass)


def kl_divergence(p: Histogram, q: Histogram) -> float:
    """KL(p || q) in nats."""
    if p.edges.shape != q.edges.shape or not np.array_equal(p.edges, q.edges):
        raise EdgeMismatch("histograms have different bin edges")
    pm, qm = p.mass, q.mass
    nz = pm > 0
    kl = float(np.sum(pm[nz] * np.log(pm[nz] / qm[nz])))
    if kl < 0:
        if kl < -1e-12:
            raise ArithmeticError(f"negative KL divergence {kl}")
        kl = 0.0
    return kl


def pooled_range(a, b) -> Tuple[float, float]:
    """min-max over both samples, widened by 0.5 on each side when degenerate."""
    both = np.concatenate([np.ravel(a), np.ravel(b)]).astype(np.float64)
    lo, hi = float(both.min()), float(both.max())
    if lo == hi:
        return lo - 0.5, hi + 0.5
    return lo, hi


# --- ranking ----------------------------------------------------------------


def _class_columns(ds: LabeledDataset, j: int):
    ds.require_both_classes()
    y = ds.y
    return ds.X[y > 0, j], ds.X[y < 0, j]


def fisher_score(ds: LabeledDataset, feature_index: int) -> float:
    if not 0 <= feature_index < len(ds.names):
        raise IndexOutOfRange(f"feature index {feature_index} outside [0, {len(ds.names)})")
    a, b = _class_columns(ds, feature_index)
    num = (a.mean() - b.mean()) ** 2
    den = a.var() + b.var()
    if den == 0:
        return math.inf if num > 0 else 0.0
    return float(num / den)


@dataclass(frozen=True)
class FeatureScore:
    name: str
    index: int
    fisher: float
    kl_ab: float
    kl_ba: float
    hist_a: Histogram = field(repr=False, compare=False)
    hist_b: Histogram = field(repr=False, compare=False)


def rank_features(ds: LabeledDataset, bins: int = DEFAULT_BINS) -> List[FeatureScore]:
    """Score every column; sorted by Fisher score descending, then column index.

    Class A is CNN, class B is RNN; ``kl_ab`` is KL(A || B).
    """
    ds.require_both_classes()
    out = []
    for j, name in enumerate(ds.names):
        a, b = _class_columns(ds, j)
        rng = pooled_range(a, b)
        ha, hb = estimate_histogram(a, bins, rng), estimate_histogram(b, bins, rng)
        out.append(
            FeatureScore(name, j, fisher_score(ds, j), kl_divergence(ha, hb), kl_divergence(hb, ha), ha, hb)
        )
    return _order_by_fisher(out)


def _order_by_fisher(scores: List[FeatureScore]) -> List[FeatureScore]:
    """Fisher descending; scores within RANK_TIE (relative) of a group's
    leading score count as tied and keep column order."""
    ranked = sorted(scores, key=lambda r: (-r.fisher, r.index))
    group, lead, keyed = -1, None, []
    for r in ranked:
        tied = lead is not None and (
            r.fisher == lead or (math.isfinite(lead) and abs(lead - r.fisher) <= RANK_TIE * max(1.0, lead))
        )
        if not tied:
            group, lead = group + 1, r.fisher
        keyed.append((group, r.index, r))
    return [r for _, _, r in sorted(keyed, key=lambda t: t[:2])]


def select_features(ds: LabeledDataset, k: int = DEFAULT_K, bins: int = DEFAULT_BINS) -> LabeledDataset:
    if not 1 <= k <= len(ds.names):
        raise IndexOutOfRange(f"k={k} outside [1, {len(ds.names)}]")
    ranking = rank_features(ds, bins)
    return ds.project([r.name for r in ranking[:k]])


def packet_level_kl(
    sessions: Sequence[TraceSession], quantity: str, bins: int = DEFAULT_BINS
) -> Tuple[Histogram, Histogram, float, float]:
    """KL between classes over raw per-packet values pooled across sessions.

    ``quantity`` is ``"frame"`` (frame lengths), ``"ia"`` (interarrival
    gaps) or ``"dir"`` (direction encodings).
    """
    pools = {Label.CNN: [], Label.RNN: []}
    for s in sessions:
        if s.label is None:
            raise UnlabeledSession(f"session {s.session_id!r} has no label")
        if quantity == "frame":
            v = s.frame_lengths
        elif quantity == "ia":
            v = interarrival_series(s)
        elif quantity == "dir":
            v = s.directions
        else:
            raise ValueError(f"unknown quantity {quantity!r}")
        pools[s.label].append(np.asarray(v, dtype=np.float64))
    if not pools[Label.CNN] or not pools[Label.RNN]:
        raise SingleClassDataset("need sessions of both classes")
    a = np.concatenate(pools[Label.CNN])
    b = np.concatenate(pools[Label.RNN])
    rng = pooled_range(a, b)
    ha, hb = estimate_histogram(a, bins, rng), estimate_histogram(b, bins, rng)
    return ha, hb, kl_divergence(ha, hb), kl_divergence(hb, ha)


def ranking_csv(ranking: Sequence[FeatureScore]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("rank", "name", "fisher", "kl_ab", "kl_ba"))
    for i, r in enumerate(ranking, start=1):
        w.writerow((i, r.name, repr(r.fisher), repr(r.kl_ab), repr(r.kl_ba)))
    return buf.getvalue()
