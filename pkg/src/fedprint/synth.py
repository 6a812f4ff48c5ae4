"""Synthetic federated-learning traffic.

Each session is a sequence of FL rounds: the server pushes the global model
(downlink burst), the client computes locally (compute gap), then uploads its
update (uplink burst). Frame sizes and gaps are drawn from per-architecture
distributions. Browsing noise is a Poisson packet stream superimposed on the
session.

All randomness flows from explicit seeds through ``numpy.random.Generator``.
"""
from __future__ import annotations

import csv
import hashlib
import math
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import ConfigError, DegenerateProfile, IoFailure, SchemaMismatch
from .pcap import HEADERS_LEN, write_pcap
from .session import (
    DEFAULT_CLIENT,
    DEFAULT_SERVER,
    LABELS,
    Condition,
    Endpoint,
    Label,
    TraceSession,
)

MIN_FRAME = 55
MAX_FRAME = 1514
MAX_PAYLOAD = MAX_FRAME - HEADERS_LEN
MAX_ATTEMPTS = 1000
_US = 1_000_000


# --- distributions ----------------------------------------------------------


class Dist:
    kind = ""

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        raise NotImplementedError

    def mean(self) -> float:
        raise NotImplementedError

    def to_dict(self) -> dict:
        return {"kind": self.kind, **asdict(self)}


@dataclass(frozen=True)
class Constant(Dist):
    value: float
    kind = "constant"

    def __post_init__(self):
        if not self.value >= 0:
            raise DegenerateProfile(f"constant {self.value} is negative")

    def sample(self, rng, size):
        return np.full(size, float(self.value))

    def mean(self):
        return float(self.value)


@dataclass(frozen=True)
class Uniform(Dist):
    low: float
    high: float
    kind = "uniform"

    def __post_init__(self):
        if not 0 <= self.low <= self.high:
            raise DegenerateProfile(f"uniform[{self.low}, {self.high}] needs 0 <= low <= high")

    def sample(self, rng, size):
        return rng.uniform(self.low, self.high, size)

    def mean(self):
        return 0.5 * (self.low + self.high)


@dataclass(frozen=True)
class TruncNormal(Dist):
    mu: float
    sigma: float
    low: float
    high: float
    kind = "truncnormal"

    def __post_init__(self):
        if not (self.sigma >= 0 and 0 <= self.low <= self.high):
            raise DegenerateProfile(
                f"truncnormal needs sigma >= 0 and 0 <= low <= high, got {self}"
            )

    def sample(self, rng, size):
        out = np.empty(0)
        while out.size < size:
            batch = max(2 * (size - out.size), MAX_ATTEMPTS)
            x = rng.normal(self.mu, self.sigma, batch)
            x = x[(x >= self.low) & (x <= self.high)]
            if x.size == 0:
                raise DegenerateProfile(
                    f"{self} produced no sample within [{self.low}, {self.high}] "
                    f"after {batch} attempts"
                )
            out = np.concatenate([out, x])
        return out[:size]

    def mean(self):
        return float(np.clip(self.mu, self.low, self.high))


@dataclass(frozen=True)
class LogNormal(Dist):
    """Parameters are those of the underlying normal (log space)."""

    mu: float
    sigma: float
    kind = "lognormal"

    def __post_init__(self):
        if not self.sigma >= 0:
            raise DegenerateProfile("lognormal sigma must be >= 0")

    def sample(self, rng, size):
        return rng.lognormal(self.mu, self.sigma, size)

    def mean(self):
        return math.exp(self.mu + 0.5 * self.sigma**2)


@dataclass(frozen=True)
class Mixture(Dist):
    components: Tuple[Dist, ...]
    weights: Tuple[float, ...]
    kind = "mixture"

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if len(self.components) == 0 or len(w) != len(self.components) or np.any(w < 0) or w.sum() <= 0:
            raise DegenerateProfile("mixture needs matching non-negative weights")
        object.__setattr__(self, "components", tuple(self.components))
        object.__setattr__(self, "weights", tuple(float(v) for v in w / w.sum()))

    def sample(self, rng, size):
        which = rng.choice(len(self.components), size=size, p=self.weights)
        out = np.empty(size)
        for k, comp in enumerate(self.components):
            mask = which == k
            if mask.any():
                out[mask] = comp.sample(rng, int(mask.sum()))
        return out

    def mean(self):
        return float(sum(w * c.mean() for w, c in zip(self.weights, self.components)))

    def to_dict(self):
        return {
            "kind": self.kind,
            "components": [c.to_dict() for c in self.components],
            "weights": list(self.weights),
        }


@dataclass(frozen=True)
class Scaled(Dist):
    base: Dist
    factor: float
    kind = "scaled"

    def sample(self, rng, size):
        return self.factor * self.base.sample(rng, size)

    def mean(self):
        return self.factor * self.base.mean()

    def to_dict(self):
        return {"kind": self.kind, "base": self.base.to_dict(), "factor": self.factor}


_DIST_KINDS = {
    "constant": (Constant, ("value",)),
    "uniform": (Uniform, ("low", "high")),
    "truncnormal": (TruncNormal, ("mu", "sigma", "low", "high")),
    "lognormal": (LogNormal, ("mu", "sigma")),
}


def dist_from_dict(d: dict) -> Dist:
    d = dict(d)
    kind = d.pop("kind", None)
    if kind == "mixture":
        _reject_unknown(d, {"components", "weights"}, "mixture")
        return Mixture(tuple(dist_from_dict(c) for c in d["components"]), tuple(d["weights"]))
    if kind == "scaled":
        _reject_unknown(d, {"base", "factor"}, "scaled")
        return Scaled(dist_from_dict(d["base"]), float(d["factor"]))
    if kind not in _DIST_KINDS:
        raise ConfigError(f"unknown distribution kind {kind!r}")
    cls, keys = _DIST_KINDS[kind]
    _reject_unknown(d, set(keys), kind)
    missing = set(keys) - set(d)
    if missing:
        raise ConfigError(f"{kind} distribution missing {sorted(missing)}")
    return cls(**{k: float(d[k]) for k in keys})


def _reject_unknown(d: dict, allowed: set, what: str):
    unknown = set(d) - allowed
    if unknown:
        raise ConfigError(f"unknown keys for {what}: {sorted(unknown)}")


def _check_samples(x: np.ndarray, dist: Dist) -> np.ndarray:
    if not np.all(np.isfinite(x)) or np.any(x < 0):
        raise DegenerateProfile(f"{dist} produced a negative or non-finite sample")
    return x


# --- profiles ---------------------------------------------------------------


@dataclass(frozen=True)
class WorkloadProfile:
    label: Label
    rounds: int
    downlink_bytes: int
    uplink_bytes: int
    frame_size_dist: Dist  # payload bytes per frame
    intra_burst_gap_dist: Dist  # seconds
    compute_gap_dist: Dist  # seconds

    def __post_init__(self):
        object.__setattr__(self, "label", Label(self.label))
        if int(self.rounds) < 1:
            raise ConfigError(f"rounds must be >= 1, got {self.rounds}")
        if int(self.downlink_bytes) < 1 or int(self.uplink_bytes) < 1:
            raise ConfigError("downlink_bytes and uplink_bytes must be >= 1")

    def to_dict(self) -> dict:
        return {
            "label": self.label.value,
            "rounds": int(self.rounds),
            "downlink_bytes": int(self.downlink_bytes),
            "uplink_bytes": int(self.uplink_bytes),
            "frame_size_dist": self.frame_size_dist.to_dict(),
            "intra_burst_gap_dist": self.intra_burst_gap_dist.to_dict(),
            "compute_gap_dist": self.compute_gap_dist.to_dict(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "WorkloadProfile":
        _reject_unknown(d, {f for f in cls.__dataclass_fields__}, "workload profile")
        try:
            return cls(
                label=Label(d["label"]),
                rounds=int(d["rounds"]),
                downlink_bytes=int(d["downlink_bytes"]),
                uplink_bytes=int(d["uplink_bytes"]),
                frame_size_dist=dist_from_dict(d["frame_size_dist"]),
                intra_burst_gap_dist=dist_from_dict(d["intra_burst_gap_dist"]),
                compute_gap_dist=dist_from_dict(d["compute_gap_dist"]),
            )
        except KeyError as exc:
            raise ConfigError(f"workload profile missing {exc}") from None


@dataclass(frozen=True)
class NoiseProfile:
    rate: float  # packets per second
    size_dist: Dist  # on-wire frame bytes
    direction_bias: float = 0.3  # P(uplink)

    def __post_init__(self):
        if not self.rate >= 0:
            raise ConfigError(f"noise rate must be >= 0, got {self.rate}")
        if not 0 <= self.direction_bias <= 1:
            raise ConfigError("direction_bias must lie in [0, 1]")

    def to_dict(self):
        return {"rate": self.rate, "size_dist": self.size_dist.to_dict(), "direction_bias": self.direction_bias}

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseProfile":
        _reject_unknown(d, {"rate", "size_dist", "direction_bias"}, "noise profile")
        return cls(float(d["rate"]), dist_from_dict(d["size_dist"]), float(d.get("direction_bias", 0.3)))


# Defaults are design choices, not measurements. CNN: large, uniform frames
# and skewed (lognormal) gaps. RNN: dispersed frame sizes and tight, regular
# gaps. Compute gaps are kept short so interarrival variability lives inside
# the bursts, where Poisson browsing noise does not wash it out.
_CNN_BASE = dict(
    rounds=5,
    downlink_bytes=1_000_000,
    uplink_bytes=1_000_000,
    frame_size_dist=TruncNormal(1150.0, 40.0, 900.0, 1460.0),
    intra_burst_gap_dist=LogNormal(math.log(1e-3), 0.8),
    compute_gap_dist=LogNormal(math.log(0.1), 0.5),
)
_RNN_BASE = dict(
    rounds=5,
    downlink_bytes=700_000,
    uplink_bytes=700_000,
    frame_size_dist=Uniform(600.0, 1460.0),
    intra_burst_gap_dist=TruncNormal(3e-4, 3e-5, 1e-4, 6e-4),
    compute_gap_dist=TruncNormal(0.02, 0.004, 0.005, 0.05),
)
# browsing: mostly small packets, mostly downloads
DEFAULT_NOISE = NoiseProfile(rate=120.0, size_dist=LogNormal(math.log(200.0), 1.0), direction_bias=0.3)


def default_profiles(separation: float = 1.0) -> Tuple[WorkloadProfile, WorkloadProfile]:
    """CNN and RNN profiles; ``separation`` in [0, 1] blends them together.

    At 1 each class draws only from its own distributions; at 0 both classes
    draw from the same 50/50 mixture and share the midpoint byte volumes.
    """
    if not 0 <= separation <= 1:
        raise ConfigError(f"separation must lie in [0, 1], got {separation}")
    own = (1 + separation) / 2

    def blend(a, b):
        if isinstance(a, Dist):
            return a if separation == 1 else Mixture((a, b), (own, 1 - own))
        mid = (a + b) / 2
        return int(round(mid + separation * (a - mid)))

    cnn = {k: blend(_CNN_BASE[k], _RNN_BASE[k]) for k in _CNN_BASE}
    rnn = {k: blend(_RNN_BASE[k], _CNN_BASE[k]) for k in _RNN_BASE}
    return WorkloadProfile(Label.CNN, **cnn), WorkloadProfile(Label.RNN, **rnn)


# --- generation -------------------------------------------------------------


def _gaps_us(dist: Dist, rng, size: int) -> np.ndarray:
    g = _check_samples(dist.sample(rng, size), dist)
    # microsecond grid, at least 1 us so timestamps strictly increase
    return np.maximum(np.rint(g * _US), 1).astype(np.int64)


def _burst_frames(total_bytes: int, dist: Dist, rng) -> np.ndarray:
    """On-wire frame lengths carrying ``total_bytes`` of payload."""
    chunks = []
    remaining = int(total_bytes)
    guess = max(dist.mean(), 1.0)
    while remaining > 0:
        n = int(remaining / guess) + 16
        p = np.clip(np.rint(_check_samples(dist.sample(rng, n), dist)), 1, MAX_PAYLOAD).astype(np.int64)
        c = np.cumsum(p)
        k = int(np.searchsorted(c, remaining))
        if k < n:
            p = p[: k + 1].copy()
            p[-1] = remaining - (c[k - 1] if k else 0)
            remaining = 0
        else:
            remaining -= int(c[-1])
        chunks.append(p)
    return np.clip(np.concatenate(chunks) + HEADERS_LEN, MIN_FRAME, MAX_FRAME)


def generate_session(profile: WorkloadProfile, seed, session_id: str = "") -> TraceSession:
    """One ideal (noise-free) session; identical (profile, seed) give
    identical packets."""
    rng = np.random.default_rng(seed)
    sizes, dirs, gaps = [], [], []
    for r in range(int(profile.rounds)):
        for direction, nbytes in ((-1, profile.downlink_bytes), (1, profile.uplink_bytes)):
            frames = _burst_frames(nbytes, profile.frame_size_dist, rng)
            sizes.append(frames)
            dirs.append(np.full(len(frames), direction, dtype=np.int8))
            # gap before the first frame of this burst
            if direction == -1:
                lead = np.zeros(1, np.int64) if r == 0 else _gaps_us(profile.intra_burst_gap_dist, rng, 1)
            else:
                lead = _gaps_us(profile.compute_gap_dist, rng, 1)
            gaps.append(np.concatenate([lead, _gaps_us(profile.intra_burst_gap_dist, rng, len(frames) - 1)]))
    us = np.cumsum(np.concatenate(gaps))
    return TraceSession(
        us / _US,
        np.concatenate(sizes),
        np.concatenate(dirs),
        label=profile.label,
        condition=Condition.IDEAL,
        session_id=session_id,
    )


def inject_noise(session: TraceSession, noise: NoiseProfile, seed) -> TraceSession:
    """Superimpose Poisson browsing packets over the session's time span."""
    if len(session) == 0:
        raise ValueError("cannot inject noise into an empty session")
    rng = np.random.default_rng(seed)
    t0, t1 = float(session.timestamps[0]), float(session.timestamps[-1])
    count = int(rng.poisson(noise.rate * (t1 - t0))) if noise.rate > 0 else 0
    if count == 0:
        return session.with_meta(condition=Condition.NOISY)
    times = np.sort(np.rint(rng.uniform(t0, t1, count) * _US)) / _US
    sizes = np.clip(
        np.rint(_check_samples(noise.size_dist.sample(rng, count), noise.size_dist)), HEADERS_LEN, MAX_FRAME
    ).astype(np.int64)
    dirs = np.where(rng.random(count) < noise.direction_bias, 1, -1).astype(np.int8)
    ts = np.concatenate([session.timestamps, times])
    order = np.argsort(ts, kind="stable")
    return TraceSession(
        ts[order],
        np.concatenate([session.frame_lengths, sizes])[order],
        np.concatenate([session.directions, dirs])[order],
        label=session.label,
        condition=Condition.NOISY,
        session_id=session.session_id,
    )


# --- corpus -----------------------------------------------------------------

ROLES = ("train", "test")


def _split(total: int, noisy_fraction: float) -> Dict[str, int]:
    noisy = int(math.floor(total * noisy_fraction))
    return {Condition.IDEAL.value: total - noisy, Condition.NOISY.value: noisy}


@dataclass(frozen=True)
class CorpusSpec:
    """Session counts per role, label and condition plus generation knobs.

    ``jitter`` varies each session's rounds, byte volumes, compute time and
    noise intensity by a uniform factor in [1 - jitter, 1 + jitter],
    standing in for the per-run hyperparameter changes of a real testbed.
    """

    counts: Dict[str, Dict[str, Dict[str, int]]] = field(default_factory=lambda: CorpusSpec.paper_counts())
    base_seed: int = 0
    server: Endpoint = DEFAULT_SERVER
    client: Endpoint = DEFAULT_CLIENT
    jitter: float = 0.4
    snaplen: int = 128

    def __post_init__(self):
        for role, by_label in self.counts.items():
            if role not in ROLES:
                raise ConfigError(f"unknown role {role!r}")
            for label, by_cond in by_label.items():
                Label(label)
                for cond, n in by_cond.items():
                    Condition(cond)
                    if int(n) < 0:
                        raise ConfigError(f"negative session count for {role}/{label}/{cond}")
        if not 0 <= self.jitter < 1:
            raise ConfigError("jitter must lie in [0, 1)")

    @staticmethod
    def paper_counts(
        train_cnn=8, train_rnn=8, test_cnn=12, test_rnn=11, noisy_fraction=0.5
    ) -> Dict[str, Dict[str, Dict[str, int]]]:
        return {
            "train": {"CNN": _split(train_cnn, noisy_fraction), "RNN": _split(train_rnn, noisy_fraction)},
            "test": {"CNN": _split(test_cnn, noisy_fraction), "RNN": _split(test_rnn, noisy_fraction)},
        }

    def count(self, role: str, label=None) -> int:
        by_label = self.counts.get(role, {})
        labels = [Label(label).value] if label is not None else list(by_label)
        return sum(sum(by_label.get(lab, {}).values()) for lab in labels)

    def plan(self) -> List[Tuple[str, Label, Condition, int]]:
        """(role, label, condition, index) for every session, in file order."""
        out = []
        for role in ROLES:
            i = 0
            for label in LABELS:
                for cond in (Condition.IDEAL, Condition.NOISY):
                    for _ in range(int(self.counts.get(role, {}).get(label.value, {}).get(cond.value, 0))):
                        out.append((role, label, cond, i))
                        i += 1
        return out

    def session_seed(self, role: str, index: int) -> int:
        ss = np.random.SeedSequence([int(self.base_seed) & (2**64 - 1), ROLES.index(role), int(index)])
        return int(ss.generate_state(1, np.uint64)[0])


def jittered_profile(profile: WorkloadProfile, rng, jitter: float) -> WorkloadProfile:
    if jitter == 0:
        return profile
    f = lambda: float(rng.uniform(1 - jitter, 1 + jitter))  # noqa: E731
    return replace(
        profile,
        rounds=max(1, int(round(profile.rounds * f()))),
        downlink_bytes=max(1, int(round(profile.downlink_bytes * f()))),
        uplink_bytes=max(1, int(round(profile.uplink_bytes * f()))),
        compute_gap_dist=Scaled(profile.compute_gap_dist, f()),
    )


def corpus_session(
    spec: CorpusSpec,
    profile: WorkloadProfile,
    condition: Condition,
    seed: int,
    noise: NoiseProfile = DEFAULT_NOISE,
    session_id: str = "",
) -> TraceSession:
    """Regenerate one corpus session from its manifest seed."""
    rng = np.random.default_rng([seed, 0])
    prof = jittered_profile(profile, rng, spec.jitter)
    session = generate_session(prof, [seed, 1], session_id)
    if Condition(condition) is Condition.NOISY:
        noisy = replace(noise, rate=noise.rate * float(rng.uniform(1 - spec.jitter, 1 + spec.jitter)))
        session = inject_noise(session, noisy, [seed, 2])
    return session


@dataclass(frozen=True)
class ManifestRow:
    path: str  # relative to the corpus root
    role: str
    label: Label
    condition: Condition
    seed: int


MANIFEST_HEADER = ("path", "role", "label", "condition", "seed")
MANIFEST_NAME = "manifest.csv"


def generate_corpus(
    spec: CorpusSpec,
    out_dir,
    cnn_profile: Optional[WorkloadProfile] = None,
    rnn_profile: Optional[WorkloadProfile] = None,
    noise: NoiseProfile = DEFAULT_NOISE,
) -> List[ManifestRow]:
    """Write ``<out>/{train,test}/<label>_<condition>_<index>.pcap`` files
    and ``<out>/manifest.csv``; returns the manifest rows."""
    if cnn_profile is None or rnn_profile is None:
        d_cnn, d_rnn = default_profiles()
        cnn_profile = cnn_profile or d_cnn
        rnn_profile = rnn_profile or d_rnn
    profiles = {Label.CNN: cnn_profile, Label.RNN: rnn_profile}
    out = Path(out_dir)
    rows = []
    for role, label, cond, i in spec.plan():
        seed = spec.session_seed(role, i)
        rel = f"{role}/{label.value}_{cond.value}_{i}.pcap"
        session = corpus_session(spec, profiles[label], cond, seed, noise, session_id=rel)
        _write_bytes(out / rel, write_pcap(session, spec.server, spec.client, snaplen=spec.snaplen))
        rows.append(ManifestRow(rel, role, label, cond, seed))
    write_manifest(out, rows)
    return rows


def _write_bytes(path: Path, data: bytes):
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_bytes(data)
    except OSError as exc:
        raise IoFailure(path, exc.strerror or exc) from exc


def write_manifest(out_dir, rows: Sequence[ManifestRow]) -> Path:
    path = Path(out_dir) / MANIFEST_NAME
    lines = [",".join(MANIFEST_HEADER)]
    lines += [f"{r.path},{r.role},{r.label.value},{r.condition.value},{r.seed}" for r in rows]
    _write_bytes(path, ("\n".join(lines) + "\n").encode())
    return path


def read_manifest(path) -> List[ManifestRow]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise IoFailure(path, exc.strerror or exc) from exc
    reader = csv.reader(text.splitlines())
    header = next(reader, None)
    if header is None or tuple(header) != MANIFEST_HEADER:
        raise SchemaMismatch(f"{path}: expected header {','.join(MANIFEST_HEADER)}")
    return [
        ManifestRow(p, role, Label(lab), Condition(cond), int(seed))
        for p, role, lab, cond, seed in (row for row in reader if row)
    ]


def file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()
