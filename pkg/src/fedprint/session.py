"""Packet-level session model shared by ingestion, features and synthesis.

A session is stored column-wise (timestamps, frame lengths, directions) as
read-only numpy arrays. ``PacketRecord`` is the row view.
"""
from __future__ import annotations

import enum
import ipaddress
import math
from dataclasses import dataclass, replace
from typing import Iterable, List, Optional

import numpy as np

from .errors import AmbiguousDirection, ConfigError, EmptySession


class Label(str, enum.Enum):
    CNN = "CNN"
    RNN = "RNN"

    @property
    def sign(self) -> int:
        return 1 if self is Label.CNN else -1

    @classmethod
    def from_sign(cls, s: float) -> "Label":
        return cls.CNN if s >= 0 else cls.RNN

    def other(self) -> "Label":
        return Label.RNN if self is Label.CNN else Label.CNN

    def __str__(self):
        return self.value


LABELS = (Label.CNN, Label.RNN)


class Condition(str, enum.Enum):
    IDEAL = "Ideal"
    NOISY = "Noisy"

    def __str__(self):
        return self.value


class Direction(enum.IntEnum):
    UPLINK = 1  # client -> server
    DOWNLINK = -1


@dataclass(frozen=True)
class Endpoint:
    ip: str
    port: int

    def __post_init__(self):
        try:
            addr = ipaddress.IPv4Address(self.ip)
        except ValueError as exc:
            raise ConfigError(f"bad IPv4 address {self.ip!r}") from exc
        object.__setattr__(self, "ip", str(addr))
        if not 0 <= int(self.port) <= 65535:
            raise ConfigError(f"port {self.port} outside [0, 65535]")

    @property
    def packed(self) -> bytes:
        return ipaddress.IPv4Address(self.ip).packed

    @classmethod
    def parse(cls, text: str) -> "Endpoint":
        host, _, port = text.rpartition(":")
        if not host:
            raise ConfigError(f"endpoint must look like ip:port, got {text!r}")
        return cls(host, int(port))

    def __str__(self):
        return f"{self.ip}:{self.port}"


DEFAULT_SERVER = Endpoint("10.0.0.1", 8080)
DEFAULT_CLIENT = Endpoint("10.0.0.2", 5001)


@dataclass(frozen=True)
class CaptureConfig:
    server_endpoint: Endpoint = DEFAULT_SERVER
    client_filter: Optional[tuple] = None
    link_types_accepted: frozenset = frozenset({1, 101})

    def __post_init__(self):
        if not self.link_types_accepted:
            raise ConfigError("link_types_accepted must not be empty")
        if self.client_filter is not None:
            object.__setattr__(self, "client_filter", tuple(self.client_filter))


def infer_direction(src: Endpoint, dst: Endpoint, config: CaptureConfig) -> Direction:
    server = config.server_endpoint
    if (src == server) == (dst == server):
        raise AmbiguousDirection(f"cannot orient {src} -> {dst} against server {server}")
    return Direction.UPLINK if dst == server else Direction.DOWNLINK


@dataclass(frozen=True)
class PacketRecord:
    timestamp: float
    frame_length: int
    direction: Direction

    def __post_init__(self):
        if self.frame_length < 1:
            raise ValueError(f"frame_length must be >= 1, got {self.frame_length}")
        if not self.timestamp >= 0:
            raise ValueError(f"timestamp must be >= 0, got {self.timestamp}")


def _frozen(a, dtype):
    arr = np.array(a, dtype=dtype)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class TraceSession:
    timestamps: np.ndarray
    frame_lengths: np.ndarray
    directions: np.ndarray
    label: Optional[Label] = None
    condition: Condition = Condition.IDEAL
    session_id: str = ""

    def __post_init__(self):
        ts = _frozen(self.timestamps, np.float64).reshape(-1)
        lens = _frozen(self.frame_lengths, np.int64).reshape(-1)
        dirs = _frozen(self.directions, np.int8).reshape(-1)
        if not len(ts) == len(lens) == len(dirs):
            raise ValueError("column lengths differ")
        if len(ts):
            if not np.all(np.isfinite(ts)) or ts.min() < 0:
                raise ValueError("timestamps must be finite and >= 0")
            if np.any(np.diff(ts) < 0):
                raise ValueError("timestamps must be non-decreasing")
            if lens.min() < 1:
                raise ValueError("frame lengths must be >= 1")
            if not np.all(np.abs(dirs) == 1):
                raise ValueError("directions must be +1 or -1")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "frame_lengths", lens)
        object.__setattr__(self, "directions", dirs)
        if self.label is not None:
            object.__setattr__(self, "label", Label(self.label))
        object.__setattr__(self, "condition", Condition(self.condition))

    @classmethod
    def from_packets(cls, packets: Iterable[PacketRecord], **kw) -> "TraceSession":
        packets = sorted(packets, key=lambda p: p.timestamp)
        return cls(
            [p.timestamp for p in packets],
            [p.frame_length for p in packets],
            [int(p.direction) for p in packets],
            **kw,
        )

    def __len__(self):
        return len(self.timestamps)

    @property
    def packets(self) -> List[PacketRecord]:
        return [
            PacketRecord(float(t), int(n), Direction(int(d)))
            for t, n, d in zip(self.timestamps, self.frame_lengths, self.directions)
        ]

    def same_packets(self, other: "TraceSession") -> bool:
        return (
            np.array_equal(self.timestamps, other.timestamps)
            and np.array_equal(self.frame_lengths, other.frame_lengths)
            and np.array_equal(self.directions, other.directions)
        )

    def with_meta(self, **kw) -> "TraceSession":
        return replace(self, **kw)


def segment_session(session: TraceSession, window: float) -> List[TraceSession]:
    """Split into half-open windows ``[k*window, (k+1)*window)`` measured
    from the first packet. Empty windows are dropped; metadata is inherited
    and each segment id gets a ``#w<k>`` suffix."""
    if not window > 0 or not math.isfinite(window):
        raise ConfigError(f"window must be a positive finite number, got {window}")
    if len(session) == 0:
        raise EmptySession(f"session {session.session_id!r} has no packets")
    ts = session.timestamps
    k = np.floor((ts - ts[0]) / window).astype(np.int64)
    cuts = np.flatnonzero(np.diff(k)) + 1
    bounds = [0, *cuts.tolist(), len(ts)]
    out = []
    for lo, hi in zip(bounds[:-1], bounds[1:]):
        out.append(
            TraceSession(
                ts[lo:hi],
                session.frame_lengths[lo:hi],
                session.directions[lo:hi],
                label=session.label,
                condition=session.condition,
                session_id=f"{session.session_id}#w{int(k[lo])}",
            )
        )
    return out
