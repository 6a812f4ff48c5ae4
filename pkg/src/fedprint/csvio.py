"""Per-packet CSV export/import.

Header: ``timestamp_s,frame_len_bytes,direction,interarrival_s``. Floats are
written in their shortest round-trip positional form padded to at least six
fractional digits, so reading back reproduces every value bit for bit.
"""
from __future__ import annotations

import csv
import io
import math
from typing import Iterable, TextIO, Union

import numpy as np

from .errors import EmptySession, RowParseError, SchemaMismatch
from .session import Label, TraceSession

HEADER = ("timestamp_s", "frame_len_bytes", "direction", "interarrival_s")


def format_float(x: float, min_digits: int = 6) -> str:
    s = np.format_float_positional(float(x), unique=True, trim="-")
    whole, _, frac = s.partition(".")
    return f"{whole}.{frac.ljust(min_digits, '0')}"


def write_csv(session: TraceSession) -> str:
    if len(session) == 0:
        raise EmptySession(f"session {session.session_id!r} has no packets")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(HEADER)
    prev = None
    for t, n, d in zip(session.timestamps.tolist(), session.frame_lengths.tolist(), session.directions.tolist()):
        ia = "" if prev is None else format_float(t - prev)
        w.writerow((format_float(t), n, "+1" if d > 0 else "-1", ia))
        prev = t
    return buf.getvalue()


def read_csv(
    text: Union[str, TextIO, Iterable[str]],
    *,
    label: Label = None,
    condition="Ideal",
    session_id: str = "",
) -> TraceSession:
    """Parse a per-packet CSV. The interarrival column is ignored and rows
    are stably sorted by timestamp."""
    if isinstance(text, str):
        text = io.StringIO(text)
    rows = csv.reader(text)
    header = next(rows, None)
    if header is None or tuple(h.strip() for h in header) != HEADER:
        raise SchemaMismatch(f"expected header {','.join(HEADER)!r}, got {header!r}")
    times, lengths, dirs = [], [], []
    for i, row in enumerate(rows, start=1):
        if not row:
            continue
        if len(row) != len(HEADER):
            raise RowParseError(i, f"expected {len(HEADER)} fields, got {len(row)}")
        try:
            t = float(row[0])
        except ValueError:
            raise RowParseError(i, f"bad timestamp {row[0]!r}") from None
        if not math.isfinite(t) or t < 0:
            raise RowParseError(i, f"timestamp must be finite and >= 0, got {row[0]!r}")
        try:
            n = int(row[1])
        except ValueError:
            raise RowParseError(i, f"bad frame length {row[1]!r}") from None
        if n < 1:
            raise RowParseError(i, f"frame length must be >= 1, got {n}")
        d = row[2].strip()
        if d not in ("+1", "1", "-1"):
            raise RowParseError(i, f"direction must be +1 or -1, got {d!r}")
        times.append(t)
        lengths.append(n)
        dirs.append(-1 if d == "-1" else 1)
    if not times:
        raise EmptySession("CSV has no data rows")
    order = np.argsort(np.asarray(times), kind="stable")
    return TraceSession(
        np.asarray(times)[order],
        np.asarray(lengths)[order],
        np.asarray(dirs)[order],
        label=label,
        condition=condition,
        session_id=session_id,
    )
