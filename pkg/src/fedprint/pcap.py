"""Classic libpcap reading and writing.

Reading accepts both byte orders and both timestamp resolutions (micro and
nano). Writing always produces little-endian, microsecond-resolution files
with synthetic Ethernet/IPv4/TCP headers.
"""
from __future__ import annotations

import struct
from typing import Optional

import numpy as np

from .errors import EmptySession, FrameTooSmall, MalformedCapture, UnsupportedLinkType
from .session import (
    DEFAULT_CLIENT,
    DEFAULT_SERVER,
    CaptureConfig,
    Direction,
    Endpoint,
    Label,
    TraceSession,
)

LINKTYPE_ETHERNET = 1
LINKTYPE_RAW = 101

_MAGICS = {
    # first four bytes -> (byte order, ticks per second)
    b"\xd4\xc3\xb2\xa1": ("<", 1_000_000),
    b"\x4d\x3c\xb2\xa1": ("<", 1_000_000_000),
    b"\xa1\xb2\xc3\xd4": (">", 1_000_000),
    b"\xa1\xb2\x3c\x4d": (">", 1_000_000_000),
}

GLOBAL_HEADER_LEN = 24
RECORD_HEADER_LEN = 16
ETH_HEADER_LEN = 14
HEADERS_LEN = 54  # Ethernet + IPv4 + TCP, no options
MAX_FRAME = 65535

_ETH_IPV4 = 0x0800
_ETH_VLAN = (0x8100, 0x88A8)
_TCP, _UDP = 6, 17


def parse_pcap(
    raw: bytes,
    config: CaptureConfig = CaptureConfig(),
    *,
    label: Optional[Label] = None,
    condition="Ideal",
    session_id: str = "",
) -> TraceSession:
    """Decode a capture into a session of packets to/from the server.

    Non-IPv4, non-TCP/UDP, fragment-tail and unrelated packets are skipped.
    Frame lengths come from the on-wire ``orig_len`` field. Timestamps are
    sorted and shifted so the first retained packet sits at 0.
    """
    raw = bytes(raw)
    if len(raw) < GLOBAL_HEADER_LEN:
        raise MalformedCapture(f"capture shorter than global header ({len(raw)} bytes)")
    try:
        order, ticks = _MAGICS[raw[:4]]
    except KeyError:
        raise MalformedCapture(f"bad pcap magic {raw[:4].hex()}") from None
    network = struct.unpack_from(order + "I", raw, 20)[0] & 0x0FFFFFFF
    if network not in config.link_types_accepted:
        raise UnsupportedLinkType(f"link type {network} not in {sorted(config.link_types_accepted)}")

    server = (config.server_endpoint.packed, config.server_endpoint.port)
    clients = None
    if config.client_filter is not None:
        clients = {(c.packed, c.port) for c in config.client_filter}

    rec = struct.Struct(order + "IIII")
    ports = struct.Struct("!HH")
    times, lengths, dirs = [], [], []
    off, end = GLOBAL_HEADER_LEN, len(raw)
    while off < end:
        if end - off < RECORD_HEADER_LEN:
            raise MalformedCapture(f"truncated record header at offset {off}")
        sec, frac, incl, orig = rec.unpack_from(raw, off)
        off += RECORD_HEADER_LEN
        if incl > end - off:
            raise MalformedCapture(f"truncated packet data at offset {off}")
        pkt = raw[off:off + incl]
        off += incl

        ip = _ipv4_offset(pkt, network)
        if ip is None or len(pkt) < ip + 20:
            continue
        vihl = pkt[ip]
        if vihl >> 4 != 4:
            continue
        ihl = (vihl & 0x0F) * 4
        proto = pkt[ip + 9]
        frag = struct.unpack_from("!H", pkt, ip + 6)[0] & 0x1FFF
        if proto not in (_TCP, _UDP) or frag or ihl < 20 or len(pkt) < ip + ihl + 4:
            continue
        sport, dport = ports.unpack_from(pkt, ip + ihl)
        src = (pkt[ip + 12:ip + 16], sport)
        dst = (pkt[ip + 16:ip + 20], dport)
        if src == server and dst != server:
            direction, peer = Direction.DOWNLINK, dst
        elif dst == server and src != server:
            direction, peer = Direction.UPLINK, src
        else:
            continue
        if clients is not None and peer not in clients:
            continue
        times.append(sec * ticks + frac)
        lengths.append(orig if orig else incl)
        dirs.append(int(direction))

    if not times:
        raise EmptySession("no IPv4 TCP/UDP packets to or from the server endpoint")
    ticks_arr = np.array(times, dtype=np.int64)
    order_idx = np.argsort(ticks_arr, kind="stable")
    ticks_arr = ticks_arr[order_idx]
    return TraceSession(
        (ticks_arr - ticks_arr[0]) / ticks,
        np.array(lengths, dtype=np.int64)[order_idx],
        np.array(dirs, dtype=np.int8)[order_idx],
        label=label,
        condition=condition,
        session_id=session_id,
    )


def _ipv4_offset(pkt: bytes, network: int) -> Optional[int]:
    if network == LINKTYPE_RAW:
        return 0
    if len(pkt) < ETH_HEADER_LEN:
        return None
    off = 12
    ethertype = struct.unpack_from("!H", pkt, off)[0]
    while ethertype in _ETH_VLAN and len(pkt) >= off + 6:
        off += 4
        ethertype = struct.unpack_from("!H", pkt, off)[0]
    return off + 2 if ethertype == _ETH_IPV4 else None


def _ones_sum(data: bytes) -> int:
    total = sum(struct.unpack(f"!{len(data) // 2}H", data))
    while total >> 16:
        total = (total & 0xFFFF) + (total >> 16)
    return total


def write_pcap(
    session: TraceSession,
    server: Endpoint = DEFAULT_SERVER,
    client: Endpoint = DEFAULT_CLIENT,
    *,
    snaplen: int = MAX_FRAME,
) -> bytes:
    """Serialize a session as a classic pcap (Ethernet link type).

    Uplink packets go client -> server. Frames are padded with zero payload
    up to ``frame_length`` and truncated on disk to ``snaplen`` bytes; the
    record's ``orig_len`` always carries the full frame length.
    TCP sequence/ack numbers and checksums are left zero.
    """
    if len(session) == 0:
        raise EmptySession(f"session {session.session_id!r} has no packets")
    if snaplen < HEADERS_LEN:
        raise ValueError(f"snaplen must be >= {HEADERS_LEN}")
    small = session.frame_lengths < HEADERS_LEN
    if small.any():
        bad = int(session.frame_lengths[np.argmax(small)])
        raise FrameTooSmall(f"frame_length {bad} cannot carry {HEADERS_LEN} header bytes")
    if session.frame_lengths.max() > MAX_FRAME:
        raise FrameTooSmall(f"frame_length above {MAX_FRAME} cannot be encoded in IPv4")

    templates = {}
    for direction, (src, dst) in (
        (1, (client, server)),
        (-1, (server, client)),
    ):
        smac = b"\x02\x00\x00\x00\x00" + bytes([2 if direction == 1 else 1])
        dmac = b"\x02\x00\x00\x00\x00" + bytes([1 if direction == 1 else 2])
        eth = dmac + smac + struct.pack("!H", _ETH_IPV4)
        # total length and checksum are patched per packet
        ip = struct.pack("!BBHHHBBH4s4s", 0x45, 0, 0, 0, 0x4000, 64, _TCP, 0, src.packed, dst.packed)
        tcp = struct.pack("!HHIIBBHHH", src.port, dst.port, 0, 0, 5 << 4, 0x18, 65535, 0, 0)
        templates[direction] = (eth, ip, tcp, _ones_sum(ip))

    out = [struct.pack("<IHHiIII", 0xA1B2C3D4, 2, 4, 0, 0, snaplen, LINKTYPE_ETHERNET)]
    rec = struct.Struct("<IIII")
    zeros = bytes(MAX_FRAME)
    for t, n, d in zip(session.timestamps.tolist(), session.frame_lengths.tolist(), session.directions.tolist()):
        eth, ip, tcp, base = templates[d]
        total_len = n - ETH_HEADER_LEN
        s = base + total_len
        s = (s & 0xFFFF) + (s >> 16)
        csum = ~s & 0xFFFF
        ip_hdr = ip[:2] + struct.pack("!H", total_len) + ip[4:10] + struct.pack("!H", csum) + ip[12:]
        incl = min(n, snaplen)
        usec = int(round(t * 1_000_000))
        out.append(rec.pack(usec // 1_000_000, usec % 1_000_000, incl, n))
        frame = eth + ip_hdr + tcp
        out.append(frame[:incl])
        if incl > HEADERS_LEN:
            out.append(zeros[: incl - HEADERS_LEN])
    return b"".join(out)
