"""Wire format for the constrained link, plus content chunking arithmetic.

On-wire frame layout (5-byte header + payload):
=================================================================
| Offset | Size | Field                                          |
|--------|------|------------------------------------------------|
| 0      | 1    | version(2 bits) type(2) last(1) ack_ok(1) rsv(2)|
| 1      | 1    | sender node id                                 |
| 2      | 1    | recipient node id                              |
| 3      | 1    | request id (wrapping counter)                  |
| 4      | 1    | chunk id (DATA only, 0 otherwise)              |
| 5      | N    | payload                                        |
=================================================================

Payload by type:
- REQUEST: UTF-8 URL text
- DATA:    one content chunk (empty only on a final chunk)
- ACK:     empty; ack_ok bit 1 = received, 0 = not received
- ERROR:   2 bytes, big-endian HTTP-style status code

A 250-byte chunk plus the 5-byte header fills a 255-byte radio FIFO,
which is why chunk capacities are quoted as content bytes excluding
the header.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from enum import IntEnum

HEADER_LEN = 5
MAX_FRAME_BYTES = 255
MAX_CHUNKS = 256  # chunk id is one byte

_VERSION = 1


class FrameType(IntEnum):
    REQUEST = 0
    DATA = 1
    ACK = 2
    ERROR = 3


class FrameError(Exception):
    """Base class for encode/decode/chunking failures."""


class OversizePayload(FrameError):
    pass


class FieldRange(FrameError):
    pass


class TooShort(FrameError):
    pass


class BadVersion(FrameError):
    pass


class BadType(FrameError):
    pass


class BadErrorPayload(FrameError):
    pass


class TooLarge(FrameError):
    pass


class Incomplete(FrameError):
    pass


@dataclass(frozen=True)
class Frame:
    ftype: FrameType
    sender: int
    recipient: int
    request_id: int
    chunk_id: int = 0
    last: bool = False
    ack_ok: bool = False
    payload: bytes = b""
    version: int = _VERSION

    @classmethod
    def request(cls, sender: int, recipient: int, request_id: int, url: str) -> "Frame":
        return cls(FrameType.REQUEST, sender, recipient, request_id,
                   payload=url.encode("utf-8"))

    @classmethod
    def data(cls, sender: int, recipient: int, request_id: int, chunk_id: int,
             payload: bytes, last: bool) -> "Frame":
        return cls(FrameType.DATA, sender, recipient, request_id,
                   chunk_id=chunk_id, last=last, payload=payload)

    @classmethod
    def ack(cls, sender: int, recipient: int, request_id: int, ok: bool = True) -> "Frame":
        return cls(FrameType.ACK, sender, recipient, request_id, ack_ok=ok)

    @classmethod
    def error(cls, sender: int, recipient: int, request_id: int, status: int) -> "Frame":
        return cls(FrameType.ERROR, sender, recipient, request_id,
                   payload=struct.pack(">H", status))

    def error_status(self) -> int:
        if self.ftype is not FrameType.ERROR or len(self.payload) != 2:
            raise BadErrorPayload(f"not an ERROR frame: {self}")
        return struct.unpack(">H", self.payload)[0]

    def __repr__(self) -> str:
        flags = []
        if self.last:
            flags.append("last")
        if self.ack_ok:
            flags.append("ack_ok")
        return (f"Frame({self.ftype.name}, {self.sender}->{self.recipient}, "
                f"rid={self.request_id}, chunk={self.chunk_id}, "
                f"flags={'|'.join(flags) or '-'}, len={len(self.payload)})")


def _check_byte(name: str, value: int) -> None:
    if not isinstance(value, int) or not 0 <= value <= 255:
        raise FieldRange(f"{name} must be 0..255, got {value!r}")


def encode_frame(f: Frame, max_frame_bytes: int = MAX_FRAME_BYTES) -> bytes:
    """Serialize a frame, enforcing the per-type invariants."""
    if f.version != _VERSION:
        raise FieldRange(f"unsupported version {f.version}")
    if not isinstance(f.ftype, FrameType):
        raise FieldRange(f"bad frame type {f.ftype!r}")
    _check_byte("sender", f.sender)
    _check_byte("recipient", f.recipient)
    _check_byte("request_id", f.request_id)
    _check_byte("chunk_id", f.chunk_id)
    if len(f.payload) > max_frame_bytes - HEADER_LEN:
        raise OversizePayload(
            f"payload {len(f.payload)}B exceeds {max_frame_bytes - HEADER_LEN}B")

    if f.ftype is not FrameType.DATA:
        if f.chunk_id != 0:
            raise FieldRange("chunk_id must be 0 on non-DATA frames")
        if f.last:
            raise FieldRange("last flag is DATA-only")
    if f.ftype is not FrameType.ACK and f.ack_ok:
        raise FieldRange("ack_ok flag is ACK-only")
    if f.ftype is FrameType.ACK and f.payload:
        raise FieldRange("ACK payload must be empty")
    if f.ftype is FrameType.ERROR and len(f.payload) != 2:
        raise BadErrorPayload(f"ERROR payload must be 2 bytes, got {len(f.payload)}")
    if f.ftype is FrameType.DATA and not f.payload and not f.last:
        raise FieldRange("empty DATA payload allowed only on the final chunk")

    byte0 = ((f.version & 0x3) << 6) | ((f.ftype & 0x3) << 4)
    if f.last:
        byte0 |= 0x08
    if f.ack_ok:
        byte0 |= 0x04
    return bytes((byte0, f.sender, f.recipient, f.request_id, f.chunk_id)) + f.payload


def decode_frame(data: bytes) -> Frame:
    """Parse arbitrary bytes into a Frame or raise a typed FrameError.

    Reserved header bits are ignored; flag bits are decoded as-is even on
    types that never legitimately carry them (receivers filter by type).
    """
    if len(data) < HEADER_LEN:
        raise TooShort(f"frame needs >= {HEADER_LEN} bytes, got {len(data)}")
    byte0 = data[0]
    version = (byte0 >> 6) & 0x3
    if version != _VERSION:
        raise BadVersion(f"unsupported version {version}")
    try:
        ftype = FrameType((byte0 >> 4) & 0x3)
    except ValueError as exc:  # unreachable with a 2-bit field, kept for safety
        raise BadType(str(exc)) from exc
    payload = data[HEADER_LEN:]
    if ftype is FrameType.ERROR and len(payload) != 2:
        raise BadErrorPayload(f"ERROR payload must be 2 bytes, got {len(payload)}")
    return Frame(
        ftype=ftype,
        sender=data[1],
        recipient=data[2],
        request_id=data[3],
        chunk_id=data[4],
        last=bool(byte0 & 0x08),
        ack_ok=bool(byte0 & 0x04),
        payload=bytes(payload),
        version=version,
    )


@dataclass(frozen=True)
class ChunkSet:
    """Ordered chunks of one content body; ids are the gapless range 0..total-1."""
    request_id: int
    chunks: tuple[tuple[int, bytes], ...]
    total: int = field(default=0)

    def __iter__(self):
        return iter(self.chunks)


def chunk_payload(content: bytes, chunk_capacity: int, request_id: int = 0) -> ChunkSet:
    """Slice content into at most 256 chunks of chunk_capacity bytes each.

    Empty content yields a single empty final chunk so that every request
    produces at least one DATA frame.
    """
    if chunk_capacity < 1:
        raise FieldRange(f"chunk_capacity must be >= 1, got {chunk_capacity}")
    if len(content) > MAX_CHUNKS * chunk_capacity:
        raise TooLarge(
            f"{len(content)}B needs more than {MAX_CHUNKS} chunks of {chunk_capacity}B")
    total = max(1, -(-len(content) // chunk_capacity))
    chunks = tuple(
        (i, bytes(content[i * chunk_capacity:(i + 1) * chunk_capacity]))
        for i in range(total)
    )
    return ChunkSet(request_id=request_id, chunks=chunks, total=total)


def reassemble(chunks, last_chunk_id: int | None = None) -> bytes:
    """Concatenate received chunks in id order.

    `chunks` maps chunk_id -> bytes; `last_chunk_id` is the id carried by the
    final-flagged chunk (defaults to the highest id present). Raises
    Incomplete when any id before the last is missing.
    """
    if last_chunk_id is None:
        if not chunks:
            raise Incomplete("no chunks received")
        last_chunk_id = max(chunks)
    missing = [i for i in range(last_chunk_id + 1) if i not in chunks]
    if missing:
        raise Incomplete(f"missing chunk ids {missing} before last={last_chunk_id}")
    return b"".join(chunks[i] for i in range(last_chunk_id + 1))
