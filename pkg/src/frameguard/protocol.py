"""Length-prefixed binary protocol between match server and agent client.

Every message on the wire is a frame:

    u32 length (big-endian) | payload of exactly `length` bytes

and every payload starts with a one-byte message type:

    type  name        payload after the type byte
    0x01  HELLO       name: u8 len + UTF-8 bytes (<= 64), role: u8, version: u8
    0x02  HELLO_ACK   accepted: u8, frame_period_us: u32
    0x03  ROUND_START round_id: u32, frames: u32, hp_total: u32
    0x04  FRAME       round_id: u32, frame_id: u32, hp_self: u32,
                      hp_opp: u32, send_ts_us: u64
    0x05  ACTION      frame_id: u32, action_code: u8,
                      reported_processing_us: u32
    0x06  ROUND_END   round_id: u32, hp_self: u32, hp_opp: u32,
                      elapsed_frames: u32, frames_processed: u32,
                      frames_skipped: u32
    0x07  MATCH_END   rounds: u32

All multi-byte integers are big-endian and unsigned. send_ts_us is the
only 64-bit field: it carries a monotonic microsecond clock, which
overflows 32 bits in about 71 minutes of uptime. A frame longer than
65536 bytes is rejected before its payload is read, so a corrupt or
hostile length prefix cannot make the decoder buffer unbounded input.

decode() is incremental: it returns None when the buffer does not yet
hold a complete frame and never consumes partial input, so it can be
called on a growing receive buffer. StreamDecoder wraps that pattern for
socket readers. A StreamDecoder instance is single-owner; it holds
undecoded bytes between feeds and is not locked.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from typing import Optional, Union

PROTOCOL_VERSION = 1
MAX_FRAME_BYTES = 65536
MAX_NAME_BYTES = 64

ROLE_SANDBOX = 0
ROLE_PLAYER = 1

MSG_HELLO = 0x01
MSG_HELLO_ACK = 0x02
MSG_ROUND_START = 0x03
MSG_FRAME = 0x04
MSG_ACTION = 0x05
MSG_ROUND_END = 0x06
MSG_MATCH_END = 0x07


class ProtocolError(Exception):
    """Malformed or out-of-contract bytes on the wire."""


class EncodeError(ValueError):
    """A message field does not fit its wire representation."""


@dataclass(frozen=True)
class Hello:
    name: str
    role: int
    version: int = PROTOCOL_VERSION


@dataclass(frozen=True)
class HelloAck:
    accepted: int
    frame_period_us: int


@dataclass(frozen=True)
class RoundStart:
    round_id: int
    frames: int
    hp_total: int


@dataclass(frozen=True)
class Frame:
    round_id: int
    frame_id: int
    hp_self: int
    hp_opp: int
    send_ts_us: int


@dataclass(frozen=True)
class Action:
    frame_id: int
    action_code: int
    reported_processing_us: int


@dataclass(frozen=True)
class RoundEnd:
    round_id: int
    hp_self: int
    hp_opp: int
    elapsed_frames: int
    frames_processed: int
    frames_skipped: int


@dataclass(frozen=True)
class MatchEnd:
    rounds: int


Message = Union[Hello, HelloAck, RoundStart, Frame, Action, RoundEnd, MatchEnd]

_HEADER = struct.Struct(">I")


def _u8(value: int, field: str) -> int:
    if not 0 <= value <= 0xFF:
        raise EncodeError(f"{field}={value} does not fit in u8")
    return value


def _u32(value: int, field: str) -> int:
    if not 0 <= value <= 0xFFFFFFFF:
        raise EncodeError(f"{field}={value} does not fit in u32")
    return value


def _u64(value: int, field: str) -> int:
    if not 0 <= value <= 0xFFFFFFFFFFFFFFFF:
        raise EncodeError(f"{field}={value} does not fit in u64")
    return value


def _pack_body(msg: Message) -> bytes:
    if isinstance(msg, Hello):
        raw = msg.name.encode("utf-8")
        if len(raw) > MAX_NAME_BYTES:
            raise EncodeError(f"name is {len(raw)} bytes, limit {MAX_NAME_BYTES}")
        return (
            bytes([MSG_HELLO, len(raw)])
            + raw
            + bytes([_u8(msg.role, "role"), _u8(msg.version, "version")])
        )
    if isinstance(msg, HelloAck):
        return struct.pack(
            ">BBI",
            MSG_HELLO_ACK,
            _u8(msg.accepted, "accepted"),
            _u32(msg.frame_period_us, "frame_period_us"),
        )
    if isinstance(msg, RoundStart):
        return struct.pack(
            ">BIII",
            MSG_ROUND_START,
            _u32(msg.round_id, "round_id"),
            _u32(msg.frames, "frames"),
            _u32(msg.hp_total, "hp_total"),
        )
    if isinstance(msg, Frame):
        return struct.pack(
            ">BIIIIQ",
            MSG_FRAME,
            _u32(msg.round_id, "round_id"),
            _u32(msg.frame_id, "frame_id"),
            _u32(msg.hp_self, "hp_self"),
            _u32(msg.hp_opp, "hp_opp"),
            _u64(msg.send_ts_us, "send_ts_us"),
        )
    if isinstance(msg, Action):
        return struct.pack(
            ">BIBI",
            MSG_ACTION,
            _u32(msg.frame_id, "frame_id"),
            _u8(msg.action_code, "action_code"),
            _u32(msg.reported_processing_us, "reported_processing_us"),
        )
    if isinstance(msg, RoundEnd):
        return struct.pack(
            ">BIIIIII",
            MSG_ROUND_END,
            _u32(msg.round_id, "round_id"),
            _u32(msg.hp_self, "hp_self"),
            _u32(msg.hp_opp, "hp_opp"),
            _u32(msg.elapsed_frames, "elapsed_frames"),
            _u32(msg.frames_processed, "frames_processed"),
            _u32(msg.frames_skipped, "frames_skipped"),
        )
    if isinstance(msg, MatchEnd):
        return struct.pack(">BI", MSG_MATCH_END, _u32(msg.rounds, "rounds"))
    raise EncodeError(f"not a protocol message: {type(msg).__name__}")


def encode(msg: Message) -> bytes:
    body = _pack_body(msg)
    return _HEADER.pack(len(body)) + body


def _parse_hello(payload: bytes) -> Hello:
    if len(payload) < 1:
        raise ProtocolError("HELLO payload truncated")
    n = payload[0]
    if n > MAX_NAME_BYTES:
        raise ProtocolError(f"HELLO name length {n} exceeds {MAX_NAME_BYTES}")
    if len(payload) != 1 + n + 2:
        raise ProtocolError(
            f"HELLO payload is {len(payload)} bytes, expected {1 + n + 2}"
        )
    try:
        name = payload[1 : 1 + n].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ProtocolError(f"HELLO name is not valid UTF-8: {exc}") from None
    return Hello(name=name, role=payload[1 + n], version=payload[2 + n])


def _fixed(fmt: str, cls, names, payload: bytes):
    want = struct.calcsize(fmt)
    if len(payload) != want:
        raise ProtocolError(
            f"{cls.__name__} payload is {len(payload)} bytes, expected {want}"
        )
    return cls(**dict(zip(names, struct.unpack(fmt, payload))))


_PARSERS = {
    MSG_HELLO: _parse_hello,
    MSG_HELLO_ACK: lambda p: _fixed(">BI", HelloAck, ("accepted", "frame_period_us"), p),
    MSG_ROUND_START: lambda p: _fixed(
        ">III", RoundStart, ("round_id", "frames", "hp_total"), p
    ),
    MSG_FRAME: lambda p: _fixed(
        ">IIIIQ", Frame, ("round_id", "frame_id", "hp_self", "hp_opp", "send_ts_us"), p
    ),
    MSG_ACTION: lambda p: _fixed(
        ">IBI", Action, ("frame_id", "action_code", "reported_processing_us"), p
    ),
    MSG_ROUND_END: lambda p: _fixed(
        ">IIIIII",
        RoundEnd,
        (
            "round_id",
            "hp_self",
            "hp_opp",
            "elapsed_frames",
            "frames_processed",
            "frames_skipped",
        ),
        p,
    ),
    MSG_MATCH_END: lambda p: _fixed(">I", MatchEnd, ("rounds",), p),
}


def decode(data) -> Optional[tuple[Message, int]]:
    """Decode one message from the start of `data`.

    Returns (message, bytes_consumed), or None when the buffer does not
    yet contain a complete frame. Raises ProtocolError on a hostile
    length prefix, an unknown type byte, or a payload whose size does
    not match its type; in those cases the stream is unrecoverable.
    """
    view = memoryview(data)
    if len(view) < 4:
        return None
    (length,) = _HEADER.unpack_from(view, 0)
    if length > MAX_FRAME_BYTES:
        raise ProtocolError(f"frame length {length} exceeds cap {MAX_FRAME_BYTES}")
    if length < 1:
        raise ProtocolError("frame has no type byte")
    if len(view) < 4 + length:
        return None
    body = bytes(view[4 : 4 + length])
    parser = _PARSERS.get(body[0])
    if parser is None:
        raise ProtocolError(f"unknown message type 0x{body[0]:02X}")
    return parser(body[1:]), 4 + length


class StreamDecoder:
    """Accumulates socket bytes and yields complete messages in order."""

    def __init__(self):
        self._buf = bytearray()

    def feed(self, data: bytes) -> list[Message]:
        self._buf.extend(data)
        out = []
        while True:
            got = decode(self._buf)
            if got is None:
                return out
            msg, consumed = got
            del self._buf[:consumed]
            out.append(msg)

    def pending_bytes(self) -> int:
        return len(self._buf)
