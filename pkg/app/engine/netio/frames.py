"""
Wire format.

    magic "HHB1" | type (1 byte) | payload length (4 bytes, big-endian) | payload

Payloads:
    Params     >HHIH   k, r, eps in parts-per-2^16, u
    Exchange   three (packed c, t byte) groups in wire order alpha, beta, gamma
    Blinding   packed b
    Challenge  packed a
    Response   one byte, 0 or 1
    Decision   one byte, 1 accept / 0 reject

Vectors are packed LSB-first (see BitVec.to_bytes), so every payload
except Params needs k to decode.
"""
from __future__ import annotations

import socket
import struct
from dataclasses import dataclass
from typing import Optional, Union

from app.engine.channel import (
    Blinding, Challenge, DecisionMessage, Exchange, Message, Response,
)
from app.engine.core.constants import (
    FRAME_BLINDING, FRAME_CHALLENGE, FRAME_DECISION, FRAME_EXCHANGE, FRAME_HEADER_SIZE,
    FRAME_MAGIC, FRAME_NAMES, FRAME_PARAMS, FRAME_RESPONSE, MAX_FRAME_PAYLOAD,
)
from app.engine.core.errors import (
    BadMagic, ContractViolation, LengthOverflow, MalformedPayload, ProtocolViolation,
    TransportError, TruncatedFrame, UnknownFrameType,
)
from app.engine.core.gf2 import BitVec, NoiseRate, packed_size
from app.engine.core.models import Decision, Params, SessionTriple, WirePair

_HEADER = struct.Struct(">4sBI")
_PARAMS = struct.Struct(">HHIH")

Payload = Union[Message, Params]

_TYPE_OF = {
    Params: FRAME_PARAMS,
    Exchange: FRAME_EXCHANGE,
    Blinding: FRAME_BLINDING,
    Challenge: FRAME_CHALLENGE,
    Response: FRAME_RESPONSE,
    DecisionMessage: FRAME_DECISION,
}


@dataclass(frozen=True)
class RawFrame:
    ftype: int
    payload: bytes

    @property
    def name(self) -> str:
        return FRAME_NAMES[self.ftype]

    def to_bytes(self) -> bytes:
        return _HEADER.pack(FRAME_MAGIC, self.ftype, len(self.payload)) + self.payload


def frame_type(obj: Payload) -> int:
    try:
        return _TYPE_OF[type(obj)]
    except KeyError:
        raise ContractViolation(f"cannot frame {type(obj).__name__}") from None


# === КОДИРОВАНИЕ ===

def encode_payload(obj: Payload) -> bytes:
    if isinstance(obj, Params):
        return _PARAMS.pack(obj.k, obj.r, obj.eps.parts, obj.u)
    if isinstance(obj, Exchange):
        return b"".join(pair.c.to_bytes() + bytes([pair.t]) for pair in obj.triple.pairs)
    if isinstance(obj, Blinding):
        return obj.b.to_bytes()
    if isinstance(obj, Challenge):
        return obj.a.to_bytes()
    if isinstance(obj, Response):
        return bytes([obj.z])
    if isinstance(obj, DecisionMessage):
        return b"\x01" if obj.decision is Decision.ACCEPT else b"\x00"
    raise ContractViolation(f"cannot frame {type(obj).__name__}")


def encode_frame(obj: Payload) -> bytes:
    return RawFrame(frame_type(obj), encode_payload(obj)).to_bytes()


# === ДЕКОДИРОВАНИЕ ===

def parse_header(header: bytes) -> tuple[int, int]:
    """(type, payload length) from the first nine bytes of a frame."""
    if len(header) < FRAME_HEADER_SIZE:
        raise TruncatedFrame(f"header needs {FRAME_HEADER_SIZE} bytes, got {len(header)}")
    magic, ftype, length = _HEADER.unpack(header[:FRAME_HEADER_SIZE])
    if magic != FRAME_MAGIC:
        raise BadMagic(f"bad magic {magic!r}")
    if ftype not in FRAME_NAMES:
        raise UnknownFrameType(f"unknown frame type 0x{ftype:02x}")
    if length > MAX_FRAME_PAYLOAD:
        raise LengthOverflow(f"payload length {length} exceeds {MAX_FRAME_PAYLOAD}")
    return ftype, length


def split_frame(data: bytes) -> tuple[RawFrame, bytes]:
    """First complete frame of ``data`` and the bytes that follow it."""
    ftype, length = parse_header(data)
    end = FRAME_HEADER_SIZE + length
    if len(data) < end:
        raise TruncatedFrame(f"payload needs {length} bytes, got {len(data) - FRAME_HEADER_SIZE}")
    return RawFrame(ftype, bytes(data[FRAME_HEADER_SIZE:end])), bytes(data[end:])


def _vector(data: bytes, k: int, what: str) -> BitVec:
    try:
        return BitVec.from_bytes(data, k)
    except ContractViolation as e:
        raise MalformedPayload(f"{what}: {e}") from None


def _bit(byte: int, what: str) -> int:
    if byte not in (0, 1):
        raise MalformedPayload(f"{what} byte must be 0 or 1, got {byte}")
    return byte


def decode_payload(frame: RawFrame, k: Optional[int] = None) -> Payload:
    payload = frame.payload
    if frame.ftype == FRAME_PARAMS:
        if len(payload) != _PARAMS.size:
            raise MalformedPayload(f"Params payload must be {_PARAMS.size} bytes, got {len(payload)}")
        pk, pr, parts, pu = _PARAMS.unpack(payload)
        try:
            return Params(k=pk, r=pr, eps=NoiseRate(parts), u=pu)
        except ContractViolation as e:
            raise MalformedPayload(f"Params: {e}") from None

    if frame.ftype in (FRAME_RESPONSE, FRAME_DECISION):
        if len(payload) != 1:
            raise MalformedPayload(f"{frame.name} payload must be 1 byte, got {len(payload)}")
        bit = _bit(payload[0], frame.name)
        if frame.ftype == FRAME_RESPONSE:
            return Response(bit)
        return DecisionMessage(Decision.ACCEPT if bit else Decision.REJECT)

    if k is None or k < 1:
        raise MalformedPayload(f"{frame.name} frame cannot be decoded without k")
    width = packed_size(k)
    if frame.ftype == FRAME_EXCHANGE:
        if len(payload) != 3 * (width + 1):
            raise MalformedPayload(f"Exchange payload must be {3 * (width + 1)} bytes, got {len(payload)}")
        pairs = []
        for w in range(3):
            chunk = payload[w * (width + 1):(w + 1) * (width + 1)]
            pairs.append(WirePair(_vector(chunk[:width], k, "c"), _bit(chunk[width], "t")))
        return Exchange(SessionTriple(*pairs))
    if len(payload) != width:
        raise MalformedPayload(f"{frame.name} payload must be {width} bytes, got {len(payload)}")
    vec = _vector(payload, k, frame.name)
    return Blinding(vec) if frame.ftype == FRAME_BLINDING else Challenge(vec)


def decode_frame(data: bytes, k: Optional[int] = None) -> Payload:
    frame, rest = split_frame(data)
    if rest:
        raise MalformedPayload(f"{len(rest)} trailing bytes after frame")
    return decode_payload(frame, k)


# === СОКЕТЫ ===

def recv_exact(sock: socket.socket, n: int) -> bytes:
    chunks = []
    remaining = n
    while remaining:
        try:
            chunk = sock.recv(remaining)
        except OSError as e:
            raise TransportError(f"recv failed: {e}") from e
        if not chunk:
            raise TransportError(f"connection closed with {remaining} of {n} bytes outstanding")
        chunks.append(chunk)
        remaining -= len(chunk)
    return b"".join(chunks)


def read_frame(sock: socket.socket) -> RawFrame:
    ftype, length = parse_header(recv_exact(sock, FRAME_HEADER_SIZE))
    return RawFrame(ftype, recv_exact(sock, length) if length else b"")


def send_bytes(sock: socket.socket, data: bytes) -> None:
    try:
        sock.sendall(data)
    except OSError as e:
        raise TransportError(f"send failed: {e}") from e


def send_frame(sock: socket.socket, obj: Payload) -> None:
    send_bytes(sock, encode_frame(obj))


def receive(sock: socket.socket, expected: type, k: Optional[int] = None) -> Payload:
    frame = read_frame(sock)
    obj = decode_payload(frame, k)
    if not isinstance(obj, expected):
        raise ProtocolViolation(f"expected {expected.__name__}, got {frame.name}")
    return obj
