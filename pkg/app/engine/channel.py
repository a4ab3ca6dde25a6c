"""
Message vocabulary and the interceptable link between tag and reader.

Every message of a session crosses ``deliver``, which checks that the
message is legal at its flow point, hands it to the interceptor and
checks that the interceptor only flipped bits (same variant, same
vector lengths).
"""
from __future__ import annotations

import hashlib
import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterator, List, Optional, Union

from app.engine.core.errors import ProtocolViolation
from app.engine.core.gf2 import BitVec, Rng
from app.engine.core.models import Decision, SessionTriple
from app.engine.parties import Reader, Tag

log = logging.getLogger(__name__)


class Direction(str, Enum):
    READER_TO_TAG = "reader->tag"
    TAG_TO_READER = "tag->reader"


class FlowPhase(str, Enum):
    P0_EXCHANGE = "p0-exchange"
    X_EXCHANGE = "x-exchange"
    HB_ROUND = "hb-round"
    DECISION = "decision"


@dataclass(frozen=True)
class FlowPoint:
    phase: FlowPhase
    index: int
    direction: Direction

    def __str__(self) -> str:
        return f"{self.phase.value}[{self.index}] {self.direction.value}"


# === СООБЩЕНИЯ ===

@dataclass(frozen=True)
class Exchange:
    triple: SessionTriple


@dataclass(frozen=True)
class Blinding:
    b: BitVec


@dataclass(frozen=True)
class Challenge:
    a: BitVec


@dataclass(frozen=True)
class Response:
    z: int


@dataclass(frozen=True)
class DecisionMessage:
    decision: Decision


Message = Union[Exchange, Blinding, Challenge, Response, DecisionMessage]

_LEGAL = {
    (FlowPhase.P0_EXCHANGE, Direction.READER_TO_TAG): (Exchange,),
    (FlowPhase.X_EXCHANGE, Direction.READER_TO_TAG): (Exchange,),
    (FlowPhase.HB_ROUND, Direction.TAG_TO_READER): (Blinding, Response),
    (FlowPhase.HB_ROUND, Direction.READER_TO_TAG): (Challenge,),
    (FlowPhase.DECISION, Direction.READER_TO_TAG): (DecisionMessage,),
}


def session_schedule(k: int, r: int) -> Iterator[tuple[FlowPoint, type]]:
    """Message order of one session: p0-exchange, k x-exchanges, r x (b, a, z), decision."""
    yield FlowPoint(FlowPhase.P0_EXCHANGE, 0, Direction.READER_TO_TAG), Exchange
    for i in range(1, k + 1):
        yield FlowPoint(FlowPhase.X_EXCHANGE, i, Direction.READER_TO_TAG), Exchange
    for j in range(1, r + 1):
        yield FlowPoint(FlowPhase.HB_ROUND, j, Direction.TAG_TO_READER), Blinding
        yield FlowPoint(FlowPhase.HB_ROUND, j, Direction.READER_TO_TAG), Challenge
        yield FlowPoint(FlowPhase.HB_ROUND, j, Direction.TAG_TO_READER), Response
    yield FlowPoint(FlowPhase.DECISION, 0, Direction.READER_TO_TAG), DecisionMessage


def message_shape(message: Message) -> tuple:
    if isinstance(message, Exchange):
        return (Exchange, message.triple.k)
    if isinstance(message, Blinding):
        return (Blinding, message.b.length)
    if isinstance(message, Challenge):
        return (Challenge, message.a.length)
    if isinstance(message, Response):
        return (Response, message.z in (0, 1))
    if isinstance(message, DecisionMessage):
        return (DecisionMessage, isinstance(message.decision, Decision))
    raise ProtocolViolation(f"not a protocol message: {message!r}")


def message_text(message: Message) -> str:
    """Stable text form of a message, used for logs and transcript digests."""
    if isinstance(message, Exchange):
        return "exchange:" + ",".join(f"{p.c.to_hex()}/{p.t}" for p in message.triple.pairs)
    if isinstance(message, Blinding):
        return f"blinding:{message.b.to_hex()}"
    if isinstance(message, Challenge):
        return f"challenge:{message.a.to_hex()}"
    if isinstance(message, Response):
        return f"response:{message.z}"
    return f"decision:{message.decision.value}"


# === ПЕРЕХВАТЧИК ===

@dataclass(frozen=True)
class InterceptRecord:
    flow_point: FlowPoint
    before: Message
    after: Message


class Interceptor:
    """
    Identity interceptor. Attacks subclass it and override ``rewrite``.

    Instances are confined to one session; they see wire data only.
    """

    def __init__(self, rng: Optional[Rng] = None):
        self.rng = rng
        self.log: List[InterceptRecord] = []

    def rewrite(self, flow_point: FlowPoint, message: Message) -> Message:
        return message


def deliver(interceptor: Optional[Interceptor], flow_point: FlowPoint, message: Message) -> Message:
    legal = _LEGAL.get((flow_point.phase, flow_point.direction), ())
    if not isinstance(message, legal):
        raise ProtocolViolation(f"{type(message).__name__} is not legal at {flow_point}")
    if interceptor is None:
        return message
    out = interceptor.rewrite(flow_point, message)
    if message_shape(out) != message_shape(message):
        raise ProtocolViolation(f"interceptor reshaped the frame at {flow_point}")
    if out != message:
        interceptor.log.append(InterceptRecord(flow_point, message, out))
        log.debug("[MITM] %s: %s -> %s", flow_point, message_text(message), message_text(out))
    return out


# === ТРАНСКРИПТ ===

@dataclass(frozen=True)
class TranscriptEntry:
    flow_point: FlowPoint
    sent: Message
    delivered: Message

    @property
    def perturbed(self) -> bool:
        return self.sent != self.delivered


@dataclass
class Transcript:
    entries: List[TranscriptEntry] = field(default_factory=list)
    decision: Optional[Decision] = None
    wrong_count: Optional[int] = None

    def record(self, flow_point: FlowPoint, sent: Message, delivered: Message) -> None:
        self.entries.append(TranscriptEntry(flow_point, sent, delivered))

    def __len__(self) -> int:
        return len(self.entries)

    @property
    def perturbed_count(self) -> int:
        return sum(1 for e in self.entries if e.perturbed)

    def digest(self) -> str:
        h = hashlib.sha256()
        for e in self.entries:
            h.update(f"{e.flow_point}|{message_text(e.sent)}|{message_text(e.delivered)}\n".encode())
        return h.hexdigest()


def run_session(reader: Reader, tag: Tag, interceptor: Optional[Interceptor],
                reader_rng: Rng, tag_rng: Rng) -> Transcript:
    """Drive one full session through ``deliver``; both parties are left in DECIDED."""
    k, r = reader.params.k, reader.params.r
    transcript = Transcript()

    def hop(flow_point: FlowPoint, message: Message) -> Message:
        out = deliver(interceptor, flow_point, message)
        transcript.record(flow_point, message, out)
        return out

    r2t, t2r = Direction.READER_TO_TAG, Direction.TAG_TO_READER

    triple = reader.next_exchange(reader_rng)
    tag.consume_exchange(hop(FlowPoint(FlowPhase.P0_EXCHANGE, 0, r2t), Exchange(triple)).triple)
    for i in range(1, k + 1):
        triple = reader.next_exchange(reader_rng)
        tag.consume_exchange(hop(FlowPoint(FlowPhase.X_EXCHANGE, i, r2t), Exchange(triple)).triple)

    for j in range(1, r + 1):
        b = tag.commit_blinding(tag_rng)
        b_in = hop(FlowPoint(FlowPhase.HB_ROUND, j, t2r), Blinding(b)).b
        reader.receive_blinding(b_in)
        a = reader.challenge(reader_rng)
        a_in = hop(FlowPoint(FlowPhase.HB_ROUND, j, r2t), Challenge(a)).a
        z = tag.respond(a_in, tag_rng)
        z_in = hop(FlowPoint(FlowPhase.HB_ROUND, j, t2r), Response(z)).z
        reader.check_round(b_in, a, z_in)

    decision = reader.decide()
    tag.observe_decision(hop(FlowPoint(FlowPhase.DECISION, 0, r2t), DecisionMessage(decision)).decision)
    transcript.decision = decision
    transcript.wrong_count = reader.wrong_count
    return transcript
