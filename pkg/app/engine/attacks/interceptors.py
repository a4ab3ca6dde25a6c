"""
Man-in-the-middle interceptors and the plans that build them.

A plan is a small frozen description of an attack. The session runner
builds a fresh interceptor from it for every session, handing over the
adversary's own Rng stream, so plans can travel to worker processes
while interceptor state never leaks between sessions.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Callable, Dict, Optional, Union

from app.engine.channel import (
    Blinding, Challenge, Exchange, FlowPhase, FlowPoint, Interceptor, Message, Response,
)
from app.engine.core.errors import ContractViolation
from app.engine.core.gf2 import Rng, flip_bit
from app.engine.core.models import SessionTriple, WirePair


class FlipBlindingBit(Interceptor):
    """Flips bit i of every blinding vector b (exchange phase untouched)."""

    def __init__(self, index: int, rng: Optional[Rng] = None):
        super().__init__(rng)
        self.index = index

    def rewrite(self, flow_point: FlowPoint, message: Message) -> Message:
        if isinstance(message, Blinding):
            return Blinding(flip_bit(message.b, self.index))
        return message


class TripleCFlip(Interceptor):
    """
    Flips bit j of the c-component of the selected wire pairs of the
    p0-exchange only. Flipping all three pairs does not need to know
    which pair carries c1.
    """

    def __init__(self, index: int, pairs: tuple[int, ...] = (0, 1, 2), rng: Optional[Rng] = None):
        super().__init__(rng)
        if not pairs or any(p not in (0, 1, 2) for p in pairs):
            raise ContractViolation(f"pairs must be a non-empty subset of (0, 1, 2), got {pairs}")
        self.index = index
        self.pairs = frozenset(pairs)

    def rewrite(self, flow_point: FlowPoint, message: Message) -> Message:
        if flow_point.phase is not FlowPhase.P0_EXCHANGE or not isinstance(message, Exchange):
            return message
        flipped = [
            WirePair(flip_bit(pair.c, self.index), pair.t) if w in self.pairs else pair
            for w, pair in enumerate(message.triple.pairs)
        ]
        return Exchange(SessionTriple(*flipped))


class ForceChallengeBit(Interceptor):
    """Decorator: after the inner rewrite, sets bit j of every challenge a to 1."""

    def __init__(self, inner: Interceptor, index: int):
        super().__init__(inner.rng)
        self.inner = inner
        self.index = index

    def rewrite(self, flow_point: FlowPoint, message: Message) -> Message:
        message = self.inner.rewrite(flow_point, message)
        if isinstance(message, Challenge):
            return Challenge(message.a.with_bit(self.index, 1))
        return message


class CoinFlipResponse(Interceptor):
    """Replaces every response z with a fair coin from the adversary stream."""

    def rewrite(self, flow_point: FlowPoint, message: Message) -> Message:
        if isinstance(message, Response):
            return Response(self.rng.bit())
        return message


def force_a_bit_mode(index: int) -> Callable[[Interceptor], Interceptor]:
    def decorate(interceptor: Interceptor) -> Interceptor:
        return ForceChallengeBit(interceptor, index)
    return decorate


# === ПЛАНЫ АТАК ===

@dataclass(frozen=True)
class HonestPlan:
    def build(self, rng: Rng) -> Interceptor:
        return Interceptor(rng)

    def describe(self) -> Dict[str, Any]:
        return {"kind": "identity"}


@dataclass(frozen=True)
class CoinFlipPlan:
    def build(self, rng: Rng) -> Interceptor:
        return CoinFlipResponse(rng)

    def describe(self) -> Dict[str, Any]:
        return {"kind": "coin-flip"}


@dataclass(frozen=True)
class YAttackPlan:
    index: int

    def build(self, rng: Rng) -> Interceptor:
        return FlipBlindingBit(self.index, rng)

    def describe(self) -> Dict[str, Any]:
        return {"kind": "flip-b", "index": self.index}


@dataclass(frozen=True)
class SAttackPlan:
    index: int
    pairs: tuple[int, ...] = (0, 1, 2)
    force_a: bool = False

    def build(self, rng: Rng) -> Interceptor:
        interceptor: Interceptor = TripleCFlip(self.index, self.pairs, rng)
        if self.force_a:
            interceptor = force_a_bit_mode(self.index)(interceptor)
        return interceptor

    def describe(self) -> Dict[str, Any]:
        return {"kind": "flip-c", "index": self.index, "pairs": list(self.pairs), "force_a": self.force_a}


InterceptorPlan = Union[HonestPlan, CoinFlipPlan, YAttackPlan, SAttackPlan]
