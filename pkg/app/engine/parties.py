"""
Reader and Tag state machines.

Both parties walk the same phase sequence: one p0-exchange, k
x-exchanges, r HB rounds, then the decision. Each party owns its Rng;
the draw order inside every method is fixed, so a session is fully
reproducible from the two streams.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import List, Optional

from app.engine.calculators.session_codec import (
    derive_p0, f_s, f_s_inv, select_bit, update_p,
)
from app.engine.core.errors import ContractViolation, ProtocolStateError
from app.engine.core.gf2 import BitVec, Rng, bernoulli, gf2_dot, random_bitvec
from app.engine.core.models import Decision, KeyPair, Params, SessionTriple


class PhaseKind(str, Enum):
    P0_EXCHANGE = "p0-exchange"
    X_EXCHANGE = "x-exchange"
    HB_ROUNDS = "hb-rounds"
    DECIDED = "decided"


@dataclass(frozen=True)
class Phase:
    kind: PhaseKind
    index: int = 0

    def __str__(self) -> str:
        return f"{self.kind.value}({self.index})" if self.index else self.kind.value


class _Party:
    def __init__(self, params: Params, keys: KeyPair):
        if keys.k != params.k:
            raise ContractViolation(f"key length {keys.k} does not match k = {params.k}")
        self.params = params
        self.keys = keys
        self.phase = Phase(PhaseKind.P0_EXCHANGE)
        self.theta: Optional[int] = None
        self.p = BitVec.zeros(params.k)
        self.x_bits: List[int] = []
        self._x_value = 0
        self.rounds_done = 0
        self.last_b: Optional[BitVec] = None

    @property
    def x(self) -> BitVec:
        if len(self.x_bits) != self.params.k:
            raise ProtocolStateError(f"session value incomplete: {len(self.x_bits)}/{self.params.k} bits")
        return BitVec(self._x_value, self.params.k)

    def _expect(self, *kinds: PhaseKind) -> None:
        if self.phase.kind not in kinds:
            wanted = ", ".join(k.value for k in kinds)
            raise ProtocolStateError(f"{type(self).__name__} is in {self.phase}, expected {wanted}")

    def _absorb(self, bit: int) -> None:
        """Store xi_tau from the exchange just completed and advance the p-chain."""
        k = self.params.k
        if self.phase.kind is PhaseKind.P0_EXCHANGE:
            self.theta = bit
            self.p = derive_p0(bit, k)
            self.phase = Phase(PhaseKind.X_EXCHANGE, 1)
            return
        i = self.phase.index
        prefix = BitVec(self._x_value, i - 1) if i > 1 else None
        self.p = update_p(prefix, bit, k)
        self.x_bits.append(bit)
        self._x_value |= bit << (i - 1)
        if i == k:
            self.phase = Phase(PhaseKind.HB_ROUNDS, 1)
        else:
            self.phase = Phase(PhaseKind.X_EXCHANGE, i + 1)

    def _finish_round(self) -> None:
        self.rounds_done += 1
        self.phase = Phase(PhaseKind.HB_ROUNDS, self.rounds_done + 1)

    @property
    def rounds_complete(self) -> bool:
        return self.rounds_done == self.params.r


class Reader(_Party):
    def __init__(self, params: Params, keys: KeyPair):
        super().__init__(params, keys)
        self.wrong_count = 0
        self.last_exchange: Optional[tuple[int, int, int]] = None
        self.last_a: Optional[BitVec] = None
        self.decision: Optional[Decision] = None

    def next_exchange(self, rng: Rng) -> SessionTriple:
        self._expect(PhaseKind.P0_EXCHANGE, PhaseKind.X_EXCHANGE)
        tau, xi0, xi1 = rng.bit(), rng.bit(), rng.bit()
        triple = f_s(self.keys.s, tau, xi0, xi1, self.p, rng)
        self.last_exchange = (tau, xi0, xi1)
        self._absorb(select_bit(tau, xi0, xi1))
        return triple

    def receive_blinding(self, b: BitVec) -> None:
        self._expect(PhaseKind.HB_ROUNDS)
        if self.rounds_complete:
            raise ProtocolStateError("all HB rounds already consumed")
        self.last_b = b

    def challenge(self, rng: Rng) -> BitVec:
        self._expect(PhaseKind.HB_ROUNDS)
        if self.last_b is None:
            raise ProtocolStateError("challenge requested before the blinding vector arrived")
        self.last_a = random_bitvec(self.params.k, rng)
        return self.last_a

    def check_round(self, b: BitVec, a: BitVec, z: int) -> None:
        self._expect(PhaseKind.HB_ROUNDS)
        if self.rounds_complete:
            raise ProtocolStateError("all HB rounds already consumed")
        if gf2_dot(a, self.x) ^ gf2_dot(b, self.keys.y) != z:
            self.wrong_count += 1
        self.last_b = None
        self.last_a = None
        self._finish_round()

    def decide(self) -> Decision:
        self._expect(PhaseKind.HB_ROUNDS)
        if not self.rounds_complete:
            raise ProtocolStateError(f"decision requested after {self.rounds_done}/{self.params.r} rounds")
        self.decision = Decision.ACCEPT if self.wrong_count <= self.params.u else Decision.REJECT
        self.phase = Phase(PhaseKind.DECIDED)
        return self.decision


class Tag(_Party):
    def __init__(self, params: Params, keys: KeyPair):
        super().__init__(params, keys)
        self.observed_decision: Optional[Decision] = None

    def consume_exchange(self, triple: SessionTriple) -> None:
        self._expect(PhaseKind.P0_EXCHANGE, PhaseKind.X_EXCHANGE)
        tau, xi0, xi1 = f_s_inv(self.keys.s, triple, self.p)
        self._absorb(select_bit(tau, xi0, xi1))

    def commit_blinding(self, rng: Rng) -> BitVec:
        self._expect(PhaseKind.HB_ROUNDS)
        if self.rounds_complete:
            raise ProtocolStateError("all HB rounds already answered")
        if self.last_b is not None:
            raise ProtocolStateError("blinding vector already committed for this round")
        self.last_b = random_bitvec(self.params.k, rng)
        return self.last_b

    def respond(self, a: BitVec, rng: Rng) -> int:
        self._expect(PhaseKind.HB_ROUNDS)
        if self.last_b is None:
            raise ProtocolStateError("challenge arrived before the blinding vector was sent")
        nu = bernoulli(self.params.eps, rng)
        z = gf2_dot(a, self.x) ^ gf2_dot(self.last_b, self.keys.y) ^ nu
        self.last_b = None
        self._finish_round()
        return z

    def observe_decision(self, decision: Decision) -> None:
        self._expect(PhaseKind.HB_ROUNDS)
        if not self.rounds_complete:
            raise ProtocolStateError("decision arrived before the last round")
        self.observed_decision = decision
        self.phase = Phase(PhaseKind.DECIDED)


# One-shot forms of the party operations

def reader_next_exchange(state: Reader, rng: Rng) -> SessionTriple:
    return state.next_exchange(rng)


def tag_consume_exchange(state: Tag, triple: SessionTriple) -> Tag:
    state.consume_exchange(triple)
    return state


def tag_hb_round(state: Tag, a: BitVec, rng: Rng) -> tuple[BitVec, int]:
    b = state.commit_blinding(rng)
    return b, state.respond(a, rng)


def reader_check_round(state: Reader, b: BitVec, a: BitVec, z: int) -> Reader:
    state.check_round(b, a, z)
    return state


def reader_decide(state: Reader) -> Decision:
    return state.decide()
