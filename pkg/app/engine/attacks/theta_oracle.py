"""
Exhaustive oracles for the s-recovery stage.

``theta_flip_oracle`` pushes every (tau, xi0, xi1) through
f_s -> triple-c-flip -> f_s^-1 at a position where (s XOR p)_j = 1 (and a
control position where it is 0) and tabulates what the tag decodes.

``resync_table`` covers the next step. Once theta is complemented the
tag's p0 is the complement of the reader's, so in the first x-exchange
each decoded pair is flipped by an independent fair bit (the parity of
its random c). The table enumerates all 8 triples x 8 flip patterns and
records whether x_1 still decodes correctly, which is exactly when the
p-chain falls back into step.

Both tables run the real codec on one-bit vectors: with k = 1 the only
bit of (s XOR p) is the flipped position, so the drawn c values cannot
change the outcome.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass
from fractions import Fraction
from itertools import product
from typing import Any, Dict, List, Sequence

from app.engine.calculators.session_codec import f_s, f_s_inv, select_bit
from app.engine.calculators.statistics import (
    coin_accept_probability, flipped_check_accept_probability, honest_accept_probability,
)
from app.engine.core.errors import ContractViolation
from app.engine.core.gf2 import BitVec, Rng, flip_bit
from app.engine.core.models import Params, SessionTriple, WirePair

_ORACLE_SEED = 0x6868625F6F72636C

Bits3 = tuple[int, int, int]

FULL_TRIPLE = (0, 1, 2)


@dataclass(frozen=True)
class ThetaFlipRow:
    original: Bits3
    parity: int
    theta: int
    decoded: Bits3
    theta_decoded: int
    control_decoded: Bits3
    theta_control: int

    @property
    def theta_flipped(self) -> bool:
        return self.theta_decoded != self.theta


@dataclass(frozen=True)
class ThetaFlipTable:
    rows: List[ThetaFlipRow]
    pairs: tuple[int, ...] = FULL_TRIPLE

    @property
    def flip_probability(self) -> Fraction:
        return Fraction(sum(r.theta_flipped for r in self.rows), len(self.rows))

    @property
    def controls_are_identity(self) -> bool:
        return all(r.control_decoded == r.original and r.theta_control == r.theta for r in self.rows)

    def as_dict(self) -> Dict[str, Any]:
        return {
            "pairs": list(self.pairs),
            "rows": [dict(asdict(r), theta_flipped=r.theta_flipped) for r in self.rows],
            "flip_probability": float(self.flip_probability),
            "controls_are_identity": self.controls_are_identity,
        }


@dataclass(frozen=True)
class ResyncRow:
    original: Bits3
    flips: Bits3
    decoded: Bits3
    x_true: int
    x_decoded: int

    @property
    def resynced(self) -> bool:
        return self.x_true == self.x_decoded


@dataclass(frozen=True)
class ResyncTable:
    rows: List[ResyncRow]

    @property
    def resync_probability(self) -> Fraction:
        return Fraction(sum(r.resynced for r in self.rows), len(self.rows))

    def as_dict(self) -> Dict[str, Any]:
        return {
            "rows": [dict(asdict(r), resynced=r.resynced) for r in self.rows],
            "resync_probability": float(self.resync_probability),
        }


def _flip_c(triple: SessionTriple, pattern: Bits3) -> SessionTriple:
    return SessionTriple(*(
        WirePair(flip_bit(pair.c, 0), pair.t) if f else pair
        for pair, f in zip(triple.pairs, pattern)
    ))


def flip_pattern(pairs: Sequence[int] = FULL_TRIPLE) -> Bits3:
    if not pairs or any(w not in FULL_TRIPLE for w in pairs):
        raise ContractViolation(f"pairs must be a non-empty subset of (0, 1, 2), got {tuple(pairs)}")
    a, b, c = (int(w in pairs) for w in FULL_TRIPLE)
    return a, b, c


def theta_flip_oracle(pairs: Sequence[int] = FULL_TRIPLE) -> ThetaFlipTable:
    """The default flips all three wire pairs; a subset gives the single-pair modes."""
    pattern = flip_pattern(pairs)
    rng = Rng(_ORACLE_SEED)
    zero, one = BitVec.zeros(1), BitVec.ones(1)
    rows = []
    for tau, xi0, xi1 in product((0, 1), repeat=3):
        theta = select_bit(tau, xi0, xi1)
        # (s XOR p)_0 = 1: s = 1, p = 0^k as in the p0-exchange
        triple = f_s(one, tau, xi0, xi1, zero, rng)
        decoded = f_s_inv(one, _flip_c(triple, pattern), zero)
        # (s XOR p)_0 = 0 control
        control_triple = f_s(zero, tau, xi0, xi1, zero, rng)
        control = f_s_inv(zero, _flip_c(control_triple, pattern), zero)
        rows.append(ThetaFlipRow(
            original=(tau, xi0, xi1),
            parity=tau ^ xi0 ^ xi1,
            theta=theta,
            decoded=decoded,
            theta_decoded=select_bit(*decoded),
            control_decoded=control,
            theta_control=select_bit(*control),
        ))
    return ThetaFlipTable(rows, tuple(sorted(set(pairs))))


def resync_table() -> ResyncTable:
    """
    Reader encodes with key s XOR p (here 0), the tag decodes with the
    complemented p (key 1). A pair whose c has bit 0 set is then decoded
    flipped, so choosing c per pair enumerates every flip pattern.
    """
    zero, one = BitVec.zeros(1), BitVec.ones(1)
    rows = []
    for lambdas in product((0, 1), repeat=3):
        for flips in product((0, 1), repeat=3):
            # with key 0 the wire t-bits carry the lambdas in permuted order
            encoded = f_s(zero, *lambdas, zero, Rng(_ORACLE_SEED))
            wire = SessionTriple(*(
                WirePair(one if f else zero, pair.t) for pair, f in zip(encoded.pairs, flips)
            ))
            decoded = f_s_inv(zero, wire, one)
            rows.append(ResyncRow(
                original=lambdas,
                flips=flips,
                decoded=decoded,
                x_true=select_bit(*lambdas),
                x_decoded=select_bit(*decoded),
            ))
    return ResyncTable(rows)


@dataclass(frozen=True)
class ModelRates:
    """Closed-form session and round rates under each hypothesis."""

    honest_accept: float
    coin_accept: float
    y_flip_accept: float
    theta_flip_probability: float
    resync_probability: float
    s_flip_accept: float
    s_flip_round_failure: float
    force_a_s0_accept: float
    force_a_s1_accept: float

    @property
    def s_separable(self) -> bool:
        """False when the flipped pairs never move theta, so s_j leaves no trace."""
        return self.theta_flip_probability > 0.0

    def as_dict(self) -> Dict[str, Any]:
        return dict(asdict(self), s_separable=self.s_separable)


def predicted_rates(params: Params, pairs: Sequence[int] = FULL_TRIPLE) -> ModelRates:
    """``pairs`` only changes the s-stage rates: it sets the theta flip probability."""
    honest = honest_accept_probability(params)
    coin = coin_accept_probability(params)
    eps = params.eps.value
    f = float(theta_flip_oracle(pairs).flip_probability)
    q = float(resync_table().resync_probability)

    # desynchronised session: resync with probability q, otherwise x differs and
    # every check is a fair coin
    desync_accept = q * honest + (1 - q) * coin
    desync_round = q * eps + (1 - q) * 0.5

    # forcing a_j = 1 while the reader checks its own a: whenever a_j = 0 and
    # the tag's x_j = 1 the round is a coin flip, so half the synchronised
    # sessions behave like the coin adversary
    force_sync = 0.5 * honest + 0.5 * coin
    return ModelRates(
        honest_accept=honest,
        coin_accept=coin,
        y_flip_accept=flipped_check_accept_probability(params),
        theta_flip_probability=f,
        resync_probability=q,
        s_flip_accept=(1 - f) * honest + f * desync_accept,
        s_flip_round_failure=(1 - f) * eps + f * desync_round,
        force_a_s0_accept=force_sync,
        force_a_s1_accept=(1 - f) * force_sync + f * (q * force_sync + (1 - q) * coin),
    )
