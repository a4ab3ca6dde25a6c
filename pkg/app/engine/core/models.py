from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Any, Dict

from app.engine.core.constants import (
    DEFAULT_EPS, DEFAULT_K, DEFAULT_R, MIN_KEY_LENGTH, default_threshold,
)
from app.engine.core.errors import ConfigError, ContractViolation
from app.engine.core.gf2 import BitVec, NoiseRate, Rng, random_bitvec


@dataclass(frozen=True)
class Params:
    k: int
    r: int
    eps: NoiseRate
    u: int

    @classmethod
    def build(cls, k: int = DEFAULT_K, r: int = DEFAULT_R, eps: float | NoiseRate = DEFAULT_EPS,
              u: int | None = None) -> "Params":
        try:
            rate = eps if isinstance(eps, NoiseRate) else NoiseRate.from_float(eps)
        except (ValueError, OverflowError) as e:
            raise ConfigError("invalid noise rate", {"eps": str(e)}) from None
        if u is None:
            u = default_threshold(r, rate.value)
        return cls(k=k, r=r, eps=rate, u=u)

    def validate(self, min_key_length: int = MIN_KEY_LENGTH) -> "Params":
        problems: Dict[str, str] = {}
        if self.k < min_key_length:
            problems["k"] = f"must be >= {min_key_length}"
        if self.r < 1:
            problems["r"] = "must be >= 1"
        # eps*r < u < r/2, compared exactly in parts-per-2^16
        if not self.eps.parts * self.r < self.u * 65536:
            problems["u"] = f"must exceed eps*r = {self.eps.value * self.r:g}"
        elif not 2 * self.u < self.r:
            problems["u"] = f"must be below r/2 = {self.r / 2:g}"
        if problems:
            raise ConfigError("invalid protocol parameters", problems)
        return self

    def as_dict(self) -> Dict[str, Any]:
        return {"k": self.k, "r": self.r, "eps": self.eps.value, "eps_parts": self.eps.parts, "u": self.u}


@dataclass(frozen=True)
class KeyPair:
    s: BitVec
    y: BitVec

    def __post_init__(self):
        if self.s.length != self.y.length:
            raise ContractViolation("s and y must have the same length")

    @property
    def k(self) -> int:
        return self.s.length

    @classmethod
    def generate(cls, k: int, rng: Rng) -> "KeyPair":
        return cls(s=random_bitvec(k, rng), y=random_bitvec(k, rng))

    def to_json(self) -> Dict[str, Any]:
        return {"k": self.k, "s_hex": self.s.to_hex(), "y_hex": self.y.to_hex()}

    @classmethod
    def from_json(cls, data: Dict[str, Any]) -> "KeyPair":
        try:
            k = int(data["k"])
            return cls(s=BitVec.from_hex(data["s_hex"], k), y=BitVec.from_hex(data["y_hex"], k))
        except (KeyError, TypeError, ContractViolation) as e:
            raise ConfigError(f"bad key file: {e}", {"keys": str(e)}) from None


@dataclass(frozen=True)
class WirePair:
    c: BitVec
    t: int


@dataclass(frozen=True)
class SessionTriple:
    alpha: WirePair
    beta: WirePair
    gamma: WirePair

    def __post_init__(self):
        k = self.alpha.c.length
        if self.beta.c.length != k or self.gamma.c.length != k:
            raise ContractViolation("all three c-components must have the same length")

    @property
    def k(self) -> int:
        return self.alpha.c.length

    @property
    def pairs(self) -> tuple[WirePair, WirePair, WirePair]:
        return (self.alpha, self.beta, self.gamma)

    def t_bits(self) -> tuple[int, int, int]:
        return (self.alpha.t, self.beta.t, self.gamma.t)


class Decision(str, Enum):
    ACCEPT = "accept"
    REJECT = "reject"


class SessionOutcome(str, Enum):
    ACCEPT = "accept"
    REJECT = "reject"
    ABORTED = "aborted"

    @classmethod
    def of(cls, decision: Decision) -> "SessionOutcome":
        return cls.ACCEPT if decision is Decision.ACCEPT else cls.REJECT
