"""
Bit-vector arithmetic over GF(2), Bernoulli noise and the deterministic RNG.

A BitVec is an immutable int bitmask plus its length: bit i is
``(value >> i) & 1``. The text form writes bit 0 first, so "0010" has
only bit 2 set. Byte packing is LSB-first (bit i lives in byte i // 8 at
position i % 8) which makes ``int.from_bytes(data, "little")`` the
exact inverse of ``to_bytes``.
"""
from __future__ import annotations

import hashlib
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Iterator

import numpy as np

from app.engine.core.constants import EPS_LIMIT, EPS_SCALE
from app.engine.core.errors import ContractViolation

_U64 = 1 << 64


@dataclass(frozen=True)
class BitVec:
    value: int
    length: int

    def __post_init__(self):
        if not isinstance(self.length, int) or self.length < 1:
            raise ContractViolation(f"BitVec length must be a positive integer, got {self.length!r}")
        if self.value < 0 or self.value >> self.length:
            raise ContractViolation(f"value does not fit in {self.length} bits")

    # --- constructors ---
    @classmethod
    def zeros(cls, k: int) -> "BitVec":
        return cls(0, k)

    @classmethod
    def ones(cls, k: int) -> "BitVec":
        return cls((1 << k) - 1, k) if k >= 1 else cls(0, k)

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "BitVec":
        value, n = 0, 0
        for i, b in enumerate(bits):
            if b not in (0, 1):
                raise ContractViolation(f"bit {i} is {b!r}, expected 0 or 1")
            value |= b << i
            n = i + 1
        return cls(value, n)

    @classmethod
    def from_str(cls, text: str) -> "BitVec":
        text = text.strip()
        if not text or set(text) - {"0", "1"}:
            raise ContractViolation(f"not a bit string: {text!r}")
        return cls.from_bits(int(ch) for ch in text)

    @classmethod
    def from_bytes(cls, data: bytes, length: int) -> "BitVec":
        if len(data) != packed_size(length):
            raise ContractViolation(f"{length} bits need {packed_size(length)} bytes, got {len(data)}")
        value = int.from_bytes(data, "little")
        if value >> length:
            raise ContractViolation("non-zero pad bits")
        return cls(value, length)

    @classmethod
    def from_hex(cls, text: str, length: int) -> "BitVec":
        try:
            data = bytes.fromhex(text)
        except ValueError as e:
            raise ContractViolation(f"bad hex: {e}") from None
        return cls.from_bytes(data, length)

    # --- accessors ---
    def __len__(self) -> int:
        return self.length

    def __getitem__(self, i: int) -> int:
        if not 0 <= i < self.length:
            raise ContractViolation(f"index {i} out of range for length {self.length}")
        return (self.value >> i) & 1

    def __iter__(self) -> Iterator[int]:
        v = self.value
        for _ in range(self.length):
            yield v & 1
            v >>= 1

    def __xor__(self, other: "BitVec") -> "BitVec":
        _same_length(self, other)
        return BitVec(self.value ^ other.value, self.length)

    def __str__(self) -> str:
        return "".join("1" if b else "0" for b in self)

    def bits(self) -> tuple[int, ...]:
        return tuple(self)

    def weight(self) -> int:
        return self.value.bit_count()

    def parity(self) -> int:
        return self.value.bit_count() & 1

    def with_bit(self, j: int, b: int) -> "BitVec":
        if self[j] == b:
            return self
        return BitVec(self.value ^ (1 << j), self.length)

    def to_bytes(self) -> bytes:
        return self.value.to_bytes(packed_size(self.length), "little")

    def to_hex(self) -> str:
        return self.to_bytes().hex()


@dataclass(frozen=True)
class NoiseRate:
    parts: int

    def __post_init__(self):
        if not 0 <= self.parts < EPS_LIMIT:
            raise ContractViolation(f"noise rate must be in [0, 1/2), got {self.parts}/{EPS_SCALE}")

    @classmethod
    def from_float(cls, eps: float) -> "NoiseRate":
        """Snap a decimal rate to the nearest parts-per-2^16 value."""
        return cls(int(round(float(eps) * EPS_SCALE)))

    @property
    def value(self) -> float:
        return self.parts / EPS_SCALE

    def fraction(self) -> Fraction:
        return Fraction(self.parts, EPS_SCALE)

    def __str__(self) -> str:
        return f"{self.value:g}"


def derive_stream_id(master_seed: int, session_index: int, party: str) -> int:
    digest = hashlib.blake2b(
        f"{master_seed}:{session_index}:{party}".encode(), digest_size=8
    ).digest()
    return int.from_bytes(digest, "big")


def derive_seed(master_seed: int, label: str) -> int:
    """Independent 64-bit master seed for an experiment stage."""
    digest = hashlib.blake2b(f"{master_seed}/{label}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big")


class Rng:
    """
    Counter-based deterministic generator (numpy Philox).

    Identical (seed, stream_id) pairs produce identical streams. An instance
    is owned by a single party.
    """

    __slots__ = ("seed", "stream_id", "_gen")

    def __init__(self, seed: int, stream_id: int = 0):
        if not 0 <= seed < _U64 or not 0 <= stream_id < _U64:
            raise ContractViolation("seed and stream_id must be 64-bit unsigned values")
        self.seed = seed
        self.stream_id = stream_id
        self._gen = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, stream_id])))

    @classmethod
    def for_party(cls, master_seed: int, session_index: int, party: str) -> "Rng":
        return cls(master_seed, derive_stream_id(master_seed, session_index, party))

    def bit(self) -> int:
        return int(self._gen.integers(0, 2))

    def below(self, n: int) -> int:
        return int(self._gen.integers(0, n))

    def uniform_bits(self, k: int) -> int:
        return int.from_bytes(self._gen.bytes(packed_size(k)), "little") & ((1 << k) - 1)

    def __repr__(self) -> str:
        return f"Rng(seed={self.seed}, stream_id={self.stream_id:#018x})"


def packed_size(k: int) -> int:
    return (k + 7) // 8


def _same_length(a: BitVec, b: BitVec) -> None:
    if a.length != b.length:
        raise ContractViolation(f"length mismatch: {a.length} != {b.length}")


# === ОПЕРАЦИИ ===

def gf2_dot(a: BitVec, b: BitVec) -> int:
    _same_length(a, b)
    return (a.value & b.value).bit_count() & 1


def flip_bit(v: BitVec, j: int) -> BitVec:
    if not 0 <= j < v.length:
        raise ContractViolation(f"index {j} out of range for length {v.length}")
    return BitVec(v.value ^ (1 << j), v.length)


def repeat_bit(b: int, n: int) -> BitVec:
    if n < 1:
        raise ContractViolation(f"repeat count must be >= 1, got {n}")
    if b not in (0, 1):
        raise ContractViolation(f"not a bit: {b!r}")
    return BitVec.ones(n) if b else BitVec.zeros(n)


def bernoulli(eps: NoiseRate, rng: Rng) -> int:
    return 1 if rng.below(EPS_SCALE) < eps.parts else 0


def random_bitvec(k: int, rng: Rng) -> BitVec:
    if k < 1:
        raise ContractViolation(f"length must be >= 1, got {k}")
    return BitVec(rng.uniform_bits(k), k)
