from itertools import product
from math import sqrt

import pytest

from app.engine.core.errors import ContractViolation
from app.engine.core.gf2 import (
    BitVec, NoiseRate, Rng, bernoulli, derive_stream_id, flip_bit, gf2_dot, random_bitvec, repeat_bit,
)


def bv(text: str) -> BitVec:
    return BitVec.from_str(text)


def all_vectors(k: int):
    return [BitVec(v, k) for v in range(1 << k)]


# --- BitVec ---

def test_text_form_puts_bit_zero_first():
    v = bv("0010")
    assert v[2] == 1 and v.weight() == 1
    assert str(v) == "0010"
    assert v.bits() == (0, 0, 1, 0)


def test_packing_is_lsb_first():
    b = bv("10110000")
    assert b.to_bytes() == b"\x0d"
    assert b.to_hex() == "0d"
    assert BitVec.from_bytes(b"\x0d", 8) == b


def test_packing_pads_the_last_byte_with_zeros():
    v = BitVec.ones(10)
    assert v.to_bytes() == b"\xff\x03"
    with pytest.raises(ContractViolation):
        BitVec.from_bytes(b"\xff\x07", 10)
    with pytest.raises(ContractViolation):
        BitVec.from_bytes(b"\xff", 10)


def test_hex_form_round_trips_a_key():
    v = bv("110100111010001101")
    assert BitVec.from_hex(v.to_hex(), v.length) == v


def test_bitvec_rejects_bad_input():
    with pytest.raises(ContractViolation):
        BitVec(0, 0)
    with pytest.raises(ContractViolation):
        BitVec(16, 4)
    with pytest.raises(ContractViolation):
        BitVec.from_str("01x1")
    with pytest.raises(ContractViolation):
        bv("0101") ^ bv("010")


def test_xor_with_itself_is_zero():
    for v in all_vectors(5):
        assert v ^ v == BitVec.zeros(5)


# --- gf2_dot ---

@pytest.mark.parametrize("a,b,expected", [
    ("0000", "1011", 0),
    ("1111", "1011", 1),
    ("1010", "1011", 0),
])
def test_gf2_dot_examples(a, b, expected):
    assert gf2_dot(bv(a), bv(b)) == expected


def test_gf2_dot_length_mismatch():
    with pytest.raises(ContractViolation):
        gf2_dot(bv("101"), bv("1011"))


def test_gf2_dot_with_zero_and_ones():
    for v in all_vectors(6):
        assert gf2_dot(v, BitVec.zeros(6)) == 0
        assert gf2_dot(v, BitVec.ones(6)) == v.parity()


def test_gf2_dot_is_linear():
    vecs = all_vectors(4)
    for a, b, c in product(vecs, repeat=3):
        assert gf2_dot(a, b ^ c) == gf2_dot(a, b) ^ gf2_dot(a, c)


# --- flip_bit / repeat_bit ---

def test_flip_bit_examples():
    assert flip_bit(bv("0000"), 2) == bv("0010")
    assert flip_bit(bv("1111"), 0) == bv("0111")


def test_flip_bit_is_an_involution():
    for v in all_vectors(5):
        for j in range(5):
            assert flip_bit(flip_bit(v, j), j) == v


def test_flip_bit_out_of_range():
    with pytest.raises(ContractViolation):
        flip_bit(bv("0000"), 4)
    with pytest.raises(ContractViolation):
        flip_bit(bv("0000"), -1)


def test_flip_changes_the_dot_iff_the_key_bit_is_set():
    k = 6
    for v, s in product(all_vectors(k), repeat=2):
        for j in range(k):
            changed = gf2_dot(flip_bit(v, j), s) != gf2_dot(v, s)
            assert changed == bool(s[j])


def test_repeat_bit():
    assert repeat_bit(1, 4) == bv("1111")
    assert repeat_bit(0, 4) == bv("0000")
    assert repeat_bit(0, 7) ^ repeat_bit(1, 7) == BitVec.ones(7)
    with pytest.raises(ContractViolation):
        repeat_bit(1, 0)


# --- noise and randomness ---

def test_noise_rate_snaps_to_parts_per_65536():
    assert NoiseRate.from_float(0.125).parts == 8192
    assert NoiseRate.from_float(0.1).value == 6554 / 65536
    with pytest.raises(ContractViolation):
        NoiseRate.from_float(0.5)
    with pytest.raises(ContractViolation):
        NoiseRate(-1)


def test_bernoulli_zero_never_fires(rng):
    eps = NoiseRate(0)
    assert not any(bernoulli(eps, rng) for _ in range(5000))


def test_bernoulli_mean():
    eps = NoiseRate.from_float(0.125)
    rng = Rng(11, 3)
    n = 100_000
    mean = sum(bernoulli(eps, rng) for _ in range(n)) / n
    assert abs(mean - 0.125) < 4 * sqrt(0.125 * 0.875 / n)


def test_streams_are_reproducible():
    a, b = Rng(5, 9), Rng(5, 9)
    assert [a.bit() for _ in range(200)] == [b.bit() for _ in range(200)]
    assert random_bitvec(64, Rng(1, 2)) == random_bitvec(64, Rng(1, 2))


def test_distinct_streams_differ():
    assert random_bitvec(64, Rng(1, 2)) != random_bitvec(64, Rng(1, 3))
    ids = {derive_stream_id(42, 0, party) for party in ("reader", "tag", "adversary", "keygen")}
    assert len(ids) == 4
    assert derive_stream_id(42, 0, "tag") != derive_stream_id(42, 1, "tag")


def test_random_bitvec_is_uniform_per_position():
    rng = Rng(99, 1)
    n = 10_000
    counts = [0] * 8
    for _ in range(n):
        v = random_bitvec(8, rng)
        for j in range(8):
            counts[j] += v[j]
    assert all(0.47 <= c / n <= 0.53 for c in counts)


def test_random_bitvec_rejects_empty(rng):
    with pytest.raises(ContractViolation):
        random_bitvec(0, rng)
