"""
Keyed transport of the session bits (f_s / f_s^-1) and the p-chain.

Both directions mix the key as ``s XOR p``. The output permutation of
f_s depends on the parity of the three encoded bits, and f_s^-1 undoes
it by testing the parity of what it decodes.
"""
from __future__ import annotations

from app.engine.core.errors import ContractViolation
from app.engine.core.gf2 import BitVec, Rng, gf2_dot, random_bitvec, repeat_bit
from app.engine.core.models import SessionTriple, WirePair

Lambdas = tuple[int, int, int]


def _mixed_key(s: BitVec, p: BitVec) -> BitVec:
    if s.length != p.length:
        raise ContractViolation(f"|s| = {s.length} but |p| = {p.length}")
    return s ^ p


def f_s(s: BitVec, lambda1: int, lambda2: int, lambda3: int, p: BitVec, rng: Rng) -> SessionTriple:
    key = _mixed_key(s, p)
    k = key.length
    pairs = []
    for lam in (lambda1, lambda2, lambda3):
        if lam not in (0, 1):
            raise ContractViolation(f"lambda must be a bit, got {lam!r}")
        c = random_bitvec(k, rng)
        pairs.append(WirePair(c=c, t=gf2_dot(c, key) ^ lam))
    p1, p2, p3 = pairs
    if lambda1 ^ lambda2 ^ lambda3 == 0:
        return SessionTriple(p3, p1, p2)
    return SessionTriple(p2, p3, p1)


def decode_lambdas(s: BitVec, triple: SessionTriple, p: BitVec) -> Lambdas:
    """Raw per-pair decode in wire order, before the parity permutation."""
    key = _mixed_key(s, p)
    if triple.k != key.length:
        raise ContractViolation(f"triple has k = {triple.k} but key has {key.length}")
    l1, l2, l3 = (gf2_dot(pair.c, key) ^ pair.t for pair in triple.pairs)
    return l1, l2, l3


def f_s_inv(s: BitVec, triple: SessionTriple, p: BitVec) -> Lambdas:
    l1, l2, l3 = decode_lambdas(s, triple, p)
    if l1 ^ l2 ^ l3 == 0:
        return l2, l3, l1
    return l3, l1, l2


def select_bit(tau: int, xi0: int, xi1: int) -> int:
    """theta / x_i <- xi_tau"""
    return xi1 if tau else xi0


def derive_p0(theta: int, k: int) -> BitVec:
    return repeat_bit(theta, k)


def update_p(x_prefix: BitVec | None, x_i: int, k: int) -> BitVec:
    """
    p_i = x_1 ... x_{i-1} followed by x_i repeated (k - i + 1) times.

    ``x_prefix`` holds x_1..x_{i-1} (None or empty for i = 1).
    """
    i = (x_prefix.length if x_prefix is not None else 0) + 1
    if not 1 <= i <= k:
        raise ContractViolation(f"exchange index {i} out of range 1..{k}")
    if x_i not in (0, 1):
        raise ContractViolation(f"not a bit: {x_i!r}")
    low = x_prefix.value if x_prefix is not None else 0
    fill = ((1 << (k - i + 1)) - 1) << (i - 1) if x_i else 0
    return BitVec(low | fill, k)
