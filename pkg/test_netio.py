import socket
import struct

import pytest

from app.engine.attacks.interceptors import SAttackPlan, YAttackPlan
from app.engine.channel import Blinding, Challenge, DecisionMessage, Exchange, Response
from app.engine.core.errors import (
    BadMagic, LengthOverflow, MalformedPayload, ProtocolViolation, TransportError,
    TruncatedFrame, UnknownFrameType,
)
from app.engine.core.gf2 import BitVec, Rng, random_bitvec
from app.engine.core.models import Decision, Params, SessionOutcome, SessionTriple, WirePair
from app.engine.core.utils import parse_endpoint
from app.engine.hhb_engine import generate_keys
from app.engine.netio.frames import (
    RawFrame, decode_frame, decode_payload, encode_frame, receive, split_frame,
)
from app.engine.netio.roles import (
    LoopbackTcpOracle, MitmProxy, ReaderServer, TagClient, attack_schedule,
)
from app.engine.oracle import InProcessOracle, SessionRequest

LOOPBACK = ("127.0.0.1", 0)


def _frame(ftype: int, payload: bytes, magic: bytes = b"HHB1") -> bytes:
    return magic + struct.pack(">BI", ftype, len(payload)) + payload


# --- codec ---

def test_response_frame_bytes():
    assert encode_frame(Response(1)) == b"HHB1\x05\x00\x00\x00\x01\x01"


def test_blinding_frame_is_lsb_first_packed():
    b = BitVec.from_str("10110000")
    assert encode_frame(Blinding(b)) == b"HHB1\x03\x00\x00\x00\x01\x0d"
    assert decode_frame(encode_frame(Blinding(b)), k=8) == Blinding(b)


def test_params_frame(small_params):
    data = encode_frame(small_params)
    assert data[4] == 0x01 and len(data) == 9 + 10
    assert decode_frame(data) == small_params


def test_exchange_and_decision_frames():
    rng = Rng(3, 3)
    triple = SessionTriple(*(WirePair(random_bitvec(12, rng), rng.bit()) for _ in range(3)))
    data = encode_frame(Exchange(triple))
    assert len(data) == 9 + 3 * (2 + 1)
    assert decode_frame(data, k=12) == Exchange(triple)
    assert encode_frame(DecisionMessage(Decision.REJECT)).endswith(b"\x00")
    assert decode_frame(_frame(0x06, b"\x01")) == DecisionMessage(Decision.ACCEPT)
    assert decode_frame(encode_frame(Challenge(BitVec.ones(9))), k=9) == Challenge(BitVec.ones(9))


def test_split_frame_returns_the_rest():
    data = encode_frame(Response(0)) + b"HHB1"
    frame, rest = split_frame(data)
    assert frame == RawFrame(0x05, b"\x00") and rest == b"HHB1"
    with pytest.raises(MalformedPayload):
        decode_frame(data)


@pytest.mark.parametrize("data,error", [
    (b"HHB1\x05\x00", TruncatedFrame),
    (_frame(0x05, b"\x01")[:-1], TruncatedFrame),
    (_frame(0x05, b"\x01", magic=b"HHB2"), BadMagic),
    (_frame(0x07, b"\x01"), UnknownFrameType),
    (b"HHB1\x03" + struct.pack(">I", (1 << 16) + 1), LengthOverflow),
    (_frame(0x05, b"\x02"), MalformedPayload),
    (_frame(0x05, b"\x01\x00"), MalformedPayload),
    (_frame(0x06, b"\x07"), MalformedPayload),
    (_frame(0x01, b"\x00" * 9), MalformedPayload),
])
def test_decode_errors(data, error):
    with pytest.raises(error):
        decode_frame(data, k=8)


def test_vector_payloads_need_k_and_clean_padding():
    with pytest.raises(MalformedPayload):
        decode_payload(RawFrame(0x03, b"\x0d"))
    with pytest.raises(MalformedPayload):
        decode_payload(RawFrame(0x03, b"\xff\x07"), k=10)
    with pytest.raises(MalformedPayload):
        decode_payload(RawFrame(0x04, b"\xff"), k=10)
    with pytest.raises(MalformedPayload):
        decode_payload(RawFrame(0x02, b"\x00" * 5), k=8)


def test_receive_checks_the_frame_type():
    left, right = socket.socketpair()
    try:
        left.sendall(encode_frame(Response(1)))
        with pytest.raises(ProtocolViolation):
            receive(right, Blinding, 8)
        left.close()
        with pytest.raises(TransportError):
            receive(right, Response)
    finally:
        right.close()


def test_parse_endpoint():
    assert parse_endpoint("127.0.0.1:7000") == ("127.0.0.1", 7000)
    assert parse_endpoint("[::1]:80") == ("::1", 80)


# --- networked roles ---

def _inprocess(params, keys, seed, requests):
    return InProcessOracle(params, keys, seed, with_digest=True).run_many(requests)


@pytest.mark.parametrize("plan", [None, YAttackPlan(1), SAttackPlan(0), SAttackPlan(2, force_a=True)])
def test_loopback_oracle_matches_the_in_process_runner(small_params, small_keys, plan):
    requests = [SessionRequest(i, plan) for i in range(6)]
    tcp = LoopbackTcpOracle(small_params, small_keys, 31, timeout=5.0).run_many(requests)
    local = _inprocess(small_params, small_keys, 31, requests)
    assert tcp == local


def test_reader_and_tag_without_proxy(small_params, small_keys):
    with ReaderServer(small_params, small_keys, 5, LOOPBACK, timeout=5.0) as reader:
        tag = TagClient(small_keys, 5, reader.address, timeout=5.0)
        records = tag.run(4)
        assert reader.wait_for(4, timeout=5.0)
    assert [r.index for r in records] == [0, 1, 2, 3]
    for rec in records:
        assert rec.outcome is reader.records[rec.index].outcome
        assert rec.x == reader.records[rec.index].x


def test_identity_proxy_passes_frames_unchanged(small_params, small_keys):
    with ReaderServer(small_params, small_keys, 8, LOOPBACK, timeout=5.0) as reader:
        with MitmProxy(reader.address, LOOPBACK, 8, timeout=5.0) as proxy:
            TagClient(small_keys, 8, proxy.address, timeout=5.0).run(3)
            assert proxy.wait_for(3, timeout=5.0)
            assert reader.wait_for(3, timeout=5.0)
    assert proxy.params == small_params
    for index in range(3):
        transcript = proxy.transcripts[index]
        assert transcript.perturbed_count == 0
        assert len(transcript) == 1 + 8 + 3 * small_params.r + 1
        assert proxy.results[index].outcome is reader.records[index].outcome


def test_attack_schedule_is_bit_major():
    schedule = attack_schedule("y", 3, first_session=10)
    first = [next(schedule) for _ in range(7)]
    assert [r.index for r in first] == list(range(10, 17))
    assert [r.plan.index for r in first] == [0, 0, 0, 1, 1, 1, 2]
    s_plan = next(attack_schedule("s", 2, force_a=True)).plan
    assert s_plan == SAttackPlan(0, (0, 1, 2), True)


def test_tag_rejects_a_mismatched_key_length(small_params, small_keys):
    other = Params.build(k=16).validate()
    with ReaderServer(other, generate_keys(16, 1), 0, LOOPBACK, timeout=5.0) as reader:
        record = TagClient(small_keys, 0, reader.address, timeout=5.0).run_session(0)
        reader.wait_for(1, timeout=5.0)
    assert record.outcome is SessionOutcome.ABORTED
    assert reader.records[0].outcome is SessionOutcome.ABORTED


def test_unreachable_reader_raises_transport_error(small_keys):
    with socket.socket() as sock:
        sock.bind(LOOPBACK)
        port = sock.getsockname()[1]
    with pytest.raises(TransportError):
        TagClient(small_keys, 0, ("127.0.0.1", port), timeout=1.0).run_session(0)
