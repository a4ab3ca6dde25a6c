"""
The three networked roles.

The reader accepts connections and drives the session: it announces its
Params, sends the 1 + k exchanges, then runs r rounds of
(Blinding <- , Challenge -> , Response <-) and finishes with the
Decision. One connection carries exactly one session.

The proxy sits between tag and reader. It classifies every frame by its
position in the session (no payload inspection), passes it through the
interceptor built for that session, and re-encodes it.

Session indices are the connection ordinals unless a schedule is given;
party streams are derived from (master_seed, index, party) exactly as in
the in-process runner.
"""
from __future__ import annotations

import itertools
import logging
import socket
import socketserver
import threading
from dataclasses import dataclass
from typing import Dict, Iterator, List, Optional

from app.engine.attacks.interceptors import InterceptorPlan, SAttackPlan, YAttackPlan
from app.engine.channel import (
    Blinding, Challenge, DecisionMessage, Direction, Exchange, Response, Transcript,
    deliver, session_schedule,
)
from app.engine.core.constants import (
    DEFAULT_IO_TIMEOUT, LOOPBACK_HOST, PARTY_ADVERSARY, PARTY_READER, PARTY_TAG,
)
from app.engine.core.errors import (
    ConfigError, ContractViolation, HHBError, ProtocolViolation, TransportError,
)
from app.engine.core.gf2 import BitVec, Rng
from app.engine.core.models import KeyPair, Params, SessionOutcome
from app.engine.netio.frames import (
    decode_payload, read_frame, receive, send_bytes, send_frame,
)
from app.engine.oracle import SessionRequest, SessionResult
from app.engine.parties import Reader, Tag

log = logging.getLogger(__name__)

Endpoint = tuple[str, int]


@dataclass(frozen=True)
class ReaderRecord:
    index: int
    outcome: SessionOutcome
    wrong_count: Optional[int] = None
    theta: Optional[int] = None
    x: Optional[BitVec] = None


@dataclass(frozen=True)
class TagRecord:
    index: int
    outcome: SessionOutcome
    theta: Optional[int] = None
    x: Optional[BitVec] = None


def _connect(endpoint: Endpoint, timeout: float) -> socket.socket:
    try:
        return socket.create_connection(endpoint, timeout=timeout)
    except OSError as e:
        raise TransportError(f"cannot reach {endpoint[0]}:{endpoint[1]}: {e}") from e


class _SessionServer(socketserver.ThreadingTCPServer):
    daemon_threads = True
    allow_reuse_address = True


class _FramedService:
    """Accept loop in a background thread, one handler thread per connection."""

    role = "service"

    def __init__(self, listen: Endpoint, indices: Iterator, timeout: float = DEFAULT_IO_TIMEOUT):
        self.listen = listen
        self.timeout = timeout
        self._indices = indices
        self._lock = threading.Lock()
        self._done = threading.Condition()
        self.completed = 0
        self._server: Optional[_SessionServer] = None
        self._thread: Optional[threading.Thread] = None

    @property
    def address(self) -> Endpoint:
        if self._server is None:
            raise TransportError(f"{self.role} is not listening")
        host, port = self._server.server_address[:2]
        return host, port

    def start(self) -> Endpoint:
        owner = self

        class _Handler(socketserver.BaseRequestHandler):
            def handle(self):
                owner._accept(self.request)

        try:
            self._server = _SessionServer(self.listen, _Handler)
        except OSError as e:
            raise TransportError(f"cannot listen on {self.listen[0]}:{self.listen[1]}: {e}") from e
        self._thread = threading.Thread(
            target=self._server.serve_forever, name=f"hhb-{self.role}", daemon=True,
        )
        self._thread.start()
        log.info("[NETIO] %s listening on %s:%d", self.role, *self.address)
        return self.address

    def close(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()
            self._server = None
        if self._thread is not None:
            self._thread.join()
            self._thread = None

    def __enter__(self):
        self.start()
        return self

    def __exit__(self, *exc):
        self.close()

    def wait_for(self, sessions: int, timeout: Optional[float] = None) -> bool:
        with self._done:
            return self._done.wait_for(lambda: self.completed >= sessions, timeout)

    def _next(self):
        with self._lock:
            return next(self._indices, None)

    def _accept(self, sock: socket.socket) -> None:
        item = self._next()
        if item is None:
            log.warning("[NETIO] %s: session schedule exhausted, dropping connection", self.role)
            return
        sock.settimeout(self.timeout)
        try:
            self._serve(sock, item)
        finally:
            with self._done:
                self.completed += 1
                self._done.notify_all()

    def _serve(self, sock: socket.socket, item) -> None:
        raise NotImplementedError


# === READER ===

class ReaderServer(_FramedService):
    role = "reader"

    def __init__(self, params: Params, keys: KeyPair, master_seed: int, listen: Endpoint,
                 indices: Optional[Iterator[int]] = None, first_session: int = 0,
                 timeout: float = DEFAULT_IO_TIMEOUT):
        if keys.k != params.k:
            raise ConfigError("key length does not match k", {"keys": f"k = {keys.k}, expected {params.k}"})
        super().__init__(listen, indices if indices is not None else itertools.count(first_session), timeout)
        self.params = params
        self.keys = keys
        self.master_seed = master_seed
        self.records: Dict[int, ReaderRecord] = {}

    def _serve(self, sock: socket.socket, index: int) -> None:
        try:
            record = self._session(sock, index)
        except (HHBError, OSError) as e:
            log.warning("[NETIO] reader session %d aborted: %s", index, e)
            record = ReaderRecord(index, SessionOutcome.ABORTED)
        self.records[index] = record

    def _session(self, sock: socket.socket, index: int) -> ReaderRecord:
        params, k = self.params, self.params.k
        rng = Rng.for_party(self.master_seed, index, PARTY_READER)
        reader = Reader(params, self.keys)
        send_frame(sock, params)
        for _ in range(k + 1):
            send_frame(sock, Exchange(reader.next_exchange(rng)))
        for _ in range(params.r):
            b = receive(sock, Blinding, k).b
            reader.receive_blinding(b)
            a = reader.challenge(rng)
            send_frame(sock, Challenge(a))
            z = receive(sock, Response).z
            reader.check_round(b, a, z)
        decision = reader.decide()
        send_frame(sock, DecisionMessage(decision))
        log.debug("[NETIO] reader session %d: %s (%d wrong)", index, decision.value, reader.wrong_count)
        return ReaderRecord(index, SessionOutcome.of(decision), reader.wrong_count, reader.theta, reader.x)


# === TAG ===

class TagClient:
    """Connects once per session and answers as the tag holding ``keys``."""

    def __init__(self, keys: KeyPair, master_seed: int, connect: Endpoint,
                 timeout: float = DEFAULT_IO_TIMEOUT, min_key_length: int = 1):
        self.keys = keys
        self.master_seed = master_seed
        self.connect = connect
        self.timeout = timeout
        self.min_key_length = min_key_length

    def run_session(self, index: int) -> TagRecord:
        sock = _connect(self.connect, self.timeout)
        try:
            return self._session(sock, index)
        except (HHBError, OSError) as e:
            log.warning("[NETIO] tag session %d aborted: %s", index, e)
            return TagRecord(index, SessionOutcome.ABORTED)
        finally:
            sock.close()

    def run(self, sessions: int, first_session: int = 0) -> List[TagRecord]:
        return [self.run_session(first_session + n) for n in range(sessions)]

    def _session(self, sock: socket.socket, index: int) -> TagRecord:
        params = receive(sock, Params)
        if params.k != self.keys.k:
            raise ProtocolViolation(f"reader announced k = {params.k}, tag holds k = {self.keys.k}")
        try:
            params.validate(self.min_key_length)
        except ConfigError as e:
            raise ProtocolViolation(f"reader announced invalid parameters: {'; '.join(e.details())}") from None
        rng = Rng.for_party(self.master_seed, index, PARTY_TAG)
        tag = Tag(params, self.keys)
        for _ in range(params.k + 1):
            tag.consume_exchange(receive(sock, Exchange, params.k).triple)
        for _ in range(params.r):
            send_frame(sock, Blinding(tag.commit_blinding(rng)))
            a = receive(sock, Challenge, params.k).a
            send_frame(sock, Response(tag.respond(a, rng)))
        decision = receive(sock, DecisionMessage).decision
        tag.observe_decision(decision)
        return TagRecord(index, SessionOutcome.of(decision), tag.theta, tag.x)


# === PROXY ===

def attack_schedule(target: str, m: int, first_session: int = 0, force_a: bool = False,
                    pairs: tuple[int, ...] = (0, 1, 2)) -> Iterator[SessionRequest]:
    """Connection n attacks bit n // m; sessions are bit-major like the in-process estimators."""
    if target not in ("y", "s") or m < 1:
        raise ContractViolation(f"attack target must be y or s with m >= 1, got {target!r}, m={m}")
    for n in itertools.count():
        bit = n // m
        plan: InterceptorPlan = YAttackPlan(bit) if target == "y" else SAttackPlan(bit, pairs, force_a)
        yield SessionRequest(first_session + n, plan)


class MitmProxy(_FramedService):
    role = "proxy"

    def __init__(self, upstream: Endpoint, listen: Endpoint, master_seed: int,
                 schedule: Optional[Iterator[SessionRequest]] = None, first_session: int = 0,
                 timeout: float = DEFAULT_IO_TIMEOUT):
        if schedule is None:
            schedule = (SessionRequest(n) for n in itertools.count(first_session))
        super().__init__(listen, schedule, timeout)
        self.upstream = upstream
        self.master_seed = master_seed
        self.results: Dict[int, SessionResult] = {}
        self.transcripts: Dict[int, Transcript] = {}
        self.params: Optional[Params] = None

    def _serve(self, downstream: socket.socket, request: SessionRequest) -> None:
        index = request.index
        transcript = Transcript()
        self.transcripts[index] = transcript
        try:
            upstream = _connect(self.upstream, self.timeout)
        except TransportError as e:
            log.warning("[NETIO] proxy session %d aborted: %s", index, e)
            self.results[index] = SessionResult(index, SessionOutcome.ABORTED)
            return
        try:
            self._relay(upstream, downstream, request, transcript)
            outcome = SessionOutcome.of(transcript.decision)
        except (HHBError, OSError) as e:
            log.warning("[NETIO] proxy session %d aborted: %s", index, e)
            outcome = SessionOutcome.ABORTED
        finally:
            upstream.close()
        self.results[index] = SessionResult(
            index=index,
            outcome=outcome,
            perturbed=transcript.perturbed_count,
            digest=transcript.digest() if outcome is not SessionOutcome.ABORTED else None,
        )

    def _relay(self, upstream: socket.socket, downstream: socket.socket,
               request: SessionRequest, transcript: Transcript) -> None:
        upstream.settimeout(self.timeout)
        first = read_frame(upstream)
        params = decode_payload(first)
        if not isinstance(params, Params):
            raise ProtocolViolation(f"session must open with Params, got {first.name}")
        self.params = params
        send_bytes(downstream, first.to_bytes())

        rng = Rng.for_party(self.master_seed, request.index, PARTY_ADVERSARY)
        interceptor = request.plan.build(rng) if request.plan is not None else None
        for flow_point, expected in session_schedule(params.k, params.r):
            if flow_point.direction is Direction.READER_TO_TAG:
                src, dst = upstream, downstream
            else:
                src, dst = downstream, upstream
            frame = read_frame(src)
            sent = decode_payload(frame, params.k)
            if not isinstance(sent, expected):
                raise ProtocolViolation(f"expected {expected.__name__} at {flow_point}, got {frame.name}")
            delivered = deliver(interceptor, flow_point, sent)
            transcript.record(flow_point, sent, delivered)
            send_frame(dst, delivered)
            if isinstance(sent, DecisionMessage):
                transcript.decision = sent.decision

    def ordered_results(self, count: int, first_session: int = 0) -> List[SessionResult]:
        """Results of sessions first_session .. first_session + count - 1; gaps count as aborted."""
        return [
            self.results.get(first_session + n) or SessionResult(first_session + n, SessionOutcome.ABORTED)
            for n in range(count)
        ]


# === ОРАКУЛ ЧЕРЕЗ TCP ===

class LoopbackTcpOracle:
    """
    SessionOracle over real sockets on the loopback interface.

    Every batch starts a reader server and a proxy on ephemeral ports and
    runs the tag client through the proxy one session at a time, so the
    schedule position of each connection is the request order.
    """

    def __init__(self, params: Params, keys: KeyPair, master_seed: int,
                 tag_keys: Optional[KeyPair] = None, host: str = LOOPBACK_HOST,
                 timeout: float = DEFAULT_IO_TIMEOUT):
        self.params = params
        self.keys = keys
        self.tag_keys = tag_keys or keys
        self.master_seed = master_seed
        self.host = host
        self.timeout = timeout

    def run_many(self, requests) -> List[SessionResult]:
        requests = list(requests)
        if not requests:
            return []
        reader = ReaderServer(
            self.params, self.keys, self.master_seed, (self.host, 0),
            indices=iter([req.index for req in requests]), timeout=self.timeout,
        )
        with reader:
            proxy = MitmProxy(reader.address, (self.host, 0), self.master_seed,
                              schedule=iter(requests), timeout=self.timeout)
            with proxy:
                tag = TagClient(self.tag_keys, self.master_seed, proxy.address, timeout=self.timeout)
                tag_records = [tag.run_session(req.index) for req in requests]
                reader.wait_for(len(requests), timeout=self.timeout)
                proxy.wait_for(len(requests), timeout=self.timeout)
        log.debug("[NETIO] loopback batch of %d sessions finished", len(requests))
        return [
            self._merge(req.index, reader.records.get(req.index), t, proxy.results.get(req.index))
            for req, t in zip(requests, tag_records)
        ]

    @staticmethod
    def _merge(index: int, reader: Optional[ReaderRecord], tag: TagRecord,
               relay: Optional[SessionResult]) -> SessionResult:
        parts = (reader, tag, relay)
        if any(p is None or p.outcome is SessionOutcome.ABORTED for p in parts):
            return SessionResult(index, SessionOutcome.ABORTED)
        return SessionResult(
            index=index,
            outcome=reader.outcome,
            wrong_count=reader.wrong_count,
            theta_agrees=reader.theta == tag.theta,
            x_agrees=reader.x == tag.x,
            perturbed=relay.perturbed,
            digest=relay.digest,
        )
