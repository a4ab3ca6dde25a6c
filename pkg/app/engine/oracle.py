"""
Session runners: everything an attack estimator may ask for is "run
session #n with this interceptor plan and tell me the outcome".

Every random draw of session n comes from streams derived from
(master_seed, n, party), so results do not depend on how sessions are
spread over worker processes.
"""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Protocol, Sequence

from app.engine.attacks.interceptors import InterceptorPlan
from app.engine.channel import run_session
from app.engine.core.constants import PARTY_ADVERSARY, PARTY_READER, PARTY_TAG
from app.engine.core.gf2 import Rng
from app.engine.core.models import KeyPair, Params, SessionOutcome
from app.engine.parties import Reader, Tag

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SessionRequest:
    index: int
    plan: Optional[InterceptorPlan] = None


@dataclass(frozen=True)
class SessionResult:
    index: int
    outcome: SessionOutcome
    wrong_count: Optional[int] = None
    theta_agrees: Optional[bool] = None
    x_agrees: Optional[bool] = None
    perturbed: int = 0
    digest: Optional[str] = None

    def as_dict(self) -> dict:
        return {
            "index": self.index,
            "outcome": self.outcome.value,
            "wrong_count": self.wrong_count,
            "theta_agrees": self.theta_agrees,
            "x_agrees": self.x_agrees,
            "perturbed": self.perturbed,
        }


class SessionOracle(Protocol):
    params: Params

    def run_many(self, requests: Sequence[SessionRequest]) -> List[SessionResult]:
        ...


@dataclass(frozen=True)
class SessionTask:
    params: Params
    reader_keys: KeyPair
    tag_keys: KeyPair
    master_seed: int
    request: SessionRequest
    with_digest: bool = False


def session_rngs(master_seed: int, index: int) -> tuple[Rng, Rng, Rng]:
    return (
        Rng.for_party(master_seed, index, PARTY_READER),
        Rng.for_party(master_seed, index, PARTY_TAG),
        Rng.for_party(master_seed, index, PARTY_ADVERSARY),
    )


def execute_session(task: SessionTask) -> SessionResult:
    index = task.request.index
    reader_rng, tag_rng, adversary_rng = session_rngs(task.master_seed, index)
    reader = Reader(task.params, task.reader_keys)
    tag = Tag(task.params, task.tag_keys)
    plan = task.request.plan
    interceptor = plan.build(adversary_rng) if plan is not None else None
    transcript = run_session(reader, tag, interceptor, reader_rng, tag_rng)
    return SessionResult(
        index=index,
        outcome=SessionOutcome.of(transcript.decision),
        wrong_count=transcript.wrong_count,
        theta_agrees=reader.theta == tag.theta,
        x_agrees=reader.x == tag.x,
        perturbed=transcript.perturbed_count,
        digest=transcript.digest() if task.with_digest else None,
    )


class InProcessOracle:
    """
    Runs sessions by coupling the two state machines through the channel.

    ``tag_keys`` lets the tag hold different keys from the reader (the
    impersonation scenario); by default both hold ``keys``.
    """

    def __init__(self, params: Params, keys: KeyPair, master_seed: int,
                 tag_keys: Optional[KeyPair] = None, workers: int = 1, with_digest: bool = False):
        self.params = params
        self.keys = keys
        self.tag_keys = tag_keys or keys
        self.master_seed = master_seed
        self.workers = max(1, int(workers))
        self.with_digest = with_digest

    def run_many(self, requests: Sequence[SessionRequest]) -> List[SessionResult]:
        tasks = [
            SessionTask(self.params, self.keys, self.tag_keys, self.master_seed, req, self.with_digest)
            for req in requests
        ]
        if self.workers == 1 or len(tasks) < 2 * self.workers:
            return [execute_session(t) for t in tasks]
        chunk = max(1, len(tasks) // (self.workers * 8))
        log.debug("[ENGINE] fanning %d sessions out to %d workers", len(tasks), self.workers)
        with ProcessPoolExecutor(max_workers=self.workers) as pool:
            # map keeps request order, so merging is by session index
            return list(pool.map(execute_session, tasks, chunksize=chunk))
