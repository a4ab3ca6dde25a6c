"""
Key-recovery estimators.

Stage y: flip bit i of every blinding vector. When y_i = 0 the flip
vanishes from b.y; when y_i = 1 every check inverts and the session is
rejected. Majority vote over m sessions.

Stage s: flip bit j of all three c-components of the p0-exchange (where
p0 = 0^k). When s_j = 0 nothing changes; when s_j = 1 the tag decodes a
complemented theta and the session desynchronises. The accept rate is
thresholded halfway between the two model rates. Single-pair flips use
the model of that pair set; when it never moves theta the guesses are
only advisory.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Sequence

from app.engine.attacks.interceptors import SAttackPlan, YAttackPlan
from app.engine.attacks.theta_oracle import ModelRates, predicted_rates
from app.engine.calculators.statistics import binomial_likelihood, rate_summary
from app.engine.core.errors import ContractViolation
from app.engine.core.gf2 import BitVec
from app.engine.core.models import SessionOutcome
from app.engine.oracle import SessionOracle, SessionRequest, SessionResult

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class BitEstimate:
    index: int
    guess: int
    sessions_run: int
    accept_count: int
    confidence: float
    aborted: int = 0
    round_failure_rate: Optional[float] = None

    @property
    def accept_rate(self) -> float:
        return self.accept_count / self.sessions_run if self.sessions_run else 0.0

    @property
    def reject_rate(self) -> float:
        return 1.0 - self.accept_rate if self.sessions_run else 0.0

    def as_dict(self) -> Dict[str, Any]:
        return {
            "index": self.index,
            "guess": self.guess,
            "sessions_run": self.sessions_run,
            "accept_count": self.accept_count,
            "aborted": self.aborted,
            "accept_rate": self.accept_rate,
            "reject_rate": self.reject_rate,
            "round_failure_rate": self.round_failure_rate,
            "confidence": self.confidence,
        }


@dataclass
class RecoveryReport:
    target: str
    estimates: List[BitEstimate]
    recovered: BitVec
    m: int
    threshold: float
    total_sessions: int
    truth: Optional[BitVec] = None
    model: Optional[ModelRates] = None
    class_rates: Dict[str, Any] = field(default_factory=dict)
    results: List[SessionResult] = field(default_factory=list, repr=False)
    advisory: bool = False

    @property
    def bit_accuracy(self) -> Optional[float]:
        if self.truth is None:
            return None
        agree = sum(1 for a, b in zip(self.recovered, self.truth) if a == b)
        return agree / self.truth.length

    @property
    def exact(self) -> Optional[bool]:
        return None if self.truth is None else self.recovered == self.truth

    def as_dict(self) -> Dict[str, Any]:
        out: Dict[str, Any] = {
            "target": self.target,
            "k": self.recovered.length,
            "m": self.m,
            "threshold": self.threshold,
            "recovered_hex": self.recovered.to_hex(),
            "recovered_bits": str(self.recovered),
            "total_sessions": self.total_sessions,
            "advisory": self.advisory,
            "min_confidence": min((e.confidence for e in self.estimates), default=None),
            "estimates": [e.as_dict() for e in self.estimates],
        }
        if self.truth is not None:
            out["truth_hex"] = self.truth.to_hex()
            out["bit_accuracy"] = self.bit_accuracy
            out["class_rates"] = self.class_rates
        if self.model is not None:
            out["model"] = self.model.as_dict()
        return out


# === ОЦЕНКА ОДНОГО БИТА ===

def estimate_bit(index: int, results: Sequence[SessionResult], p_zero: float, p_one: float,
                 threshold: float, r: int) -> BitEstimate:
    """
    guess = 0 when the accept rate is at or above ``threshold``, unless the
    counts are impossible under one hypothesis (e.g. a reject when the
    noiseless honest rate is exactly 1), which then decides.
    confidence is the posterior of the guess under equal priors.
    """
    done = [res for res in results if res.outcome is not SessionOutcome.ABORTED]
    n = len(done)
    accepts = sum(1 for res in done if res.outcome is SessionOutcome.ACCEPT)
    if n == 0:
        return BitEstimate(index, 0, 0, 0, 0.5, aborted=len(results))
    l0 = binomial_likelihood(accepts, n, p_zero)
    l1 = binomial_likelihood(accepts, n, p_one)
    if l0 == 0.0 and l1 > 0.0:
        guess = 1
    elif l1 == 0.0 and l0 > 0.0:
        guess = 0
    else:
        guess = 0 if accepts / n >= threshold else 1
    total = l0 + l1
    confidence = 0.5 if total == 0 else (l0 if guess == 0 else l1) / total
    wrongs = [res.wrong_count for res in done if res.wrong_count is not None]
    phi = sum(wrongs) / (len(wrongs) * r) if wrongs else None
    return BitEstimate(
        index=index, guess=guess, sessions_run=n, accept_count=accepts,
        confidence=confidence, aborted=len(results) - n, round_failure_rate=phi,
    )


def _y_rule(model: ModelRates) -> tuple[float, float, float]:
    return model.honest_accept, model.y_flip_accept, 0.5


def _s_rule(model: ModelRates, force_a: bool) -> tuple[float, float, float]:
    if force_a:
        p0, p1 = model.force_a_s0_accept, model.force_a_s1_accept
    else:
        p0, p1 = model.honest_accept, model.s_flip_accept
    return p0, p1, (p0 + p1) / 2


def _class_rates(estimates: Sequence[BitEstimate], truth: BitVec) -> Dict[str, Any]:
    out: Dict[str, Any] = {}
    for bit in (0, 1):
        group = [e for e in estimates if truth[e.index] == bit]
        n = sum(e.sessions_run for e in group)
        accepts = sum(e.accept_count for e in group)
        phis = [e.round_failure_rate for e in group if e.round_failure_rate is not None]
        out[f"truth_{bit}"] = {
            "bits": len(group),
            "accept": rate_summary(accepts, n),
            "round_failure_rate": sum(phis) / len(phis) if phis else None,
        }
    return out


def report_from_outcomes(target: str, k: int, m: int, results: Sequence[SessionResult],
                         model: ModelRates, r: int, truth: Optional[BitVec] = None,
                         force_a: bool = False) -> RecoveryReport:
    """Bit-major results: sessions [i*m, (i+1)*m) belong to bit i."""
    if len(results) != k * m:
        raise ContractViolation(f"expected {k * m} session results, got {len(results)}")
    p0, p1, threshold = _y_rule(model) if target == "y" else _s_rule(model, force_a)
    estimates = [
        estimate_bit(i, results[i * m:(i + 1) * m], p0, p1, threshold, r) for i in range(k)
    ]
    advisory = target == "s" and not model.s_separable
    if advisory:
        log.warning("[ATTACK] s-stage model cannot separate s_j = 0 from s_j = 1; guesses are advisory")
    report = RecoveryReport(
        target=target,
        estimates=estimates,
        recovered=BitVec.from_bits(e.guess for e in estimates),
        m=m,
        threshold=threshold,
        total_sessions=len(results),
        truth=truth,
        model=model,
        results=list(results),
        advisory=advisory,
    )
    if truth is not None:
        report.class_rates = _class_rates(estimates, truth)
    return report


# === СТАДИЯ y ===

def recover_y_bit(i: int, m: int, oracle: SessionOracle, first_session: int | None = None) -> BitEstimate:
    k = oracle.params.k
    if not 0 <= i < k or m < 1:
        raise ContractViolation(f"need 0 <= i < {k} and m >= 1")
    start = i * m if first_session is None else first_session
    results = oracle.run_many([SessionRequest(start + t, YAttackPlan(i)) for t in range(m)])
    p0, p1, threshold = _y_rule(predicted_rates(oracle.params))
    return estimate_bit(i, results, p0, p1, threshold, oracle.params.r)


def recover_y(m_per_bit: int, oracle: SessionOracle, truth: Optional[BitVec] = None) -> RecoveryReport:
    params = oracle.params
    if m_per_bit < 1:
        raise ContractViolation("m must be >= 1")
    log.info("[ATTACK] y-stage: k=%d, m=%d, %d sessions", params.k, m_per_bit, params.k * m_per_bit)
    requests = [
        SessionRequest(i * m_per_bit + t, YAttackPlan(i))
        for i in range(params.k) for t in range(m_per_bit)
    ]
    results = oracle.run_many(requests)
    return report_from_outcomes("y", params.k, m_per_bit, results, predicted_rates(params), params.r, truth)


# === СТАДИЯ s ===

def recover_s_bit(j: int, m: int, oracle: SessionOracle, first_session: int | None = None,
                  pairs: tuple[int, ...] = (0, 1, 2), force_a: bool = False) -> BitEstimate:
    k = oracle.params.k
    if not 0 <= j < k or m < 1:
        raise ContractViolation(f"need 0 <= j < {k} and m >= 1")
    start = j * m if first_session is None else first_session
    plan = SAttackPlan(j, pairs, force_a)
    results = oracle.run_many([SessionRequest(start + t, plan) for t in range(m)])
    p0, p1, threshold = _s_rule(predicted_rates(oracle.params, pairs), force_a)
    return estimate_bit(j, results, p0, p1, threshold, oracle.params.r)


def recover_s(m_per_bit: int, oracle: SessionOracle, truth: Optional[BitVec] = None,
              pairs: tuple[int, ...] = (0, 1, 2), force_a: bool = False) -> RecoveryReport:
    params = oracle.params
    if m_per_bit < 1:
        raise ContractViolation("m must be >= 1")
    log.info("[ATTACK] s-stage: k=%d, m=%d, force_a=%s, %d sessions",
             params.k, m_per_bit, force_a, params.k * m_per_bit)
    requests = [
        SessionRequest(j * m_per_bit + t, SAttackPlan(j, pairs, force_a))
        for j in range(params.k) for t in range(m_per_bit)
    ]
    results = oracle.run_many(requests)
    return report_from_outcomes("s", params.k, m_per_bit, results, predicted_rates(params, pairs),
                                params.r, truth, force_a=force_a)
