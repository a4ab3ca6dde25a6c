from __future__ import annotations

import csv
import io
import json
import logging
import secrets
import time
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence

from app.engine.attacks.estimators import RecoveryReport, recover_s, recover_y
from app.engine.attacks.interceptors import CoinFlipPlan
from app.engine.attacks.theta_oracle import predicted_rates
from app.engine.calculators.statistics import (
    binomial_gof, coin_accept_probability, histogram, rate_summary, sigma,
)
from app.engine.core.constants import (
    DEFAULT_IO_TIMEOUT, MIN_KEY_LENGTH, PARTY_KEYGEN, SWEEP_AXES,
)
from app.engine.core.errors import ConfigError
from app.engine.core.gf2 import Rng, derive_seed
from app.engine.core.models import KeyPair, Params, SessionOutcome
from app.engine.core.utils import measure_time
from app.engine.netio.roles import LoopbackTcpOracle
from app.engine.oracle import InProcessOracle, SessionOracle, SessionRequest, SessionResult
from app.schemas import ExperimentSpec, parse_spec

log = logging.getLogger(__name__)

_CSV_COLUMNS = ["stage", "index", "bit", "outcome", "wrong_count", "theta_agrees", "x_agrees", "perturbed"]


def generate_keys(k: int, seed: int) -> KeyPair:
    return KeyPair.generate(k, Rng.for_party(seed, 0, PARTY_KEYGEN))


def draw_seed() -> int:
    return secrets.randbits(64)


def resolve_seed(seed: Optional[int]) -> int:
    """Operator-supplied seed, range-checked; a fresh one when absent."""
    if seed is None:
        return draw_seed()
    if not 0 <= seed < 1 << 64:
        raise ConfigError("seed out of range", {"seed": f"must be in [0, 2^64), got {seed}"})
    return seed


@dataclass
class ExperimentRecord:
    spec: Dict[str, Any]
    outcomes: List[Dict[str, Any]] = field(default_factory=list)
    rates: Dict[str, Any] = field(default_factory=dict)
    recovery: Optional[Dict[str, Any]] = None
    elapsed_ms: float = 0.0

    def as_dict(self) -> Dict[str, Any]:
        return {
            "spec": self.spec,
            "outcomes": self.outcomes,
            "rates": self.rates,
            "recovery": self.recovery,
            "elapsed_ms": self.elapsed_ms,
        }

    def to_json(self, indent: Optional[int] = 2) -> str:
        return json.dumps(self.as_dict(), indent=indent)

    def to_csv(self) -> str:
        """One row per session, then a footer row per stage with the accept rate."""
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=_CSV_COLUMNS + ["accept_rate", "ci_low", "ci_high"],
                                extrasaction="ignore", lineterminator="\n")
        writer.writeheader()
        stages: Dict[str, List[Dict[str, Any]]] = {}
        for row in self.outcomes:
            writer.writerow(row)
            stages.setdefault(row["stage"], []).append(row)
        for stage, rows in stages.items():
            done = [r for r in rows if r["outcome"] != SessionOutcome.ABORTED.value]
            summary = rate_summary(sum(1 for r in done if r["outcome"] == SessionOutcome.ACCEPT.value), len(done))
            writer.writerow({
                "stage": f"aggregate:{stage}",
                "outcome": f"{summary['count']}/{summary['n']}",
                "accept_rate": summary["rate"],
                "ci_low": summary["ci_low"],
                "ci_high": summary["ci_high"],
            })
        return buf.getvalue()

    def render(self, fmt: str) -> str:
        return self.to_csv() if fmt == "csv" else self.to_json()


def _session_rows(stage: str, results: Sequence[SessionResult], m: Optional[int] = None) -> List[Dict[str, Any]]:
    rows = []
    for res in results:
        row = {"stage": stage, "bit": res.index // m if m else None}
        row.update(res.as_dict())
        rows.append(row)
    return rows


def _accept_summary(results: Sequence[SessionResult]) -> Dict[str, Any]:
    done = [r for r in results if r.outcome is not SessionOutcome.ABORTED]
    summary = rate_summary(sum(1 for r in done if r.outcome is SessionOutcome.ACCEPT), len(done))
    summary["aborted"] = len(results) - len(done)
    return summary


def _recovery_rates(report: RecoveryReport) -> Dict[str, Any]:
    return {
        "bit_accuracy": report.bit_accuracy,
        "exact": report.exact,
        "sessions": report.total_sessions,
        "by_truth": report.class_rates,
    }


class HHBEngine:
    """
    Experiment harness. Every stage draws from its own master seed
    derive_seed(seed, stage), and every session inside a stage from
    (stage seed, session index, party), so records do not depend on the
    worker count or on which other stages ran.
    """

    def __init__(self, min_key_length: int = MIN_KEY_LENGTH, io_timeout: float = DEFAULT_IO_TIMEOUT):
        self.min_key_length = min_key_length
        self.io_timeout = io_timeout
        self._scenarios: Dict[str, Callable[..., ExperimentRecord]] = {
            "honest": self._honest,
            "coin-flip-adversary": self._coin_flip,
            "attack-y": self._attack_y,
            "attack-s": self._attack_s,
            "attack-full": self._attack_full,
            "impersonate": self._impersonate,
        }

    def _oracle(self, spec: ExperimentSpec, params: Params, keys: KeyPair, seed: int, stage: str,
                tag_keys: Optional[KeyPair] = None) -> SessionOracle:
        stage_seed = derive_seed(seed, stage)
        if spec.transport == "tcp":
            return LoopbackTcpOracle(params, keys, stage_seed, tag_keys=tag_keys, timeout=self.io_timeout)
        return InProcessOracle(params, keys, stage_seed, tag_keys=tag_keys, workers=spec.workers)

    @measure_time
    def run_experiment(self, spec: ExperimentSpec) -> ExperimentRecord:
        params = spec.params(self.min_key_length)
        seed = spec.seed if spec.seed is not None else draw_seed()
        keys = spec.keys.to_keys() if spec.keys is not None else generate_keys(params.k, seed)
        # records must not depend on the worker count
        echo = spec.model_copy(update={"seed": seed, "eps": params.eps.value, "u": params.u}).model_dump(
            exclude={"workers"})
        echo["eps_parts"] = params.eps.parts
        log.info("[ENGINE] %s: k=%d r=%d eps=%s u=%d seed=%d transport=%s workers=%d",
                 spec.scenario, params.k, params.r, params.eps, params.u, seed, spec.transport, spec.workers)

        start = time.perf_counter()
        record = self._scenarios[spec.scenario](spec, params, keys, seed)
        record.spec = echo
        record.elapsed_ms = round((time.perf_counter() - start) * 1000.0, 3)
        log.info("[ENGINE] %s finished in %.0f ms", spec.scenario, record.elapsed_ms)
        return record

    def sweep(self, spec: ExperimentSpec, axis: str, values: Sequence[float]) -> List[ExperimentRecord]:
        if axis not in SWEEP_AXES:
            raise ConfigError(f"unknown sweep axis {axis!r}", {"axis": f"must be one of {', '.join(SWEEP_AXES)}"})
        if not values:
            raise ConfigError("empty sweep", {"values": "at least one value required"})
        base = spec if spec.seed is not None else spec.model_copy(update={"seed": draw_seed()})
        records = []
        for v in values:
            if axis == "eps":
                update: Dict[str, Any] = {"eps": float(v)}
            else:
                if float(v) != int(v):
                    raise ConfigError(f"{axis} must be an integer", {axis: f"got {v}"})
                update = {"m_y": int(v), "m_s": int(v)} if axis == "m" else {axis: int(v)}
            point = parse_spec({**base.model_dump(), **update})
            log.info("[ENGINE] sweep %s = %s", axis, v)
            records.append(self.run_experiment(point))
        return records

    # === СЦЕНАРИИ ===

    def _honest(self, spec: ExperimentSpec, params: Params, keys: KeyPair, seed: int) -> ExperimentRecord:
        oracle = self._oracle(spec, params, keys, seed, "honest")
        results = oracle.run_many([SessionRequest(i) for i in range(spec.sessions)])
        done = [r for r in results if r.outcome is not SessionOutcome.ABORTED]
        wrongs = [r.wrong_count for r in done]
        rounds = len(wrongs) * params.r
        rates = {
            "accept": _accept_summary(results),
            "predicted_accept": predicted_rates(params).honest_accept,
            "round_failure_rate": sum(wrongs) / rounds if rounds else None,
            "wrong_count_histogram": histogram(wrongs, params.r),
            "goodness_of_fit": binomial_gof(wrongs, params.r, params.eps.value),
            "x_agreement": sum(1 for r in done if r.x_agrees) / len(done) if done else None,
        }
        return ExperimentRecord(spec={}, outcomes=_session_rows("honest", results), rates=rates)

    def _coin_flip(self, spec: ExperimentSpec, params: Params, keys: KeyPair, seed: int) -> ExperimentRecord:
        oracle = self._oracle(spec, params, keys, seed, "coin-flip-adversary")
        results = oracle.run_many([SessionRequest(i, CoinFlipPlan()) for i in range(spec.sessions)])
        accept = _accept_summary(results)
        exact = coin_accept_probability(params)
        sd = sigma(exact, accept["n"])
        rates = {
            "accept": accept,
            "exact_accept": exact,
            "sigma": sd,
            "z_score": (accept["rate"] - exact) / sd if sd else 0.0,
        }
        return ExperimentRecord(spec={}, outcomes=_session_rows("coin-flip-adversary", results), rates=rates)

    def _impersonation_rates(self, spec: ExperimentSpec, params: Params, keys: KeyPair, seed: int,
                             candidate: KeyPair) -> tuple[List[Dict[str, Any]], Dict[str, Any]]:
        oracle = self._oracle(spec, params, keys, seed, "impersonate", tag_keys=candidate)
        results = oracle.run_many([SessionRequest(i) for i in range(spec.sessions)])
        rates = {
            "accept": _accept_summary(results),
            "predicted_accept_if_exact": predicted_rates(params).honest_accept,
            "candidate_matches": candidate == keys,
        }
        return _session_rows("impersonate", results), rates

    def _impersonate(self, spec: ExperimentSpec, params: Params, keys: KeyPair, seed: int) -> ExperimentRecord:
        rows, rates = self._impersonation_rates(spec, params, keys, seed, spec.candidate.to_keys())
        return ExperimentRecord(spec={}, outcomes=rows, rates={"impersonation": rates})

    def _run_y(self, spec, params, keys, seed) -> RecoveryReport:
        return recover_y(spec.m_y, self._oracle(spec, params, keys, seed, "attack-y"), truth=keys.y)

    def _run_s(self, spec, params, keys, seed, force_a: bool, stage: str = "attack-s") -> RecoveryReport:
        return recover_s(spec.m_s, self._oracle(spec, params, keys, seed, stage), truth=keys.s,
                         pairs=tuple(spec.pairs), force_a=force_a)

    def _attack_y(self, spec: ExperimentSpec, params: Params, keys: KeyPair, seed: int) -> ExperimentRecord:
        report = self._run_y(spec, params, keys, seed)
        return ExperimentRecord(
            spec={},
            outcomes=_session_rows("attack-y", report.results, spec.m_y),
            rates={"y": _recovery_rates(report)},
            recovery={"y": report.as_dict()},
        )

    def _attack_s(self, spec: ExperimentSpec, params: Params, keys: KeyPair, seed: int) -> ExperimentRecord:
        report = self._run_s(spec, params, keys, seed, spec.force_a)
        outcomes = _session_rows("attack-s", report.results, spec.m_s)
        rates = {"s": _recovery_rates(report)}
        recovery = {"s": report.as_dict()}
        if spec.compare_force_a:
            other = self._run_s(spec, params, keys, seed, not spec.force_a, stage="attack-s/compare")
            outcomes += _session_rows("attack-s/compare", other.results, spec.m_s)
            rates["s_compare"] = _recovery_rates(other)
            recovery["s_compare"] = other.as_dict()
        return ExperimentRecord(spec={}, outcomes=outcomes, rates=rates, recovery=recovery)

    def _attack_full(self, spec: ExperimentSpec, params: Params, keys: KeyPair, seed: int) -> ExperimentRecord:
        y_report = self._run_y(spec, params, keys, seed)
        s_report = self._run_s(spec, params, keys, seed, spec.force_a)
        recovered = KeyPair(s=s_report.recovered, y=y_report.recovered)
        log.info("[ATTACK] recovered keys %s (exact: %s)", recovered.to_json(), recovered == keys)
        rows, imp = self._impersonation_rates(spec, params, keys, seed, recovered)
        outcomes = (
            _session_rows("attack-y", y_report.results, spec.m_y)
            + _session_rows("attack-s", s_report.results, spec.m_s)
            + rows
        )
        return ExperimentRecord(
            spec={},
            outcomes=outcomes,
            rates={"y": _recovery_rates(y_report), "s": _recovery_rates(s_report), "impersonation": imp},
            recovery={
                "y": y_report.as_dict(),
                "s": s_report.as_dict(),
                "keys": recovered.to_json(),
                "exact": recovered == keys,
            },
        )
