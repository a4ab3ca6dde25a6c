from fractions import Fraction

import numpy as np
import pytest

from app.engine.attacks.estimators import (
    estimate_bit, recover_s, recover_s_bit, recover_y, recover_y_bit, report_from_outcomes,
)
from app.engine.attacks.interceptors import SAttackPlan
from app.engine.attacks.theta_oracle import (
    flip_pattern, predicted_rates, resync_table, theta_flip_oracle,
)
from app.engine.calculators.statistics import sigma
from app.engine.hhb_engine import generate_keys
from app.engine.core.errors import ContractViolation
from app.engine.core.gf2 import Rng
from app.engine.core.models import KeyPair, Params, SessionOutcome
from app.engine.oracle import InProcessOracle, SessionRequest, SessionResult


def _oracle(params, keys, seed=1234):
    return InProcessOracle(params, keys, master_seed=seed)


# --- exhaustive tables ---

def test_theta_flip_table_is_complete_and_always_flips():
    table = theta_flip_oracle()
    assert len(table.rows) == 8
    assert {row.original for row in table.rows} == {
        (a, b, c) for a in (0, 1) for b in (0, 1) for c in (0, 1)
    }
    assert table.controls_are_identity
    assert table.flip_probability == Fraction(1)


def test_theta_flip_decodes_a_complemented_rotation():
    for row in theta_flip_oracle().rows:
        complemented = tuple(1 - v for v in row.original)
        rotations = {complemented[i:] + complemented[:i] for i in range(3)}
        assert row.decoded in rotations
        assert sum(row.decoded) % 2 != row.parity


def test_single_pair_flips():
    first = theta_flip_oracle(pairs=(0,))
    middle = theta_flip_oracle(pairs=(1,))
    assert first.controls_are_identity and middle.controls_are_identity
    assert first.flip_probability == Fraction(1)
    # flipping the middle wire pair alone never changes theta
    assert middle.flip_probability == Fraction(0)
    assert middle.as_dict()["pairs"] == [1]


def test_flip_pattern():
    assert flip_pattern() == (1, 1, 1)
    assert flip_pattern((2, 0)) == (1, 0, 1)
    with pytest.raises(ContractViolation):
        flip_pattern(())
    with pytest.raises(ContractViolation):
        flip_pattern((3,))


def test_resync_probability_is_one_half():
    table = resync_table()
    assert len(table.rows) == 64
    assert table.resync_probability == Fraction(1, 2)
    no_flip = [row for row in table.rows if row.flips == (0, 0, 0)]
    assert all(row.resynced for row in no_flip)


def test_model_rates_at_defaults():
    model = predicted_rates(Params.build())
    assert model.s_flip_round_failure == pytest.approx(0.5 * 0.125 + 0.25)
    assert model.s_flip_accept == pytest.approx(0.5 * model.honest_accept + 0.5 * model.coin_accept)
    assert 0.50 < model.s_flip_accept < 0.51
    assert model.y_flip_accept < 1e-12
    assert model.force_a_s0_accept > model.force_a_s1_accept > model.coin_accept


def test_model_rates_follow_the_flipped_pairs():
    params = Params.build()
    assert predicted_rates(params, (0,)) == predicted_rates(params)
    blind = predicted_rates(params, (1,))
    assert not blind.s_separable
    assert blind.s_flip_accept == pytest.approx(blind.honest_accept)
    assert predicted_rates(params).s_separable
    assert predicted_rates(params).as_dict()["s_separable"] is True


def test_model_rates_without_noise():
    model = predicted_rates(Params.build(k=8, eps=0.0))
    assert model.honest_accept == 1.0
    assert model.y_flip_accept == 0.0


# --- single-bit estimator ---

def _results(outcomes, start=0, wrong=0):
    return [SessionResult(start + i, o, wrong_count=wrong) for i, o in enumerate(outcomes)]


def test_estimate_bit_threshold_and_confidence():
    A, R = SessionOutcome.ACCEPT, SessionOutcome.REJECT
    est = estimate_bit(0, _results([A] * 9 + [R]), 0.99, 0.5, 0.745, r=40)
    assert est.guess == 0 and est.accept_count == 9 and est.sessions_run == 10
    assert est.confidence > 0.85
    est = estimate_bit(1, _results([A] * 5 + [R] * 5, wrong=20), 0.99, 0.5, 0.745, r=40)
    assert est.guess == 1
    assert est.round_failure_rate == pytest.approx(0.5)


def test_estimate_bit_certifies_on_an_impossible_reject():
    A, R = SessionOutcome.ACCEPT, SessionOutcome.REJECT
    est = estimate_bit(0, _results([A] * 15 + [R]), 1.0, 0.5, 0.75, r=40)
    assert est.guess == 1
    assert est.confidence == 1.0


def test_estimate_bit_skips_aborted_sessions():
    A, X = SessionOutcome.ACCEPT, SessionOutcome.ABORTED
    est = estimate_bit(2, _results([A, A, X]), 0.99, 0.01, 0.5, r=40)
    assert est.sessions_run == 2 and est.aborted == 1 and est.guess == 0
    empty = estimate_bit(3, _results([X, X]), 0.99, 0.01, 0.5, r=40)
    assert empty.sessions_run == 0 and empty.aborted == 2 and empty.confidence == 0.5


def test_report_from_outcomes_checks_the_count(small_params):
    model = predicted_rates(small_params)
    with pytest.raises(ContractViolation):
        report_from_outcomes("y", 8, 5, _results([SessionOutcome.ACCEPT] * 39), model, 40)


# --- y stage ---

def test_recover_y_at_reduced_scale(small_params, small_keys):
    report = recover_y(5, _oracle(small_params, small_keys), truth=small_keys.y)
    assert report.exact
    assert report.bit_accuracy == 1.0
    assert report.total_sessions == 8 * 5
    assert report.class_rates["truth_1"]["accept"]["rate"] == 0.0


def test_recover_y_without_noise_needs_one_session_per_bit(noiseless_params, small_keys):
    report = recover_y(1, _oracle(noiseless_params, small_keys), truth=small_keys.y)
    assert report.exact
    assert all(e.confidence == 1.0 for e in report.estimates)


def test_recover_y_bit_matches_the_full_stage(small_params, small_keys):
    oracle = _oracle(small_params, small_keys)
    est = recover_y_bit(1, 5, oracle)
    assert est.guess == small_keys.y[1] == 1
    assert est.accept_count == 0


# --- s stage ---

def test_recover_s_at_reduced_scale(small_params, small_keys):
    report = recover_s(48, _oracle(small_params, small_keys), truth=small_keys.s)
    assert report.exact
    assert report.total_sessions == 8 * 48
    model = predicted_rates(small_params)
    assert report.threshold == pytest.approx((model.honest_accept + model.s_flip_accept) / 2)


def test_recover_s_without_noise(noiseless_params, small_keys):
    report = recover_s(16, _oracle(noiseless_params, small_keys), truth=small_keys.s)
    assert report.exact


def test_s_recovery_through_a_blind_pair_is_advisory(small_params, small_keys):
    report = recover_s(4, _oracle(small_params, small_keys), truth=small_keys.s, pairs=(1,))
    blind = predicted_rates(small_params, (1,))
    assert report.advisory and report.as_dict()["advisory"] is True
    assert report.threshold == pytest.approx(blind.honest_accept)
    assert all(e.confidence == pytest.approx(0.5) for e in report.estimates)
    assert not recover_s(4, _oracle(small_params, small_keys)).advisory


def test_s_recovery_through_the_first_pair_alone(small_params, small_keys):
    report = recover_s(48, _oracle(small_params, small_keys), truth=small_keys.s, pairs=(0,))
    assert not report.advisory
    assert report.exact


def test_s_flip_on_a_set_bit_desynchronises_theta(small_params, small_keys):
    # small_keys.s = 10110010: bit 0 set, bit 1 clear
    oracle = _oracle(small_params, small_keys, seed=99)
    hit = oracle.run_many([SessionRequest(i, SAttackPlan(0)) for i in range(400)])
    miss = oracle.run_many([SessionRequest(i, SAttackPlan(1)) for i in range(50)])
    assert not any(res.theta_agrees for res in hit)
    assert all(res.theta_agrees and res.x_agrees for res in miss)

    model = predicted_rates(small_params)
    accept = sum(res.outcome is SessionOutcome.ACCEPT for res in hit) / len(hit)
    assert abs(accept - model.s_flip_accept) < 4 * sigma(model.s_flip_accept, len(hit))
    x_rate = sum(res.x_agrees for res in hit) / len(hit)
    assert abs(x_rate - 0.5) < 4 * sigma(0.5, len(hit))
    phi = sum(res.wrong_count for res in hit) / (len(hit) * small_params.r)
    assert abs(phi - model.s_flip_round_failure) < 0.05


def test_force_a_mode_rates(small_params, small_keys):
    oracle = _oracle(small_params, small_keys, seed=7)
    model = predicted_rates(small_params)
    m = 400
    zero = recover_s_bit(1, m, oracle, first_session=0, force_a=True)
    one = recover_s_bit(0, m, oracle, first_session=m, force_a=True)
    assert abs(zero.accept_rate - model.force_a_s0_accept) < 4 * sigma(model.force_a_s0_accept, m)
    assert abs(one.accept_rate - model.force_a_s1_accept) < 4 * sigma(model.force_a_s1_accept, m)
    assert zero.guess == 0 and one.guess == 1


def test_recovered_keys_impersonate(small_params, small_keys):
    oracle = _oracle(small_params, small_keys)
    s = recover_s(48, oracle).recovered
    y = recover_y(5, oracle).recovered
    clone = KeyPair(s=s, y=y)
    impostor = InProcessOracle(small_params, small_keys, master_seed=55, tag_keys=clone)
    results = impostor.run_many([SessionRequest(i) for i in range(200)])
    assert sum(res.outcome is SessionOutcome.ACCEPT for res in results) >= 195


def test_estimators_reject_bad_arguments(small_params, small_keys):
    oracle = _oracle(small_params, small_keys)
    with pytest.raises(ContractViolation):
        recover_y(0, oracle)
    with pytest.raises(ContractViolation):
        recover_s_bit(8, 4, oracle)
    with pytest.raises(ContractViolation):
        recover_y_bit(0, 0, oracle)


def test_different_seeds_change_the_transcripts(small_params, small_keys):
    a = InProcessOracle(small_params, small_keys, 1, with_digest=True).run_many([SessionRequest(0)])
    b = InProcessOracle(small_params, small_keys, 2, with_digest=True).run_many([SessionRequest(0)])
    assert a[0].digest != b[0].digest
    assert Rng.for_party(1, 0, "tag").stream_id != Rng.for_party(2, 0, "tag").stream_id


# --- acceptance scale ---

@pytest.mark.slow
def test_s_flip_rates_match_the_model_over_many_sessions(small_params, small_keys):
    n = 10_000
    oracle = InProcessOracle(small_params, small_keys, master_seed=4242, workers=4)
    hit = oracle.run_many([SessionRequest(i, SAttackPlan(0)) for i in range(n)])
    model = predicted_rates(small_params)

    accept = sum(res.outcome is SessionOutcome.ACCEPT for res in hit) / n
    assert abs(accept - model.s_flip_accept) < 3 * sigma(model.s_flip_accept, n)

    # rounds of one session share its synchronisation state, so spread is per session
    phi = np.array([res.wrong_count for res in hit], dtype=float) / small_params.r
    assert abs(phi.mean() - model.s_flip_round_failure) < 3 * phi.std(ddof=1) / np.sqrt(n)


@pytest.mark.slow
def test_y_recovery_over_many_keys():
    params = Params.build().validate()
    exact = 0
    for seed in range(100):
        keys = generate_keys(params.k, seed)
        report = recover_y(5, InProcessOracle(params, keys, master_seed=seed, workers=4), truth=keys.y)
        exact += bool(report.exact)
        gap = report.class_rates
        if gap["truth_0"]["bits"] and gap["truth_1"]["bits"]:
            assert gap["truth_0"]["accept"]["rate"] >= 0.95
            assert gap["truth_1"]["accept"]["rate"] <= 0.01
    assert exact >= 95


@pytest.mark.slow
def test_s_recovery_over_many_keys():
    params = Params.build().validate()
    model = predicted_rates(params)
    exact = 0
    for seed in range(100):
        keys = generate_keys(params.k, seed)
        report = recover_s(48, InProcessOracle(params, keys, master_seed=seed, workers=4), truth=keys.s)
        exact += bool(report.exact)
        ones = report.class_rates["truth_1"]
        zeros = report.class_rates["truth_0"]
        if ones["bits"]:
            n = ones["accept"]["n"]
            assert abs(ones["accept"]["rate"] - model.s_flip_accept) < 4 * sigma(model.s_flip_accept, n)
        if zeros["bits"]:
            assert zeros["accept"]["rate"] >= 0.95
    assert exact >= 95
