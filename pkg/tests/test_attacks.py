"""Attack harnesses: honest baseline, the three adversarial campaigns,
their expected abort reasons, and harness-failure detection."""

import numpy as np
import pytest

from power_attest import HarnessFailure, binom_tail
from power_attest.protocol import (
    AttackResult,
    World,
    attack_application_substitution,
    attack_false_result,
    attack_measurement_substitution,
    run_attack,
    run_honest_campaign,
)


def one_app_world(seed=31):
    return World(
        apps=("alpha",),
        seed=seed,
        trace_count=8,
        pass_threshold=1,
        template_count=16,
        calibration_count=16,
        pool_size=80,
    )


def two_app_world(seed=32):
    return World(
        apps=("alpha", "bravo"),
        seed=seed,
        trace_count=8,
        pass_threshold=1,
        template_count=16,
        calibration_count=16,
        pool_size=80,
    )


@pytest.fixture(scope="module")
def meas_world():
    return one_app_world()


@pytest.fixture(scope="module")
def duo_world():
    return two_app_world()


class TestHonestCampaign:
    def test_counts_add_up(self, duo_world):
        campaign = run_honest_campaign(duo_world, 6)
        assert campaign.sessions == 6
        assert campaign.aborted == 0
        assert campaign.accepted >= 5
        assert campaign.acceptance_rate == campaign.accepted / 6
        assert len(campaign.records) == 6

    def test_apps_cycle(self, duo_world):
        campaign = run_honest_campaign(duo_world, 4)
        assert [r.app_id for r in campaign.records] == [
            "alpha", "bravo", "alpha", "bravo",
        ]

    def test_fixed_app(self, duo_world):
        campaign = run_honest_campaign(duo_world, 3, app_id="bravo")
        assert {r.app_id for r in campaign.records} == {"bravo"}

    def test_deterministic_on_fresh_worlds(self):
        first = run_honest_campaign(two_app_world(), 5)
        second = run_honest_campaign(two_app_world(), 5)
        assert first.accepted == second.accepted
        for a, b in zip(first.records, second.records):
            assert a.records == b.records

    def test_empty_campaign(self, duo_world):
        campaign = run_honest_campaign(duo_world, 0)
        assert campaign.sessions == 0
        assert campaign.acceptance_rate == 0.0


@pytest.fixture(scope="module")
def meas_outcome(meas_world):
    return attack_measurement_substitution(meas_world)


@pytest.fixture(scope="module")
def false_outcome(duo_world):
    return attack_false_result(duo_world)


class TestMeasurementSubstitution:
    def test_control_session_accepted(self, meas_outcome):
        assert meas_outcome.variants["control"].accepted

    def test_expected_abort_reasons(self, meas_outcome):
        expected = {
            "forge": "BadSignature",
            "replay": "StaleNonce",
            "replay-fresh-nonce": "BadSignature",
        }
        assert meas_outcome.details["expected"] == expected
        for name, reason in expected.items():
            record = meas_outcome.variants[name]
            assert not record.completed, name
            assert record.abort_reason == reason, name
            assert record.abort_tag == "m5", name

    def test_campaign_tallies(self, meas_outcome):
        campaign = meas_outcome.details["campaign"]
        assert set(campaign) == {"forge", "replay", "replay-fresh-nonce"}
        for counts in campaign.values():
            assert counts == {
                "sessions": 1, "aborts": 1, "expected_matches": 1,
            }
        assert meas_outcome.details["adversarial_sessions"] == 3

    def test_multiple_rounds_all_match(self):
        outcome = attack_measurement_substitution(one_app_world(41), rounds=5)
        for counts in outcome.details["campaign"].values():
            assert counts["sessions"] == 5
            assert counts["expected_matches"] == 5
        assert outcome.details["adversarial_sessions"] == 15


class TestFalseResult:
    def test_controls(self, false_outcome):
        assert false_outcome.variants["control"].accepted
        assert false_outcome.variants["donor"].accepted
        impostor = false_outcome.variants["impostor-unmodified"]
        assert impostor.completed
        assert impostor.verdict == 0

    def test_verdict_flip_caught(self, false_outcome):
        record = false_outcome.variants["flip"]
        assert record.abort_reason == "BadSignature"
        assert record.abort_tag == "m7"

    def test_verdict_replay_caught(self, false_outcome):
        record = false_outcome.variants["replay"]
        assert record.abort_reason == "StaleNonce"
        assert record.abort_tag == "m7"

    def test_multiple_rounds_all_match(self):
        outcome = attack_false_result(two_app_world(42), rounds=4)
        campaign = outcome.details["campaign"]
        assert set(campaign) == {"flip", "replay"}
        for counts in campaign.values():
            assert counts["sessions"] == 4
            assert counts["expected_matches"] == 4

    def test_mismatched_buckets_are_a_harness_failure(self):
        world = World(
            apps=("alpha", "hotel"),
            seed=7,
            trace_count=1,
            pass_threshold=1,
            template_count=2,
            calibration_count=4,
            pool_size=2,
        )
        with pytest.raises(HarnessFailure, match="bucket"):
            attack_false_result(world)
        with pytest.raises(HarnessFailure, match="bucket"):
            attack_application_substitution(world, sessions=1)


class TestApplicationSubstitution:
    def test_bernoulli_mode_details(self):
        outcome = attack_application_substitution(mode="bernoulli", sessions=10**5)
        details = outcome.details
        assert details["mode"] == "bernoulli"
        assert details["sessions"] == 10**5
        assert details["p_session"] == binom_tail(52, 21, 0.082)
        assert details["expected_hits"] == 10**5 * details["p_session"]
        assert details["hits"] == 0
        assert outcome.variants == {}

    def test_bernoulli_mode_honors_parameters(self):
        outcome = attack_application_substitution(
            mode="bernoulli", sessions=500, trace_count=4, pass_threshold=1,
            p_target=0.3, seed=11,
        )
        assert outcome.details["p_session"] == binom_tail(4, 1, 0.3)
        assert 0 <= outcome.details["hits"] <= 500

    def test_bernoulli_deterministic(self):
        kwargs = dict(
            mode="bernoulli", sessions=2000, trace_count=2, pass_threshold=1,
            p_target=0.3, seed=12,
        )
        first = attack_application_substitution(**kwargs)
        second = attack_application_substitution(**kwargs)
        assert first.details["hits"] == second.details["hits"]
        assert first.details["hits"] > 0

    def test_unknown_mode(self):
        with pytest.raises(ValueError):
            attack_application_substitution(mode="half")

    def test_full_mode_small_campaign(self, duo_world):
        outcome = attack_application_substitution(
            duo_world, mode="full", sessions=60
        )
        details = outcome.details
        assert details["sessions"] == 60
        assert details["f_decoy"] < details["p_target"] < details["f_pool"]
        assert 0.0 < details["q"] < 1.0
        assert details["hits"] == round(details["acceptance_rate"] * 60)
        assert details["wilson_low"] <= details["acceptance_rate"]
        assert details["acceptance_rate"] <= details["wilson_high"]
        assert isinstance(details["target_in_interval"], bool)


class TestRunAttack:
    def test_dispatch(self, meas_world):
        outcome = run_attack("subst-meas", world=meas_world)
        assert isinstance(outcome, AttackResult)
        assert outcome.name == "subst-meas"

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="unknown attack"):
            run_attack("dos")
