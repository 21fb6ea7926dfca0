import json

import pytest

from mavkit.api_common import ScenarioInvalid
from mavkit.mav_catalog import MAV_FRAME
from mavkit.mav_gcs import DetectionRule, check_mission
from mavkit.mav_link import SimLinkConfig
from mavkit.mav_threats import (
    ATTACKERS,
    EXPECTED_DEFENSE,
    MATRIX_ATTACKS,
    Attack,
    AttackScenario,
    Outcome,
    matrix_scenarios,
    run_scenario,
    score_matrix,
    square_mission,
)
from mavkit.mav_vehicle import SimParams


@pytest.fixture(scope="module")
def matrix():
    return score_matrix(seed=1)


def _report(attack, signing, seed=1, **kwargs):
    return run_scenario(AttackScenario(attack, signing=signing, rng_seed=seed, **kwargs))


class TestAttack:
    @pytest.mark.parametrize("text", ["SpoofPosition", "spoof_position", "SPOOF_POSITION", " spoofposition "])
    def test_parse(self, text):
        assert Attack.parse(text) is Attack.SPOOF_POSITION

    def test_parse_unknown(self):
        with pytest.raises(ScenarioInvalid):
            Attack.parse("Teleport")

    def test_every_attack_has_an_attacker(self):
        assert set(ATTACKERS) == set(Attack) == set(EXPECTED_DEFENSE)
        assert len(MATRIX_ATTACKS) == 6 and Attack.JAM not in MATRIX_ATTACKS


class TestScenario:
    def test_defaults(self):
        scenario = AttackScenario("Replay")
        assert scenario.attack is Attack.REPLAY
        assert scenario.target == "vehicle"
        assert AttackScenario(Attack.SPOOF_POSITION).target == "gcs"
        assert scenario.validate()

    @pytest.mark.parametrize(
        "kwargs",
        [
            {"attack": Attack.REPLAY, "target": "gcs"},
            {"attack": Attack.SPOOF_POSITION, "target": "vehicle"},
            {"attack": Attack.REPLAY, "target": "moon"},
            {"attack": Attack.REPLAY, "attack_time": 200.0},
            {"attack": Attack.REPLAY, "replay_frame": "takeoff"},
            {"attack": Attack.FLOOD, "flood_rate": 0},
            {"attack": Attack.JAM, "jam_duration": -1},
            {"attack": Attack.REPLAY, "link": SimLinkConfig(drop_probability=2.0)},
        ],
    )
    def test_invalid(self, kwargs):
        with pytest.raises(ScenarioInvalid):
            AttackScenario(**kwargs).validate()

    def test_invalid_is_refused_by_run(self):
        with pytest.raises(ScenarioInvalid):
            run_scenario(AttackScenario(Attack.INJECT_COMMAND, target="gcs"))

    def test_from_dict(self):
        scenario = AttackScenario.from_dict(
            {"attack": "Flood", "signing": "on", "seed": "7", "flood_rate": "500", "drop_probability": "0.01"}
        )
        assert scenario.attack is Attack.FLOOD and scenario.signing
        assert scenario.rng_seed == 7 and scenario.link.rng_seed == 7
        assert scenario.flood_rate == 500.0
        assert scenario.link.drop_probability == 0.01

    def test_unknown_key_warns(self):
        with pytest.warns(UserWarning, match="colour"):
            scenario = AttackScenario.from_dict({"attack": "Replay", "colour": "red"})
        assert scenario.attack is Attack.REPLAY

    @pytest.mark.parametrize(
        "values", [{"attack": "Replay", "signing": "maybe"}, {"seed": "abc"}, {"attack": "Teleport"}, {"delay": "-1"}]
    )
    def test_bad_values(self, values):
        with pytest.raises(ScenarioInvalid):
            AttackScenario.from_dict(values)

    def test_from_file(self, tmp_path):
        path = tmp_path / "replay.scenario"
        path.write_text("# replay with signing\nattack = Replay\nsigning = on\nseed = 3\nreplay_frame = arm\n")
        scenario = AttackScenario.from_file(path)
        assert (scenario.attack, scenario.signing, scenario.rng_seed) == (Attack.REPLAY, True, 3)
        assert scenario.replay_frame == "arm"

    def test_with_seed_and_signing(self):
        scenario = AttackScenario(Attack.TAMPER).with_seed(9).with_signing(True)
        assert scenario.rng_seed == scenario.link.rng_seed == 9
        assert scenario.signing

    def test_matrix_scenarios(self):
        scenarios = matrix_scenarios(seed=4)
        assert len(scenarios) == 12
        assert [s.signing for s in scenarios[:2]] == [False, True]
        assert all(s.rng_seed == 4 for s in scenarios)

    def test_square_mission(self):
        items = square_mission(SimParams())
        check_mission(items)
        assert len(items) == 5
        assert items[0].frame == MAV_FRAME.GLOBAL
        assert all(i.frame == MAV_FRAME.GLOBAL_RELATIVE_ALT for i in items[1:])


class TestRuns:
    def test_replay_diverts_without_signing(self):
        report = _report(Attack.REPLAY, False)
        assert report.mission_outcome is Outcome.DIVERTED
        assert report.frames_accepted == 1
        assert not report.defended and report.passed

    def test_replay_rejected_with_signing(self):
        report = _report(Attack.REPLAY, True)
        assert report.frames_injected == 1
        assert report.frames_accepted == 0
        assert report.mission_outcome is Outcome.COMPLETED
        anomalies = [a for a in report.alerts if a.rule is DetectionRule.TIMESTAMP_ANOMALY]
        assert len(anomalies) == 1
        assert anomalies[0].details["reason"] == "ReplayOrStale"
        assert report.defended and report.passed

    def test_inject_lands_without_signing(self):
        report = _report(Attack.INJECT_COMMAND, False)
        assert report.frames_accepted == 1
        assert report.mission_outcome is Outcome.DIVERTED
        assert report.details["outcome_reason"] == "mode LAND"

    def test_inject_rejected_with_signing(self):
        report = _report(Attack.INJECT_COMMAND, True)
        assert report.frames_accepted == 0 and report.defended
        assert report.alert_counts.get("TimestampAnomaly") == 1

    def test_tamper(self):
        assert not _report(Attack.TAMPER, False).defended
        assert _report(Attack.TAMPER, True).defended

    def test_spoofed_positions_reach_unsigned_gcs(self):
        report = _report(Attack.SPOOF_POSITION, False)
        assert report.frames_accepted > 0
        assert report.alert_counts.get("PositionJump", 0) > 0
        assert report.mission_outcome is Outcome.COMPLETED

    def test_flood_trips_failsafe(self):
        report = _report(Attack.FLOOD, True)
        assert report.mission_outcome is Outcome.DIVERTED
        assert report.details["rx_overflow"] > 0
        assert report.alert_counts.get("FloodRate") == 1

    def test_jam_trips_failsafe(self):
        report = _report(Attack.JAM, False)
        assert report.mission_outcome is Outcome.DIVERTED
        assert report.details["outcome_reason"] == "failsafe gcs"
        assert report.passed

    @pytest.mark.parametrize("signing", [False, True])
    def test_eavesdrop_reads_everything(self, signing):
        report = _report(Attack.EAVESDROP, signing)
        assert report.details["decode_fraction"] == 1.0
        assert report.details["leaked_positions"] > 0
        assert report.frames_injected == 0
        assert not report.defended

    @pytest.mark.parametrize("seed", [2, 3, 11])
    def test_replay_across_seeds(self, seed):
        assert _report(Attack.REPLAY, True, seed).passed

    def test_same_seed_same_report(self):
        a = _report(Attack.SPOOF_POSITION, False, 5)
        b = _report(Attack.SPOOF_POSITION, False, 5)
        assert a.to_dict() == b.to_dict()

    def test_report_lines(self):
        lines = _report(Attack.REPLAY, True).lines()
        assert "attack: Replay" in lines
        assert "signing: on" in lines
        assert "defended: yes" in lines
        assert "passed: yes" in lines


class TestMatrix:
    def test_all_passed(self, matrix):
        assert matrix.all_passed, [r.to_dict() for r in matrix.mismatches]
        assert matrix.mismatches == []

    def test_frame(self, matrix):
        assert matrix.frame.shape == (6, 2)
        assert list(matrix.frame.index) == [a.value for a in MATRIX_ATTACKS]
        assert matrix.frame.loc["Replay", "signing on"] == "defended"
        assert matrix.frame.loc["Replay", "signing off"] == "not defended"
        assert matrix.frame.loc["Flood", "signing on"] == "not defended"

    def test_text(self, matrix):
        text = str(matrix)
        assert "signing off" in text and "MISMATCH" not in text

    def test_summary(self, matrix):
        records = [json.loads(line) for line in matrix.summary().splitlines()]
        assert len(records) == 12
        assert all(r["passed"] for r in records)
