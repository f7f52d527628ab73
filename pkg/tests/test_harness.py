import json
import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qsauction.adversary import AttackDescriptor
from qsauction.bids import Bid
from qsauction.harness import (
    Rate,
    RunStatistics,
    consumption_from_transcript,
    efficiency_report,
    emit_report,
    load_report,
    run_trials,
    trial_seed,
)
from qsauction.protocol import Verdict, run_auction
from qsauction.scenario import Scenario, ScenarioError, example3_scenario, load_scenario, scenario_from_dict


class TestScenario:
    def test_golden_file(self, data_dir):
        sc = load_scenario(data_dir / "example3.json")
        assert sc == example3_scenario()
        assert (sc.n_parties, sc.bid_length) == (3, 4)
        assert [str(b) for b in sc.bids] == ["1011", "0111"]
        assert [p.order_string() for p in sc.permutations] == ["1324", "4123"]
        assert " ".join(s.value for s in sc.carriers[1]) == "+ 0 - 1"

    def test_odd_length(self, data_dir):
        with pytest.raises(ScenarioError, match="bid_length must be even") as err:
            load_scenario(data_dir / "odd_length.json")
        assert err.value.location == "bid_length"

    def test_too_many_bids(self, data_dir):
        with pytest.raises(ScenarioError) as err:
            load_scenario(data_dir / "too_many_bids.json")
        assert err.value.location == "bids"

    def test_missing_file(self, tmp_path):
        with pytest.raises(ScenarioError, match="cannot read"):
            load_scenario(tmp_path / "nope.json")

    def test_bad_json_has_position(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"n_parties": 3,\n "bid_length": }')
        with pytest.raises(ScenarioError) as err:
            load_scenario(path)
        assert err.value.location.endswith(":2:16")

    @pytest.mark.parametrize(
        "patch,location",
        [
            ({"decoy_rate": 0.0}, "decoy_rate"),
            ({"decoy_rate": 1.5}, "decoy_rate"),
            ({"n_parties": 2, "bids": "random"}, "n_parties"),
            ({"tie_policy": "coin"}, "tie_policy"),
            ({"carriers": ["0 1 + +y", "0 0 0 0"]}, "carriers[0]"),
            ({"permutations": ["1324"]}, "permutations"),
            ({"bids": ["1011", "01"]}, "bids[1]"),
            ({"colour": "red"}, "colour"),
            ({"attack": {"attack": "cnot", "target": "Zed"}}, "attack.target"),
            ({"seed": -1}, "seed"),
        ],
    )
    def test_invalid_fields(self, patch, location):
        data = example3_scenario().to_dict()
        data.update(patch)
        with pytest.raises(ScenarioError) as err:
            scenario_from_dict(data)
        assert err.value.location == location

    def test_dict_round_trip(self):
        sc = example3_scenario().with_changes(attack=AttackDescriptor("cnot", target="Bob"), decoy_count=8)
        assert scenario_from_dict(json.loads(sc.canonical_json())) == sc

    @pytest.mark.parametrize("k,m,d", [(0.5, 4, 2), (0.3, 10, 3), (1.0, 4, 4), (0.1, 4, 1)])
    def test_decoys_per_sequence(self, k, m, d):
        assert Scenario(3, m, decoy_rate=k).decoys_per_sequence == d

    def test_digest_tracks_content(self):
        sc = example3_scenario()
        assert sc.digest() == example3_scenario().digest()
        assert sc.digest() != sc.with_changes(seed=1).digest()


class TestRate:
    def test_interval_contains_estimate(self):
        lo, hi = Rate(30, 100).interval()
        assert lo < 0.3 < hi

    def test_extremes_stay_in_unit_interval(self):
        assert Rate(0, 50).interval()[0] == 0.0
        assert Rate(50, 50).interval()[1] == 1.0

    def test_empty(self):
        assert Rate(0, 0).value is None and Rate(0, 0).interval() is None

    def test_wilson_reference_value(self):
        # closed form with z = 2.5758293035489, p = 1/2, n = 100
        z = 2.5758293035489
        half = z * math.sqrt(0.25 / 100 + z * z / 40_000) / (1 + z * z / 100)
        lo, hi = Rate(50, 100).interval()
        assert lo == pytest.approx(0.5 - half, abs=1e-9)
        assert hi == pytest.approx(0.5 + half, abs=1e-9)


class TestRunTrials:
    def test_honest_golden_all_complete(self):
        stats = run_trials(example3_scenario(), 1000)
        assert stats.completions == 1000
        assert stats.detection_rate == 0.0
        assert stats.decode_errors == 0
        assert stats.xi == 1.0

    def test_deterministic(self):
        sc = Scenario(3, 4, tie_policy="lowest_id", attack=AttackDescriptor("cnot", target="Bob"))
        assert run_trials(sc, 300, seed=4) == run_trials(sc, 300, seed=4)
        assert run_trials(sc, 300, seed=4) != run_trials(sc, 300, seed=5)

    def test_trial_is_replayable(self):
        sc = Scenario(3, 4, tie_policy="lowest_id")
        stats = run_trials(sc, 1, seed=9)
        outcome, _ = run_auction(sc, trial_seed(9, 0))
        assert stats.completions == (outcome.verdict is Verdict.COMPLETED)

    def test_chunked_merge_matches_serial(self):
        from qsauction.harness import _merge, _run_chunk

        sc = Scenario(3, 4, attack=AttackDescriptor("intercept_resend", target="Bob"))
        whole = _run_chunk((sc, 1, 0, 60))
        parts = _merge([_run_chunk((sc, 1, 0, 25)), _run_chunk((sc, 1, 25, 60))])
        assert whole == parts

    def test_counts_sum_to_trials(self):
        with pytest.raises(ValueError):
            RunStatistics("h", 0, trials=3, completions=1)

    def test_rejects_zero_trials(self):
        with pytest.raises(ValueError):
            run_trials(example3_scenario(), 0)

    @given(st.integers(3, 5), st.integers(0, 1000))
    @settings(max_examples=15, deadline=None)
    def test_xi_is_one_for_honest_runs(self, n, seed):
        stats = run_trials(Scenario(n, 4, tie_policy="lowest_id"), 5, seed=seed)
        assert stats.carrier_qubits == 5 * (n - 1) * 4
        assert stats.xi == 1.0

    def test_ties_counted(self):
        stats = run_trials(Scenario(3, 2, bids=(Bid("01"), Bid("01"))), 10)
        assert stats.ties == 10 and stats.xi == 1.0


class TestReports:
    @pytest.fixture
    def stats(self):
        sc = Scenario(3, 4, attack=AttackDescriptor("cnot", target="Bob"))
        return run_trials(sc, 200, seed=2)

    @pytest.mark.parametrize("fmt", ["json", "csv"])
    def test_round_trip(self, stats, fmt, tmp_path):
        path = tmp_path / f"report.{fmt}"
        emit_report(stats, fmt, path)
        assert load_report(path) == stats

    def test_csv_shape(self, stats):
        lines = emit_report(stats, "csv").splitlines()
        assert lines[0] == "metric,value"
        assert all(line.count(",") == 1 for line in lines)
        keys = [line.split(",")[0] for line in lines[1:]]
        assert len(keys) == len(set(keys))

    def test_replay_fields_and_intervals(self, stats):
        data = json.loads(emit_report(stats, "json"))
        assert data["scenario_hash"] == stats.scenario_hash and len(data["scenario_hash"]) == 64
        assert data["seed"] == 2
        for name in stats.rates:
            assert f"{name}_n" in data and f"{name}_ci99_low" in data and f"{name}_ci99_high" in data

    def test_floats_exact(self, stats):
        data = json.loads(emit_report(stats, "json"))
        assert data["channel_abort_rate"] == stats.channel_aborts / stats.trials

    def test_unknown_format(self, stats):
        with pytest.raises(ValueError):
            emit_report(stats, "xml")

    def test_schema_version_checked(self, stats, tmp_path):
        data = stats.to_dict()
        data["schema_version"] = 99
        path = tmp_path / "r.json"
        path.write_text(json.dumps(data))
        with pytest.raises(ValueError):
            load_report(path)


class TestEfficiency:
    def test_rows(self):
        rows, usage = efficiency_report()
        xi = {r.protocol: r.xi for r in rows}
        assert xi == {"GHZ-based": 1.5, "EPR-based": 1.0, "SinglePhoton": 1.0}
        assert [r.source for r in rows] == ["reference", "reference", "measured"]
        assert usage == {
            "carrier_qubits": 8,
            "bid_bits": 8,
            "decoy_qubits": 4,
            "epr_qubits": 8,
            "epr_decoy_qubits": 8,
        }

    def test_measured_row_ignores_attacks(self):
        sc = example3_scenario().with_changes(attack=AttackDescriptor("cnot", target="Bob"))
        rows, _ = efficiency_report(["SinglePhoton"], sc)
        assert rows[0].xi == 1.0

    def test_unknown_family(self):
        with pytest.raises(ValueError):
            efficiency_report(["W-state"])

    def test_consumption_counts_only_returns(self):
        _, log = run_auction(example3_scenario().with_changes(attack=AttackDescriptor("cnot", target="Bob", channel="S2"), decoy_count=16))
        usage = consumption_from_transcript(log)
        # aborted at the S3 check: carriers went out, no bid bits came back
        assert usage["carrier_qubits"] == 8 and usage["bid_bits"] == 0
