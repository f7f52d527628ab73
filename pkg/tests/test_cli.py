import csv
import io
import json

import pytest

from qsauction.cli import EXIT_SCENARIO, main
from qsauction.protocol import Transcript


def test_example3_prints_transcript(capsys):
    assert main(["example3"]) == 0
    log = Transcript.from_jsonl(capsys.readouterr().out)
    final = log.events[-1]
    assert final.kind == "verdict"
    assert final.payload["verdict"] == "Completed" and final.payload["winner"] == "Bob"


def test_example3_is_byte_stable(capsys):
    main(["example3"])
    first = capsys.readouterr().out
    main(["example3"])
    assert capsys.readouterr().out == first


def test_run_json(data_dir, tmp_path, capsys):
    out = tmp_path / "r.json"
    trans = tmp_path / "t.jsonl"
    code = main(["run", "--scenario", str(data_dir / "example3.json"), "--trials", "20", "--out", str(out), "--transcript", str(trans)])
    assert code == 0
    data = json.loads(out.read_text())
    assert data["completions"] == 20 and data["xi"] == 1.0
    assert trans.read_text().count("\n") == len(Transcript.from_jsonl(trans.read_text()))


def test_run_csv_stdout(data_dir, capsys):
    assert main(["run", "--scenario", str(data_dir / "cnot_attack.json"), "--trials", "50", "--format", "csv"]) == 0
    rows = dict(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows["trials"] == "50" and rows["seed"] == "99"


def test_run_reports_identical(data_dir, tmp_path):
    paths = [tmp_path / "a.json", tmp_path / "b.json"]
    for p in paths:
        main(["run", "--scenario", str(data_dir / "cnot_attack.json"), "--trials", "100", "--seed", "3", "--out", str(p)])
    assert paths[0].read_bytes() == paths[1].read_bytes()


@pytest.mark.parametrize("name", ["odd_length.json", "too_many_bids.json"])
def test_scenario_errors_exit_nonzero(name, data_dir, capsys):
    assert main(["run", "--scenario", str(data_dir / name)]) == EXIT_SCENARIO
    assert "scenario error" in capsys.readouterr().err


def test_attack_sweep(data_dir, tmp_path, capsys):
    out = tmp_path / "sweep.json"
    args = ["attack", "--scenario", str(data_dir / "example3.json"), "--type", "cnot", "--target", "Bob",
            "--sweep-decoys", "1,4", "--trials", "200", "--out", str(out)]
    assert main(args) == 0
    table = capsys.readouterr().out.splitlines()
    assert len(table) == 3
    rows = json.loads(out.read_text())
    assert [r["decoys"] for r in rows] == [1, 4]
    assert rows[1]["analytic_detection"] == pytest.approx(0.9375, abs=1e-12)


def test_attack_bad_descriptor(data_dir, capsys):
    args = ["attack", "--scenario", str(data_dir / "example3.json"), "--type", "collusion", "--trials", "1"]
    assert main(args) == EXIT_SCENARIO


def test_attack_bad_sweep(data_dir):
    with pytest.raises(SystemExit):
        main(["attack", "--scenario", str(data_dir / "example3.json"), "--type", "cnot", "--sweep-decoys", "0,x"])


def test_table2_text(capsys):
    assert main(["table2"]) == 0
    out = capsys.readouterr().out
    assert "1.50" in out and "measured" in out


def test_table2_json(capsys):
    main(["table2", "--format", "json"])
    data = json.loads(capsys.readouterr().out)
    assert [r["xi"] for r in data["rows"]] == [1.5, 1.0, 1.0]
    assert data["overhead"]["decoy_qubits"] == 4


def test_table2_csv(capsys):
    main(["table2", "--format", "csv"])
    rows = list(csv.reader(io.StringIO(capsys.readouterr().out)))
    assert rows[0][0] == "protocol" and len(rows) == 4
