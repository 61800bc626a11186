import csv
import json

import pytest

from accfit.cli import main


@pytest.fixture(scope="module")
def data_dir(tmp_path_factory):
    out = tmp_path_factory.mktemp("synth")
    assert main(["synth", "--out", str(out), "--seed", "2", "--duration", "12"]) == 0
    return out


def test_synth_writes_seven_platoons(data_dir):
    assert sorted(p.name for p in data_dir.glob("*.csv")) == [f"P{i}.csv" for i in range(1, 8)]


def test_simulate(data_dir, tmp_path, capsys):
    params = tmp_path / "p.json"
    params.write_text(json.dumps(dict(delta=4.0, v0=33.0, d0=2.5, th=1.4, a_max=1.4, a_min=-2.0)))
    out = tmp_path / "sim.csv"
    code = main(["simulate", "--data", str(data_dir), "--platoon", "P1", "--follower", "Tesla",
                 "--model-id", "1", "--params", str(params), "--out", str(out)])
    assert code == 0
    rows = list(csv.DictReader(out.open()))
    assert len(rows) == 121 and set(rows[0]) == {"t", "x", "v", "a", "a_cmd", "s"}
    summary = json.loads(out.with_suffix(".json").read_text())
    assert summary["collision"] is None and summary["model_id"] == 1
    assert json.loads(capsys.readouterr().out) == summary


def test_calibrate(data_dir, tmp_path):
    out = tmp_path / "res.json"
    code = main(["calibrate", "--data", str(data_dir / "P2.csv"), "--platoon", "P2", "--follower", "BMW",
                 "--model-id", "37", "--generations", "2", "--population", "6", "--no-polish",
                 "--out", str(out)])
    assert code == 0
    res = json.loads(out.read_text())
    assert res["model_id"] == 37 and res["gof"] == "nrmse_sva"
    assert set(res["params"]) == {"ks", "kv", "k0", "v0", "d0", "th"}


def test_validate_and_report(data_dir, tmp_path, capsys):
    cfg = {
        "dataset": {"path": str(data_dir), "platoons": ["P1", "P3"]},
        "model_ids": [1],
        "vehicles": ["Tesla"],
        "optimizer": {"population": 6, "generations": 2, "polish": False},
        "output_dir": "out",
    }
    path = tmp_path / "sweep.json"
    path.write_text(json.dumps(cfg))
    assert main(["validate", "--config", str(path)]) == 0
    text = capsys.readouterr().out
    assert "calibration: 2 rows, 0 failed" in text and "validation: 2 rows, 0 failed" in text
    assert (tmp_path / "out" / "validation_summary.csv").exists()
    assert main(["report", "--dir", str(tmp_path / "out")]) == 0


def test_report_on_empty_directory(tmp_path):
    assert main(["report", "--dir", str(tmp_path)]) == 1


def test_errors_exit_with_code_2(data_dir, tmp_path, capsys):
    params = tmp_path / "p.json"
    params.write_text("{}")
    code = main(["simulate", "--data", str(data_dir), "--platoon", "P1", "--follower", "Tesla",
                 "--model-id", "1", "--params", str(params), "--out", str(tmp_path / "x.csv")])
    assert code == 2
    assert "accfit: error:" in capsys.readouterr().err
    assert main(["simulate", "--data", str(tmp_path / "none.csv"), "--platoon", "P1", "--follower", "Tesla",
                 "--model-id", "1", "--params", str(params), "--out", str(tmp_path / "x.csv")]) == 2


def test_usage_error():
    with pytest.raises(SystemExit):
        main(["calibrate"])
