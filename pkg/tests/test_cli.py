"""Command-line interface checks: subcommands, exit codes, output formats,
and config-file precedence.  All invocations run in-process via main()."""
import csv
import json

import pytest

from titepk.cli import main
from titepk.datasets import everolimus_path

DAILY = str(everolimus_path(daily_only=True))
FULL = str(everolimus_path())


# ---------------------------------------------------------------------------
# skeleton
# ---------------------------------------------------------------------------

def test_skeleton_six_levels(capsys):
    assert main(["skeleton", "6"]) == 0
    out = capsys.readouterr().out
    assert "0.02 0.12 0.30 0.50 0.68 0.80" in out
    assert "nu=3" in out          # anchor defaults to the middle level


def test_skeleton_invalid_theta(capsys):
    assert main(["skeleton", "4", "--theta", "0.05"]) == 2
    assert "error:" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# analyze
# ---------------------------------------------------------------------------

def test_analyze_text(capsys):
    assert main(["analyze", DAILY]) == 0
    out = capsys.readouterr().out
    assert "model=titepk" in out
    assert "P(OD)" in out
    assert "EWOC-eligible doses:" in out


def test_analyze_json_out(tmp_path):
    out = tmp_path / "report.json"
    assert main(["analyze", DAILY, "--format", "json", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["model"] == "titepk"
    assert rep["input"] == DAILY
    doses = [row["dose"] for row in rep["posterior"]["doses"]]
    assert doses == [2.5, 5.0]    # panel defaults to the doses in the data
    for row in rep["posterior"]["doses"]:
        assert 0.0 < row["median"] < 1.0
        assert row["p_ud"] + row["p_tt"] + row["p_od"] == pytest.approx(1.0, abs=1e-9)
    assert set(rep["posterior"]["ewoc_eligible"]) <= set(doses)


def test_analyze_config_overrides(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"prior": {"median_p": 0.20},
                               "panel": {"doses": [2.5, 5.0, 7.5, 10.0],
                                         "interval": 24.0}}))
    out_d = tmp_path / "default.json"
    out_c = tmp_path / "custom.json"
    assert main(["analyze", DAILY, "--format", "json", "--out", str(out_d)]) == 0
    assert main(["analyze", DAILY, "--config", str(cfg), "--format", "json",
                 "--out", str(out_c)]) == 0
    default = json.loads(out_d.read_text())
    custom = json.loads(out_c.read_text())
    # the config widens the panel and shifts the prior anchor
    assert len(custom["posterior"]["doses"]) == 4
    d0 = default["posterior"]["doses"][0]["median"]
    c0 = custom["posterior"]["doses"][0]["median"]
    assert d0 != c0


def test_analyze_blrm(tmp_path):
    out = tmp_path / "blrm.json"
    assert main(["analyze", DAILY, "--model", "blrm", "--format", "json",
                 "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert [r["dose"] for r in rep["posterior"]["doses"]] == [2.5, 5.0]


def test_analyze_crm(capsys):
    assert main(["analyze", DAILY, "--model", "crm"]) == 0
    out = capsys.readouterr().out
    assert "skeleton:" in out
    assert "recommended dose:" in out


def test_analyze_hierarchical_sequential(tmp_path):
    out = tmp_path / "map.json"
    assert main(["analyze", FULL, "--model", "blrm-map", "--strata",
                 "sequential", "--format", "json", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())
    assert rep["posterior"]["rhat_max"] < 1.05
    assert [r["dose"] for r in rep["posterior"]["doses"]] == [2.5, 5.0]


def test_analyze_errors(capsys, tmp_path):
    assert main(["analyze", str(tmp_path / "missing.csv")]) == 2
    # two schedules in the file: single-schedule models refuse
    assert main(["analyze", FULL, "--model", "crm"]) == 2
    assert main(["analyze", FULL, "--model", "blrm"]) == 2
    # hierarchical model needs sequential strata
    assert main(["analyze", FULL, "--model", "blrm-map"]) == 2
    capsys.readouterr()


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

def test_simulate_csv(tmp_path, capsys):
    out = tmp_path / "oc.csv"
    assert main(["simulate", "1", "--model", "crm", "--reps", "5",
                 "--seed", "3", "--out", str(out)]) == 0
    stdout = capsys.readouterr().out
    assert "scenario   1" in stdout
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 1
    assert rows[0]["scenario"] == "1" and rows[0]["method"] == "crm"
    assert rows[0]["reps"] == "5"
    assert 0.0 <= float(rows[0]["p_target"]) <= 1.0
    assert rows[0]["se_p_target"] != ""


def test_simulate_single_rep_prints_transcript(capsys):
    assert main(["simulate", "1", "--reps", "1", "--seed", "11"]) == 0
    out = capsys.readouterr().out
    assert '"transcript"' in out
    assert '"dose_index"' in out


def test_simulate_all_models_skips_inapplicable(capsys):
    assert main(["simulate", "9", "--all-models", "--reps", "2",
                 "--seed", "1"]) == 0
    out = capsys.readouterr().out
    lines = [ln for ln in out.splitlines() if ln.startswith("scenario")]
    methods = [ln.split(":")[0].split()[-1] for ln in lines]
    # binary single-schedule designs do not run on a sequential scenario
    assert methods == ["titepk", "blrm-map"]


def test_simulate_errors(capsys):
    assert main(["simulate", "9", "--model", "crm", "--reps", "2"]) == 2
    assert main(["simulate", "44", "--reps", "2"]) == 2
    capsys.readouterr()


def test_simulate_scenario_file(tmp_path, capsys):
    spec = {"seed": 7,
            "scenarios": ["1",
                          {"id": "tiny", "doses": [1.0, 2.0],
                           "phases": [{"label": "daily", "interval": 24.0,
                                       "probs": [0.10, 0.30]}]}],
            "rules": {"max_patients": 12, "mtd_min_phase": 6}}
    path = tmp_path / "campaign.json"
    path.write_text(json.dumps(spec))
    out = tmp_path / "oc.csv"
    assert main(["simulate", str(path), "--model", "crm", "--reps", "4",
                 "--out", str(out)]) == 0
    with open(out, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["scenario"] for r in rows] == ["1", "tiny"]
    assert all(float(r["mean_patients"]) <= 12 for r in rows)
    # file seed applies when --seed is absent
    out2 = tmp_path / "oc2.csv"
    assert main(["simulate", str(path), "--model", "crm", "--reps", "4",
                 "--seed", "7", "--out", str(out2)]) == 0
    assert out.read_text() == out2.read_text()
    capsys.readouterr()


def test_simulate_empty_scenario_file(tmp_path, capsys):
    path = tmp_path / "empty.json"
    path.write_text(json.dumps({"scenarios": []}))
    assert main(["simulate", str(path), "--reps", "2"]) == 2
    capsys.readouterr()


# ---------------------------------------------------------------------------
# sensitivity
# ---------------------------------------------------------------------------

def test_sensitivity_single_te(tmp_path, capsys):
    out = tmp_path / "sweep.tsv"
    assert main(["sensitivity", DAILY, "--te", "25", "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0].startswith("t_e\tdose\tinterval")
    body = [ln.split("\t") for ln in lines[1:]]
    assert [(r[0], r[1]) for r in body] == [("25", "2.5"), ("25", "5")]


def test_sensitivity_te_grid_and_timing(tmp_path):
    out = tmp_path / "sweep.tsv"
    assert main(["sensitivity", DAILY, "--te", "10,25", "--timing", "early",
                 "--out", str(out)]) == 0
    early = out.read_text().splitlines()
    assert len(early) == 1 + 4    # two half-lives x two regimens
    assert main(["sensitivity", DAILY, "--te", "10,25", "--timing", "late",
                 "--out", str(out)]) == 0
    late = out.read_text().splitlines()
    # event timing moves the inferred overdose probability
    assert early[1:] != late[1:]


def test_sensitivity_missing_file(capsys, tmp_path):
    assert main(["sensitivity", str(tmp_path / "nope.csv")]) == 2
    capsys.readouterr()
