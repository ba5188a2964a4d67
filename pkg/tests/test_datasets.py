"""CSV dataset loading: strict validation with line numbers, schedule
filtering, and conversion to the binary comparator format."""
import pytest

from titepk import datasets
from titepk.datasets import DatasetError, load_dataset


def _write(tmp_path, text):
    p = tmp_path / "d.csv"
    p.write_text(text)
    return p


HEADER = "patient_id,schedule,dose,interval,time,dlt\n"


def test_bundled_datasets_load():
    daily = load_dataset(datasets.everolimus_path(daily_only=True))
    full = load_dataset(datasets.everolimus_path())
    assert len(daily) == 10
    assert len(full) == 28
    assert datasets.schedules(full) == ["weekly", "daily"]
    assert datasets.schedules(daily) == ["daily"]


def test_outcome_conversion():
    full = load_dataset(datasets.everolimus_path())
    outs = datasets.outcomes(full)
    assert len(outs) == 28
    daily_only = datasets.outcomes(full, "daily")
    assert len(daily_only) == 10
    assert all(o.regimen.label == "daily" for o in daily_only)
    assert sum(o.dlt for o in daily_only) == 5


def test_to_binary_aggregation():
    full = load_dataset(datasets.everolimus_path())
    b = datasets.to_binary(full, "daily")
    assert b.doses == (2.5, 5.0)
    assert b.treated == (4, 6)
    assert b.dlts == (2, 3)
    wk = datasets.to_binary(full, "weekly")
    assert wk.doses == (20.0, 30.0)
    assert wk.treated == (5, 13)
    assert wk.dlts == (0, 4)


def test_to_binary_with_panel():
    full = load_dataset(datasets.everolimus_path())
    b = datasets.to_binary(full, "daily", doses=(2.5, 5.0, 7.5, 10.0))
    assert b.doses == (2.5, 5.0, 7.5, 10.0)
    assert b.treated == (4, 6, 0, 0)


def test_missing_header(tmp_path):
    p = _write(tmp_path, "a,b\n1,2\n")
    with pytest.raises(DatasetError, match="header"):
        load_dataset(p)


def test_error_reports_line_numbers(tmp_path):
    p = _write(tmp_path, HEADER
               + "P1,daily,5,24,100,1\n"
               + "P2,daily,-5,24,100,0\n"     # bad dose  (line 3)
               + "P3,daily,5,24,600,0\n"      # time past cycle (line 4)
               + "P4,daily,5,24,100,2\n")     # bad flag (line 5)
    with pytest.raises(DatasetError) as err:
        load_dataset(p)
    msg = str(err.value)
    assert "line 3" in msg and "line 4" in msg and "line 5" in msg
    assert "line 2" not in msg


def test_non_numeric_field(tmp_path):
    p = _write(tmp_path, HEADER + "P1,daily,abc,24,100,0\n")
    with pytest.raises(DatasetError, match="line 2"):
        load_dataset(p)


def test_empty_file_is_prior_analysis(tmp_path):
    p = _write(tmp_path, HEADER)
    assert load_dataset(p) == []


def test_record_outcome_round_trip():
    full = load_dataset(datasets.everolimus_path())
    r = full[0]
    o = r.outcome()
    assert o.regimen.dose == r.dose
    assert o.regimen.interval == r.interval
    assert o.time == r.time
    assert o.dlt == bool(r.dlt)
