"""Patient-level dataset loading and the bundled everolimus trial data.

CSV layout (UTF-8, comma-separated, header required):
``patient_id,schedule,dose,interval,time,dlt`` with dose in mg/m^2, interval
and time in hours, dlt in {0,1}.  Times are measured from first dose; a
non-event row carries the end-of-cycle observation time.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass
from importlib import resources

from .comparators import BinaryDoseData
from .model import PatientOutcome
from .pk import DosingRegimen

_COLUMNS = ("patient_id", "schedule", "dose", "interval", "time", "dlt")


class DatasetError(ValueError):
    """Malformed dataset file; message carries 1-based line numbers."""


@dataclass(frozen=True)
class DatasetRecord:
    patient_id: str
    schedule: str
    dose: float
    interval: float
    time: float
    dlt: int

    def outcome(self, cycle_length: float = 504.0) -> PatientOutcome:
        reg = DosingRegimen(self.dose, self.interval, cycle_length,
                            label=self.schedule)
        return PatientOutcome(regimen=reg, time=self.time, dlt=bool(self.dlt))


def load_dataset(path, cycle_length: float = 504.0) -> list:
    """Parse and validate a dataset CSV into DatasetRecord rows."""
    records = []
    problems = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DatasetError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if header != list(_COLUMNS):
            raise DatasetError(
                f"{path}: line 1: header must be {','.join(_COLUMNS)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(_COLUMNS):
                problems.append(f"line {lineno}: expected {len(_COLUMNS)} fields, "
                                f"got {len(row)}")
                continue
            pid, sched, dose_s, iv_s, time_s, dlt_s = (c.strip() for c in row)
            try:
                dose = float(dose_s)
                interval = float(iv_s)
                time = float(time_s)
                dlt = int(dlt_s)
            except ValueError:
                problems.append(f"line {lineno}: non-numeric dose/interval/time/dlt")
                continue
            if dose <= 0:
                problems.append(f"line {lineno}: dose must be positive")
            elif not 0 < interval <= cycle_length:
                problems.append(f"line {lineno}: interval must lie in (0, {cycle_length}]")
            elif not 0 < time <= cycle_length:
                problems.append(f"line {lineno}: time must lie in (0, {cycle_length}]")
            elif dlt not in (0, 1):
                problems.append(f"line {lineno}: dlt must be 0 or 1")
            else:
                records.append(DatasetRecord(pid, sched, dose, interval, time, dlt))
    if problems:
        raise DatasetError(f"{path}: " + "; ".join(problems))
    if not records:
        return []
    return records


def outcomes(records, schedule: str | None = None,
             cycle_length: float = 504.0) -> list:
    """PatientOutcome list, optionally filtered to one schedule label."""
    return [r.outcome(cycle_length) for r in records
            if schedule is None or r.schedule == schedule]


def schedules(records) -> list:
    """Schedule labels in order of first appearance."""
    seen = []
    for r in records:
        if r.schedule not in seen:
            seen.append(r.schedule)
    return seen


def to_binary(records, schedule: str | None = None, doses=None,
              label: str = "") -> BinaryDoseData:
    """Aggregate per-dose counts for the binary-outcome models."""
    rows = [r for r in records if schedule is None or r.schedule == schedule]
    panel = sorted({r.dose for r in rows}) if doses is None else list(doses)
    treated = [sum(1 for r in rows if r.dose == d) for d in panel]
    dlts = [sum(r.dlt for r in rows if r.dose == d) for d in panel]
    return BinaryDoseData(tuple(panel), tuple(treated), tuple(dlts),
                          label=label or (schedule or ""))


def everolimus_path(daily_only: bool = False):
    """Filesystem path of the bundled everolimus dataset."""
    name = "everolimus_daily.csv" if daily_only else "everolimus.csv"
    return resources.files("titepk.data") / name
