"""Escalation-with-overdose-control trial engine.

Pure decision layer: it consumes per-dose posterior summaries (from any of
the model modules) plus an explicit trial state, and returns decisions.  All
state is JSON-serializable so a trial can be persisted, replayed, and
audited event by event.
"""
from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np


@dataclass(frozen=True)
class EscalationRules:
    """Design constants for one escalation trial."""

    doses: tuple                     # ascending dose panel
    cohort_size: int = 3
    max_patients: int = 60           # per schedule phase
    ewoc: float = 0.25               # overdose-probability bound
    max_step: float = 2.0            # escalation capped at max_step * current dose
    mtd_min_at_dose: int = 6
    mtd_min_phase: int = 21
    target: tuple = (0.20, 0.40)
    stop_at_cap_without_mtd: bool = True

    def __post_init__(self):
        d = np.asarray(self.doses, dtype=float)
        if d.size == 0 or np.any(d <= 0) or np.any(np.diff(d) <= 0):
            raise ValueError("doses must be a strictly increasing positive panel")
        if not 0 < self.ewoc < 1:
            raise ValueError("ewoc bound must be in (0,1)")
        if self.max_step <= 1:
            raise ValueError("max_step must exceed 1")
        if self.cohort_size < 1 or self.max_patients < self.cohort_size:
            raise ValueError("inconsistent cohort/cap sizes")
        lo, hi = self.target
        if not 0 < lo < hi < 1:
            raise ValueError("target interval must satisfy 0 < lo < hi < 1")


@dataclass(frozen=True)
class Decision:
    """One engine decision: treat / declare / stop."""

    action: str                      # "treat" | "declare" | "stop"
    dose_index: int | None
    reason: str

    def to_dict(self):
        return asdict(self)


@dataclass
class TrialState:
    """Patient-level trial record, phase-scoped.

    `patients` holds one dict per patient: id, phase, dose_index, time, dlt.
    Counts and enrollment figures always refer to the active phase; earlier
    phases stay in `patients` (for pooled likelihoods) and `phase_history`.
    """

    rules: EscalationRules
    phase: str = "single"
    current: int | None = None       # dose index of the last treated cohort
    patients: list = field(default_factory=list)
    status: str = "active"           # "active" | "mtd" | "stopped"
    mtd_index: int | None = None
    phase_history: list = field(default_factory=list)
    decisions: list = field(default_factory=list)

    # -- phase-scoped views -------------------------------------------------
    def _phase_patients(self):
        return [p for p in self.patients if p["phase"] == self.phase]

    @property
    def n_at(self) -> np.ndarray:
        out = np.zeros(len(self.rules.doses), dtype=int)
        for p in self._phase_patients():
            out[p["dose_index"]] += 1
        return out

    @property
    def y_at(self) -> np.ndarray:
        out = np.zeros(len(self.rules.doses), dtype=int)
        for p in self._phase_patients():
            out[p["dose_index"]] += bool(p["dlt"])
        return out

    @property
    def enrolled_phase(self) -> int:
        return len(self._phase_patients())

    @property
    def enrolled_total(self) -> int:
        return len(self.patients)

    # -- mutation -----------------------------------------------------------
    def record_cohort(self, dose_index: int, outcomes) -> None:
        """Append one treated cohort; outcomes = iterable of (time, dlt)."""
        if self.status != "active":
            raise ValueError(f"trial is {self.status}; no further enrollment")
        if not 0 <= dose_index < len(self.rules.doses):
            raise ValueError("dose index outside the panel")
        for time, dlt in outcomes:
            self.patients.append({
                "id": f"P{len(self.patients) + 1:03d}",
                "phase": self.phase,
                "dose_index": int(dose_index),
                "time": float(time),
                "dlt": bool(dlt),
            })
        self.current = int(dose_index)

    def log_decision(self, decision: Decision) -> None:
        self.decisions.append({"phase": self.phase,
                               "enrolled": self.enrolled_phase,
                               **decision.to_dict()})

    # -- persistence --------------------------------------------------------
    def to_dict(self) -> dict:
        return {
            "rules": {**asdict(self.rules), "doses": list(self.rules.doses),
                      "target": list(self.rules.target)},
            "phase": self.phase,
            "current": self.current,
            "patients": [dict(p) for p in self.patients],
            "status": self.status,
            "mtd_index": self.mtd_index,
            "phase_history": [dict(h) for h in self.phase_history],
            "decisions": [dict(d) for d in self.decisions],
        }

    @classmethod
    def from_dict(cls, payload: dict) -> "TrialState":
        r = dict(payload["rules"])
        r["doses"] = tuple(r["doses"])
        r["target"] = tuple(r["target"])
        return cls(rules=EscalationRules(**r), phase=payload["phase"],
                   current=payload["current"],
                   patients=[dict(p) for p in payload["patients"]],
                   status=payload["status"], mtd_index=payload["mtd_index"],
                   phase_history=[dict(h) for h in payload.get("phase_history", [])],
                   decisions=[dict(d) for d in payload.get("decisions", [])])


def _pod_vector(summary) -> np.ndarray:
    if hasattr(summary, "p_od"):
        pod = summary.p_od()
    else:
        pod = np.asarray(summary, dtype=float)
    return np.asarray(pod, dtype=float)


def recommend(summary, state: TrialState) -> Decision:
    """One escalation-with-overdose-control step.

    Eligible doses have overdose mass strictly below the bound and lie at or
    below max_step times the current dose; the highest eligible dose is
    recommended.  De-escalation is never restricted.  Declares the MTD once
    the recommended dose has the required patient counts; stops when nothing
    is eligible or the phase cap would be breached.
    """
    rules = state.rules
    doses = np.asarray(rules.doses, dtype=float)
    if state.current is None:
        return Decision("treat", 0, "first cohort at the lowest dose")
    pod = _pod_vector(summary)
    if pod.shape != doses.shape:
        raise ValueError("summary length does not match the dose panel")
    elig = np.where((pod < rules.ewoc) & (doses <= rules.max_step * doses[state.current]))[0]
    if elig.size == 0:
        return Decision("stop", None, "no dose satisfies the overdose bound")
    rec = int(elig[-1])
    if (state.n_at[rec] >= rules.mtd_min_at_dose
            and state.enrolled_phase >= rules.mtd_min_phase):
        return Decision("declare", rec, "recommended dose meets MTD sample-size rules")
    if state.enrolled_phase + rules.cohort_size > rules.max_patients:
        if rules.stop_at_cap_without_mtd:
            return Decision("stop", None, "phase cap reached without an MTD")
        return Decision("declare", rec, "phase cap reached; declaring best current dose")
    return Decision("treat", rec, "highest dose within the overdose bound")


def apply_decision(state: TrialState, decision: Decision) -> None:
    """Fold a terminal decision into the state (treat decisions are recorded
    when the cohort's outcomes arrive, via record_cohort)."""
    state.log_decision(decision)
    if decision.action == "declare":
        state.status = "mtd"
        state.mtd_index = decision.dose_index
    elif decision.action == "stop":
        state.status = "stopped"


def declare_mtd(state: TrialState):
    """Final MTD dose, or None if the trial stopped without one."""
    if state.status == "mtd" and state.mtd_index is not None:
        return float(state.rules.doses[state.mtd_index])
    return None


def advance_sequential(state: TrialState, summary, new_phase: str) -> Decision:
    """Move a trial that declared a phase-1 MTD into the next schedule phase.

    The entering dose is the lower of the declared MTD and the highest dose
    whose overdose mass (under the new schedule, pooled data) is below the
    bound; the escalation-step cap does not apply to this first cohort.
    Mutates `state` in place and returns the entry decision.
    """
    if state.status != "mtd" or state.mtd_index is None:
        raise ValueError("sequential advance requires a declared MTD")
    pod = _pod_vector(summary)
    doses = np.asarray(state.rules.doses, dtype=float)
    if pod.shape != doses.shape:
        raise ValueError("summary length does not match the dose panel")
    state.phase_history.append({
        "phase": state.phase,
        "mtd_index": state.mtd_index,
        "enrolled": state.enrolled_phase,
    })
    prev_mtd = state.mtd_index
    state.phase = new_phase
    state.status = "active"
    state.mtd_index = None
    state.current = None
    elig = np.where(pod < state.rules.ewoc)[0]
    if elig.size == 0:
        decision = Decision("stop", None,
                            "no dose admissible under the new schedule")
        apply_decision(state, decision)
        return decision
    entry = int(min(prev_mtd, elig[-1]))
    decision = Decision("treat", entry,
                        "entering new schedule at min(declared MTD, highest admissible)")
    state.log_decision(decision)
    state.current = entry
    return decision
