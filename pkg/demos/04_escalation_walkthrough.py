"""
Escalation engine walkthrough
=============================

A synthetic trial driven round by round through the cohort engine:
treat a cohort, refit the posterior, apply overdose control, and either
escalate, declare the MTD, or stop.  A second phase then switches the
schedule, carrying all data along.
"""
import numpy as np

from titepk import (DosingRegimen, EscalationRules, PKParams, PatientOutcome,
                    TitePkPrior, TrialState, advance_sequential, declare_mtd,
                    quadrature_posterior, recommend, reference_scale,
                    summarize)
from titepk.trial import apply_decision

rng = np.random.default_rng(7)
pk = PKParams()
ref = reference_scale(DosingRegimen(5.0, 24.0), pk)
prior = TitePkPrior(ref=ref)

rules = EscalationRules(doses=(5.0, 10.0, 15.0, 20.0), mtd_min_phase=12,
                        mtd_min_at_dose=6, max_patients=30)
state = TrialState(rules=rules, phase="q48h")
outcomes: list = []
regimens = [DosingRegimen(d, 48.0, label="q48h") for d in rules.doses]


def fit():
    return summarize(quadrature_posterior(outcomes, prior, pk),
                     regimens, pk, ref)


def treat(dose_index, true_p):
    """Simulate one cohort at the assigned dose and record it."""
    cohort = []
    for _ in range(rules.cohort_size):
        dlt = bool(rng.random() < true_p[dose_index])
        t = float(rng.uniform(24.0, 480.0)) if dlt else 504.0
        cohort.append((t, dlt))
    state.record_cohort(dose_index, cohort)
    outcomes.extend(PatientOutcome(regimen=regimens[dose_index], time=t, dlt=d)
                    for t, d in cohort)
    return sum(d for _, d in cohort)


def run_phase(true_p):
    while state.status == "active":
        summary = fit()
        decision = recommend(summary, state)
        pods = " ".join(f"{r.p_od:.2f}" for r in summary.rows)
        tag = (f" dose {rules.doses[decision.dose_index]:g}"
               if decision.dose_index is not None else "")
        print(f"  P(OD)=[{pods}] -> {decision.action}{tag}")
        if decision.action != "treat":
            apply_decision(state, decision)
            return
        n_dlt = treat(decision.dose_index, true_p)
        print(f"     cohort of {rules.cohort_size}: {n_dlt} DLT(s)")


# Phase 1: every-48h dosing; true DLT probabilities the virtual patients
# follow at each panel dose.
print("phase 1: every-48h dosing")
run_phase((0.04, 0.10, 0.22, 0.45))
print(f"phase-1 MTD: {declare_mtd(state)} (status {state.status}, "
      f"{state.enrolled_total} patients)")

# Hand over to daily dosing: the declared dose seeds the new phase, but the
# entry dose is re-checked under the new schedule's (higher) exposure.
regimens = [DosingRegimen(d, 24.0, label="daily") for d in rules.doses]
entry = advance_sequential(state, fit(), new_phase="daily")
print(f"\nphase 2: daily dosing enters at {rules.doses[entry.dose_index]:g} "
      f"({entry.reason})")
TRUE_DAILY = (0.12, 0.30, 0.52, 0.70)
n_dlt = treat(entry.dose_index, TRUE_DAILY)
print(f"     entry cohort of {rules.cohort_size}: {n_dlt} DLT(s)")
run_phase(TRUE_DAILY)
print(f"phase-2 MTD: {declare_mtd(state)} (status {state.status}, "
      f"{state.enrolled_total} patients total)")
