"""Escalation engine: overdose-control invariant, MTD declaration, caps,
phase advancement, and state serialization."""
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from titepk.trial import (Decision, EscalationRules, TrialState,
                          advance_sequential, apply_decision, declare_mtd,
                          recommend)

PANEL = (2.5, 5.0, 7.5, 10.0, 12.5, 15.0)


def _state(current=None, patients=(), phase="single", rules=None):
    st_ = TrialState(rules=rules or EscalationRules(doses=PANEL), phase=phase)
    for dose_index, time, dlt in patients:
        st_.patients.append({"id": f"P{len(st_.patients)+1:03d}", "phase": phase,
                             "dose_index": dose_index, "time": time, "dlt": dlt})
    st_.current = current
    return st_


@settings(max_examples=300, deadline=None)
@given(pod=st.lists(st.floats(0.0, 1.0), min_size=6, max_size=6),
       current=st.integers(0, 5))
def test_overdose_control_invariant(pod, current):
    # any treated dose must carry overdose mass strictly below the bound,
    # and escalation can never exceed the step factor
    state = _state(current=current,
                   patients=[(current, 504.0, False)] * 3)
    decision = recommend(np.array(pod), state)
    if decision.action == "treat":
        assert pod[decision.dose_index] < 0.25
        assert PANEL[decision.dose_index] <= 2.0 * PANEL[current]
    elif decision.action == "stop":
        eligible = [i for i, p in enumerate(pod)
                    if p < 0.25 and PANEL[i] <= 2.0 * PANEL[current]]
        assert eligible == []


def test_first_cohort_at_lowest_dose():
    d = recommend(np.zeros(6), _state(current=None))
    assert d.action == "treat" and d.dose_index == 0


def test_highest_eligible_is_recommended():
    pod = np.array([0.01, 0.05, 0.10, 0.24, 0.3, 0.9])
    d = recommend(pod, _state(current=2, patients=[(2, 504.0, False)] * 3))
    # dose index 3 has pod < 0.25 but 10.0 <= 2*7.5, so it is chosen
    assert d.action == "treat" and d.dose_index == 3


def test_step_cap_blocks_skipping():
    pod = np.zeros(6)
    d = recommend(pod, _state(current=0, patients=[(0, 504.0, False)] * 3))
    assert PANEL[d.dose_index] <= 2.0 * PANEL[0]


def test_deescalation_unrestricted():
    pod = np.array([0.01, 0.9, 0.9, 0.9, 0.9, 0.9])
    d = recommend(pod, _state(current=4, patients=[(4, 100.0, True)] * 3))
    assert d.action == "treat" and d.dose_index == 0


def test_mtd_declaration_requires_both_counts():
    pod = np.array([0.01, 0.02, 0.1, 0.9, 0.9, 0.9])
    # 6 at the recommended dose but fewer than 21 in phase: keep treating
    st_ = _state(current=2, patients=[(2, 504.0, False)] * 6)
    assert recommend(pod, st_).action == "treat"
    # 21 enrolled and 6 at the recommendation: declare
    patients = [(2, 504.0, False)] * 6 + [(1, 504.0, False)] * 15
    st_ = _state(current=2, patients=patients)
    d = recommend(pod, st_)
    assert d.action == "declare" and d.dose_index == 2


def test_cap_stops_without_mtd():
    pod = np.array([0.01, 0.02, 0.1, 0.9, 0.9, 0.9])
    patients = [(0, 504.0, False)] * 58
    st_ = _state(current=0, patients=patients)
    d = recommend(pod, st_)
    assert d.action == "stop"
    # the declare-at-cap variant instead returns the current best dose
    rules = EscalationRules(doses=PANEL, stop_at_cap_without_mtd=False)
    st2 = _state(current=0, patients=patients, rules=rules)
    assert recommend(pod, st2).action == "declare"


def test_declaration_precedes_cap_check():
    pod = np.array([0.01, 0.02, 0.1, 0.9, 0.9, 0.9])
    patients = [(2, 504.0, False)] * 6 + [(0, 504.0, False)] * 53
    st_ = _state(current=2, patients=patients)
    assert recommend(pod, st_).action == "declare"


def test_apply_decision_and_declare_mtd():
    st_ = _state(current=1, patients=[(1, 504.0, False)] * 3)
    apply_decision(st_, Decision("declare", 1, "test"))
    assert st_.status == "mtd" and declare_mtd(st_) == 5.0
    with pytest.raises(ValueError):
        st_.record_cohort(0, [(504.0, False)])
    st2 = _state(current=1)
    apply_decision(st2, Decision("stop", None, "test"))
    assert st2.status == "stopped" and declare_mtd(st2) is None


def test_advance_sequential_entry_dose():
    st_ = _state(current=3, patients=[(3, 504.0, False)] * 6, phase="s1")
    apply_decision(st_, Decision("declare", 3, "test"))
    # new-schedule overdose masses make only the two lowest doses admissible
    pod_new = np.array([0.01, 0.1, 0.5, 0.6, 0.9, 0.9])
    d = advance_sequential(st_, pod_new, "s2")
    assert d.dose_index == 1           # min(declared 10.0 -> idx 3, highest adm 1)
    assert st_.phase == "s2" and st_.status == "active"
    assert st_.enrolled_phase == 0     # counts are phase-scoped
    assert len(st_.patients) == 6      # earlier patients retained for pooling
    # entry is capped by the declared amount when the new schedule allows more
    st2 = _state(current=1, patients=[(1, 504.0, False)] * 6, phase="s1")
    apply_decision(st2, Decision("declare", 1, "test"))
    d2 = advance_sequential(st2, np.zeros(6), "s2")
    assert d2.dose_index == 1


def test_advance_requires_declared_mtd():
    st_ = _state(current=2)
    with pytest.raises(ValueError):
        advance_sequential(st_, np.zeros(6), "s2")


def test_advance_stops_when_nothing_admissible():
    st_ = _state(current=0, patients=[(0, 504.0, False)] * 6, phase="s1")
    apply_decision(st_, Decision("declare", 0, "test"))
    d = advance_sequential(st_, np.ones(6), "s2")
    assert d.action == "stop"


def test_state_round_trip():
    st_ = _state(current=2, patients=[(2, 504.0, False), (2, 100.0, True)])
    st_.log_decision(Decision("treat", 2, "x"))
    d = st_.to_dict()
    back = TrialState.from_dict(d)
    assert back.to_dict() == d
    assert back.rules.doses == PANEL
    assert back.enrolled_phase == 2


def test_rules_validation():
    with pytest.raises(ValueError):
        EscalationRules(doses=())
    with pytest.raises(ValueError):
        EscalationRules(doses=(5.0, 2.5))     # must ascend
    with pytest.raises(ValueError):
        EscalationRules(doses=PANEL, ewoc=0.0)
    with pytest.raises(ValueError):
        EscalationRules(doses=PANEL, target=(0.4, 0.2))
