"""End-to-end acceptance gate for the exposure-response escalation toolkit.

One test per headline criterion.  Each test evaluates every sub-clause of its
criterion at the stated tolerance, prints exactly one PASS/FAIL summary line
straight to the terminal (bypassing output capture), and then asserts.  A FAIL
line stays red on purpose: no bound in this file is ever loosened to make a
known miss green — the measured value and the band it missed are in the line.

The Monte Carlo campaign runs 1000 replications per scenario/design at a
fixed seed in both event-time modes; binary designs consume the same random
stream in both modes, which the campaign fixture re-verifies at small scale
before reusing the expensive hierarchical run across modes.
"""
from __future__ import annotations

import sys
import time

import numpy as np
import pytest

from test_pk import _ode_oracle

from titepk import datasets
from titepk.comparators import (BlrmPrior, MapHyper, blrm_fit, blrm_map_fit,
                                crm_fit, lee_cheung_skeleton)
from titepk.inference import MCMCConfig
from titepk.model import (PatientOutcome, TitePkPrior, fit_posterior,
                          log_likelihood, log_likelihood_grad,
                          quadrature_posterior, summarize)
from titepk.pk import DosingRegimen, PKParams, auc_effect, auc_exposure, \
    effect_concentration, reference_scale
from titepk.simulate import replicate, sensitivity_sweep
from titepk.trial import (EscalationRules, TrialState, apply_decision,
                          recommend)

CAMPAIGN_SEED = 20260101
CAMPAIGN_REPS = 1000
DAILY_PANEL = (2.5, 5.0, 7.5, 10.0)

# Frozen deterministic-quadrature value: spread of the posterior median of
# p(2.5 mg/m^2 daily) over the effect half-life grid below, recorded when the
# sweep was first implemented.  Guards silent drift of the sweep itself.
SWEEP_SPREAD_FROZEN = 0.002871187656985713
TE_GRID = (5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0)


def _emit(line: str) -> None:
    import conftest
    conftest.ACCEPTANCE_LINES.append(line)
    sys.stdout.write(line + "\n")
    sys.stdout.flush()


def _gate(name: str, clauses) -> None:
    """clauses: [(label, ok, detail)]; prints one line, then asserts."""
    misses = [(lab, txt) for lab, ok, txt in clauses if not ok]
    verdict = "PASS" if not misses else "FAIL"
    body = " | ".join(f"{lab}: {txt}" + ("" if ok else " MISS")
                      for lab, ok, txt in clauses)
    _emit(f"[acceptance] {verdict} {name} — {body}")
    assert not misses, (
        f"{name}: {len(misses)} clause(s) out of tolerance: "
        + "; ".join(f"{lab} ({txt})" for lab, txt in misses))


# ---------------------------------------------------------------------------
# C1: analyses of the bundled trial dataset
# ---------------------------------------------------------------------------

def test_bundled_trial_analyses():
    t0 = time.perf_counter()
    rec = datasets.load_dataset(datasets.everolimus_path())
    pk = PKParams()
    ref = reference_scale(DosingRegimen(5.0, 24.0), pk)
    prior = TitePkPrior(ref=ref)
    lowest = DosingRegimen(2.5, 24.0)

    post_daily = quadrature_posterior(datasets.outcomes(rec, "daily"), prior, pk)
    v_daily = summarize(post_daily, [lowest], pk, ref).rows[0].p_od
    post_seq = quadrature_posterior(datasets.outcomes(rec), prior, pk)
    v_seq = summarize(post_seq, [lowest], pk, ref).rows[0].p_od

    daily_bin = datasets.to_binary(rec, "daily", doses=DAILY_PANEL)
    weekly_bin = datasets.to_binary(rec, "weekly")
    v_blrm = blrm_fit(DAILY_PANEL, 5.0, daily_bin, BlrmPrior()).summary().rows[0].p_od
    # weekly reference normalised to the daily scale: 5.0 * 168 / 24
    fit_map = blrm_map_fit(weekly_bin, daily_bin, MapHyper(ref_doses=(35.0, 5.0)),
                           MCMCConfig(seed=5, chains=16, warmup=2500,
                                      samples=6000, target_accept=0.25),
                           doses=DAILY_PANEL)
    assert fit_map.converged and np.max(fit_map.rhat) < 1.05
    v_map = fit_map.p_od()[0]

    sk = lee_cheung_skeleton(4, nu=2).rounded().with_doses(DAILY_PANEL)
    v_crm = crm_fit(sk, daily_bin).p_above(0, 0.30)
    secs = time.perf_counter() - t0

    _gate("C1 bundled-trial analyses", [
        ("exposure-model daily p_od(2.5)", abs(v_daily - 0.14) <= 0.03,
         f"{v_daily:.4f} vs 0.14±0.03"),
        ("exposure-model sequential p_od(2.5)", v_seq <= 0.01,
         f"{v_seq:.4f} <= 0.01"),
        ("logistic daily p_od(2.5)", abs(v_blrm - 0.40) <= 0.05,
         f"{v_blrm:.4f} vs 0.40±0.05"),
        ("hierarchical sequential p_od(2.5)", abs(v_map - 0.18) <= 0.06,
         f"{v_map:.4f} vs 0.18±0.06"),
        ("crm daily P(p1>0.30)", abs(v_crm - 0.80) <= 0.05,
         f"{v_crm:.4f} vs 0.80±0.05"),
        ("runtime", secs < 60.0, f"{secs:.1f}s"),
    ])


# ---------------------------------------------------------------------------
# C2: skeleton display values
# ---------------------------------------------------------------------------

def test_skeleton_display_values():
    six = lee_cheung_skeleton(6, nu=3).rounded().probs
    four = lee_cheung_skeleton(4, nu=2).rounded().probs
    want6 = (0.02, 0.12, 0.30, 0.50, 0.68, 0.80)
    want4 = (0.12, 0.30, 0.50, 0.68)
    _gate("C2 skeleton display values", [
        ("6-level", six == want6, f"{six} == {want6}"),
        ("4-level", four == want4, f"{four} == {want4}"),
    ])


# ---------------------------------------------------------------------------
# C3: operating-characteristic campaign
# ---------------------------------------------------------------------------

_GRID = [
    ("1", "titepk"), ("1", "blrm"), ("1", "crm"),
    ("6", "titepk"), ("6", "blrm"), ("6", "crm"),
    ("9", "titepk"), ("9", "blrm-map"),
    ("12", "titepk"), ("13", "titepk"),
]


@pytest.fixture(scope="module")
def campaign():
    runs = {}
    t_all = time.perf_counter()
    for mode in ("exposure-inverse", "fixed-day"):
        for sid, method in _GRID:
            if (sid, method) == ("9", "blrm-map") and mode == "fixed-day":
                continue  # reused below after the invariance check
            t0 = time.perf_counter()
            m = replicate(sid, method, reps=CAMPAIGN_REPS, seed=CAMPAIGN_SEED,
                          mode=mode)
            runs[(sid, method, mode)] = m
            _emit(f"[acceptance] campaign {sid}:{method}:{mode} "
                  f"p_target={m.p_target:.3f} p_none={m.p_none:.3f} "
                  f"n={m.mean_patients:.2f} ({time.perf_counter() - t0:.1f}s)")
    # The hierarchical design ignores event times (binomial likelihood), so
    # both modes replay identical trials.  Verify at small scale, then reuse
    # the expensive run for the fixed-day slot.
    a = replicate("9", "blrm-map", reps=30, seed=CAMPAIGN_SEED,
                  mode="exposure-inverse")
    b = replicate("9", "blrm-map", reps=30, seed=CAMPAIGN_SEED, mode="fixed-day")
    invariant = a.to_dict() == b.to_dict() and a.p_select == b.p_select
    runs[("9", "blrm-map", "fixed-day")] = runs[("9", "blrm-map",
                                                 "exposure-inverse")]
    secs = time.perf_counter() - t_all
    _emit(f"[acceptance] campaign total {secs:.1f}s "
          f"(reps={CAMPAIGN_REPS}, seed={CAMPAIGN_SEED})")
    return {"runs": runs, "map_mode_invariant": invariant, "secs": secs}


def test_operating_characteristics(campaign):
    runs = campaign["runs"]

    def band(sid, method, metric, center, tol):
        ve = getattr(runs[(sid, method, "exposure-inverse")], metric)
        vf = getattr(runs[(sid, method, "fixed-day")], metric)
        ok_e, ok_f = abs(ve - center) <= tol, abs(vf - center) <= tol
        txt = f"{ve:.3f}"
        if not ok_e:
            txt += f" (fixed-day {vf:.3f})"
        return ok_e or ok_f, txt + f" vs {center}±{tol}"

    def ceiling(sid, method, metric, cap):
        ve = getattr(runs[(sid, method, "exposure-inverse")], metric)
        vf = getattr(runs[(sid, method, "fixed-day")], metric)
        ok_e = ve <= cap
        txt = f"{ve:.3f}" + ("" if ok_e else f" (fixed-day {vf:.3f})")
        return ok_e or vf <= cap, txt + f" <= {cap}"

    def ranking(sid, metric, order):
        parts, ok = [], True
        for mode in ("exposure-inverse", "fixed-day"):
            vals = [getattr(runs[(sid, m, mode)], metric) for m in order]
            good = all(x > y for x, y in zip(vals, vals[1:]))
            ok = ok and good
            parts.append(mode.split("-")[0] + " "
                         + "/".join(f"{v:.3f}" for v in vals))
        want = ">".join(order)
        return ok, f"want {want}; got " + ", ".join(parts)

    clauses = [
        ("sc1 exposure-model target-select",) + band("1", "titepk", "p_target", 0.78, 0.07),
        ("sc1 logistic target-select",) + band("1", "blrm", "p_target", 0.75, 0.07),
        ("sc1 crm target-select",) + band("1", "crm", "p_target", 0.73, 0.07),
        ("sc6 logistic stop-rate",) + band("6", "blrm", "p_none", 0.92, 0.05),
        ("sc9 exposure-model target-select",) + band("9", "titepk", "p_target", 0.94, 0.05),
        ("sc9 hierarchical target-select",) + band("9", "blrm-map", "p_target", 0.77, 0.07),
        ("sc12 exposure-model stop-rate",) + band("12", "titepk", "p_none", 0.98, 0.03),
        ("sc12 mean enrolled",) + band("12", "titepk", "mean_patients", 3.7, 1.5),
        ("sc13 exposure-model target-select",) + ceiling("13", "titepk", "p_target", 0.30),
        ("sc1 ranking",) + ranking("1", "p_target", ("titepk", "blrm", "crm")),
        ("sc6 ranking",) + ranking("6", "p_none", ("blrm", "titepk", "crm")),
        ("sc9 ranking",) + ranking("9", "p_target", ("titepk", "blrm-map")),
        ("hierarchical mode-invariance", campaign["map_mode_invariant"],
         "30-rep replay identical in both modes"),
        ("runtime", campaign["secs"] < 900.0, f"{campaign['secs']:.0f}s < 900s"),
    ]
    _gate(f"C3 operating characteristics ({CAMPAIGN_REPS} reps/scenario)", clauses)


# ---------------------------------------------------------------------------
# C4: effect half-life sensitivity
# ---------------------------------------------------------------------------

def test_half_life_sensitivity():
    rec = datasets.load_dataset(datasets.everolimus_path())
    data = datasets.outcomes(rec)
    ref = DosingRegimen(5.0, 24.0)

    rows = sensitivity_sweep(data, ref, TE_GRID)
    meds = [r.median for row in rows for r in row["summary"].rows
            if r.regimen.dose == 2.5 and r.regimen.interval == 24.0]
    assert len(meds) == len(TE_GRID)
    spread = max(meds) - min(meds)

    early = sensitivity_sweep(data, ref, TE_GRID, timing_shift="early")
    late = sensitivity_sweep(data, ref, TE_GRID, timing_shift="late")
    gaps = [a.p_od - b.p_od
            for re_, rl in zip(early, late)
            for a, b in zip(re_["summary"].rows, rl["summary"].rows)]
    n_regs = len(rows[0]["summary"].rows)
    assert len(gaps) == len(TE_GRID) * n_regs

    _gate("C4 effect half-life sensitivity", [
        ("median p(2.5 daily) spread over t_e 5..50", spread < 0.05,
         f"{spread:.4f} < 0.05"),
        ("sweep reproduction", abs(spread - SWEEP_SPREAD_FROZEN) < 1e-12,
         f"matches frozen {SWEEP_SPREAD_FROZEN:.6f}"),
        ("early-events dominate late at every dose and t_e", min(gaps) > 0.0,
         f"min p_od gap {min(gaps):.4f} > 0"),
    ])


# ---------------------------------------------------------------------------
# C5: model property battery
# ---------------------------------------------------------------------------

def test_model_property_battery():
    pk = PKParams()
    rec = datasets.load_dataset(datasets.everolimus_path())
    data = datasets.outcomes(rec, "daily")
    ref = reference_scale(DosingRegimen(5.0, 24.0), pk)
    prior = TitePkPrior(ref=ref)

    # (a) closed form vs ODE integration
    rng = np.random.default_rng(20260822)
    rel = 0.0
    for _ in range(3):
        pk_r = PKParams(t_e=float(rng.uniform(5, 80)),
                        k_eff=float(rng.uniform(0.05, 3.0)))
        reg = DosingRegimen(dose=float(rng.uniform(0.5, 30)),
                            interval=float(rng.choice([24.0, 48.0, 168.0])))
        grid = np.array([12.0, 100.0, 311.5, 504.0])
        c_ode, auc_ode = _ode_oracle(reg, pk_r, grid)
        c_cf = effect_concentration(reg, pk_r, grid)
        a_cf = auc_effect(reg, pk_r, grid)
        scale_c = np.maximum(np.abs(c_ode), 1e-3)
        scale_a = np.maximum(np.abs(auc_ode), 1e-3)
        rel = max(rel, float(np.max(np.abs(c_cf - c_ode) / scale_c)),
                  float(np.max(np.abs(a_cf - auc_ode) / scale_a)))
    ode_ok = rel < 1e-6

    # (b) unit cycle exposure at the reference regimen
    errs = []
    for d in (5.0, 7.5):
        r = reference_scale(DosingRegimen(d, 24.0), pk)
        errs.append(abs(auc_exposure(DosingRegimen(d, 24.0), pk, r, 504.0) - 1.0))
    auc_ok = max(errs) < 1e-10

    # (c) sampler vs deterministic grid interval masses
    quad = quadrature_posterior(data, prior, pk)
    mcmc = fit_posterior(data, prior, pk,
                         MCMCConfig(seed=11, chains=8, warmup=2000,
                                    samples=25000))
    panel = [DosingRegimen(d, 24.0) for d in DAILY_PANEL]
    sq = summarize(quad, panel, pk, ref)
    sm = summarize(mcmc, panel, pk, ref)
    mass_dev = max(abs(getattr(a, f) - getattr(b, f))
                   for a, b in zip(sq.rows, sm.rows)
                   for f in ("p_ud", "p_tt", "p_od"))
    mcmc_ok = mcmc.converged and mass_dev <= 0.01

    # (d) analytic likelihood gradient vs central differences
    h, grad_rel = 1e-5, 0.0
    for lb in (-3.0, -1.0, 0.5):
        g = log_likelihood_grad(lb, data, pk, ref)
        fd = (log_likelihood(lb + h, data, pk, ref)
              - log_likelihood(lb - h, data, pk, ref)) / (2 * h)
        grad_rel = max(grad_rel, abs(g - fd) / max(abs(fd), 1e-12))
    grad_ok = grad_rel < 1e-6

    # (e) overdose-control invariant of the escalation engine
    rules = EscalationRules(doses=(2.5, 5.0, 7.5, 10.0, 12.5, 15.0))
    regs = [DosingRegimen(d, 24.0) for d in rules.doses]
    erng = np.random.default_rng(33)
    checked, violations = 0, 0
    for _ in range(10):
        true_p = np.sort(erng.uniform(0.05, 0.65, size=len(rules.doses)))
        state = TrialState(rules=rules)
        outcomes = []
        while state.status == "active":
            summary = summarize(quadrature_posterior(outcomes, prior, pk),
                                regs, pk, ref)
            dec = recommend(summary, state)
            if dec.action != "treat":
                apply_decision(state, dec)
                break
            if state.current is not None:  # protocol fixes the first cohort
                checked += 1
                if summary.rows[dec.dose_index].p_od >= rules.ewoc:
                    violations += 1
            cohort = []
            for _ in range(rules.cohort_size):
                dlt = bool(erng.random() < true_p[dec.dose_index])
                t = float(erng.uniform(24.0, 480.0)) if dlt else 504.0
                cohort.append((t, dlt))
            state.record_cohort(dec.dose_index, cohort)
            outcomes += [PatientOutcome(regimen=regs[dec.dose_index],
                                        time=t, dlt=dlt) for t, dlt in cohort]
            if state.enrolled_phase >= rules.max_patients:
                break
    ewoc_ok = violations == 0 and checked >= 30

    # (f) determinism under fixed seeds, parallel == serial
    r1 = replicate("1", "crm", reps=40, seed=7, n_jobs=2)
    r2 = replicate("1", "crm", reps=40, seed=7, n_jobs=1)
    t1 = replicate("1", "titepk", reps=8, seed=9)
    t2 = replicate("1", "titepk", reps=8, seed=9)
    det_ok = (r1.to_dict() == r2.to_dict() and r1.p_select == r2.p_select
              and t1.to_dict() == t2.to_dict() and t1.p_select == t2.p_select)

    _gate("C5 model property battery", [
        ("closed form vs ODE", ode_ok, f"max rel err {rel:.2e} < 1e-6"),
        ("reference cycle exposure", auc_ok, f"|AUC-1| {max(errs):.1e} < 1e-10"),
        ("sampler vs grid masses", mcmc_ok, f"max dev {mass_dev:.4f} <= 0.01"),
        ("likelihood gradient", grad_ok, f"max rel err {grad_rel:.2e} < 1e-6"),
        ("overdose-control invariant", ewoc_ok,
         f"{violations} violations in {checked} engine decisions"),
        ("seeded determinism incl. parallel", det_ok, "replays identical"),
    ])
