"""Operating-characteristics simulator.

Replicates escalation trials under known true DLT probabilities for four
designs (exposure-response model, CRM, logistic model, hierarchical
two-stratum logistic model) and aggregates selection/enrollment metrics with
Monte Carlo standard errors.  Per-trial decision posteriors run on
deterministic grids so results are exactly reproducible and cacheable; the
hierarchical design runs its batched random-walk sampler in lockstep across
trials.
"""
from __future__ import annotations

import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, asdict

import numpy as np
from scipy.special import expit, logit

from . import pk as pkmod
from .comparators import lee_cheung_skeleton, map_batched_logpost, MapHyper
from .model import (PatientOutcome, TitePkPrior, cloglog, quadrature_posterior,
                    summarize)
from .pk import PKParams, DosingRegimen, reference_scale
from .trial import EscalationRules

PANEL = (2.5, 5.0, 7.5, 10.0, 12.5, 15.0)
SIM_REF_DOSE = 7.5          # simulation reference: 7.5 every 24 h


@dataclass(frozen=True)
class SchedulePhase:
    """One schedule phase of a scenario: regimen shape + true probabilities."""

    label: str
    interval: float
    probs: tuple
    cycle_length: float = 504.0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if p.size == 0:
            raise ValueError("empty probability panel")
        if np.any(p < 0) or np.any(p >= 1):
            raise ValueError("true probabilities must lie in [0, 1)")
        if not 0 < self.interval <= self.cycle_length:
            raise ValueError("interval must lie in (0, cycle_length]")


@dataclass(frozen=True)
class Scenario:
    """True state of nature: dose panel plus one or two schedule phases."""

    id: str
    doses: tuple
    phases: tuple

    def __post_init__(self):
        d = np.asarray(self.doses, dtype=float)
        if d.size == 0 or np.any(d <= 0) or np.any(np.diff(d) <= 0):
            raise ValueError("doses must be strictly increasing and positive")
        if not self.phases:
            raise ValueError("at least one schedule phase required")
        for ph in self.phases:
            if len(ph.probs) != d.size:
                raise ValueError(f"phase {ph.label}: probs/doses length mismatch")

    @property
    def sequential(self) -> bool:
        return len(self.phases) > 1

    def to_dict(self) -> dict:
        return {"id": self.id, "doses": list(self.doses),
                "phases": [asdict(p) | {"probs": list(p.probs)} for p in self.phases]}

    @classmethod
    def from_dict(cls, payload: dict) -> "Scenario":
        return cls(id=str(payload["id"]), doses=tuple(payload["doses"]),
                   phases=tuple(SchedulePhase(label=p["label"], interval=p["interval"],
                                              probs=tuple(p["probs"]),
                                              cycle_length=p.get("cycle_length", 504.0))
                                for p in payload["phases"]))


def _single(i, probs):
    return Scenario(id=str(i), doses=PANEL,
                    phases=(SchedulePhase("daily", 24.0, probs),))


def _seq(i, p1, p2):
    return Scenario(id=str(i), doses=PANEL,
                    phases=(SchedulePhase("q48h", 48.0, p1),
                            SchedulePhase("daily", 24.0, p2)))


#: The thirteen published scenarios: 1-6 single daily schedule, 7-13 a 48-hour
#: schedule followed by a daily schedule on the same panel.
SCENARIOS = {
    "1": _single(1, (0.05, 0.10, 0.20, 0.30, 0.50, 0.70)),
    "2": _single(2, (0.30, 0.40, 0.52, 0.61, 0.76, 0.87)),
    "3": _single(3, (0.05, 0.06, 0.08, 0.11, 0.19, 0.34)),
    "4": _single(4, (0.06, 0.08, 0.12, 0.18, 0.40, 0.71)),
    "5": _single(5, (0.10, 0.22, 0.31, 0.45, 0.60, 0.72)),
    "6": _single(6, (0.50, 0.55, 0.61, 0.69, 0.76, 0.87)),
    "7": _seq(7, (0.05, 0.07, 0.09, 0.10, 0.13, 0.18), (0.08, 0.12, 0.16, 0.18, 0.23, 0.27)),
    "8": _seq(8, (0.08, 0.12, 0.16, 0.20, 0.23, 0.27), (0.18, 0.26, 0.34, 0.45, 0.49, 0.55)),
    "9": _seq(9, (0.03, 0.12, 0.28, 0.40, 0.54, 0.62), (0.20, 0.30, 0.45, 0.50, 0.60, 0.75)),
    "10": _seq(10, (0.10, 0.20, 0.34, 0.40, 0.49, 0.55), (0.35, 0.40, 0.45, 0.57, 0.67, 0.80)),
    "11": _seq(11, (0.05, 0.07, 0.09, 0.15, 0.22, 0.28), (0.30, 0.35, 0.48, 0.52, 0.61, 0.70)),
    "12": _seq(12, (0.45, 0.50, 0.55, 0.65, 0.75, 0.85), (0.48, 0.56, 0.62, 0.70, 0.80, 0.88)),
    "13": _seq(13, (0.18, 0.26, 0.34, 0.45, 0.49, 0.55), (0.08, 0.12, 0.16, 0.18, 0.23, 0.27)),
}

METHODS = ("titepk", "crm", "blrm", "blrm-map")


# ---------------------------------------------------------------------------
# Outcome generation
# ---------------------------------------------------------------------------

def simulate_outcome(true_p: float, regimen: DosingRegimen, pk: PKParams,
                     mode: str = "exposure-inverse",
                     rng: np.random.Generator | None = None) -> PatientOutcome:
    """Draw one patient outcome with cycle-end DLT probability `true_p`.

    `exposure-inverse` places the event time by inverting the cumulative
    exposure curve (the event hazard is proportional to effect-site
    concentration); `fixed-day` puts every event at 360 h.
    """
    if rng is None:
        raise ValueError("an explicit rng is required for reproducibility")
    if not 0 <= true_p < 1:
        raise ValueError("true_p must lie in [0, 1)")
    if mode not in ("exposure-inverse", "fixed-day"):
        raise ValueError(f"unknown mode {mode!r}")
    tstar = regimen.cycle_length
    if rng.random() >= true_p:
        return PatientOutcome(regimen=regimen, time=tstar, dlt=False)
    if mode == "fixed-day":
        return PatientOutcome(regimen=regimen, time=min(360.0, tstar), dlt=True)
    tg = np.linspace(0.0, tstar, 2017)
    auc = pkmod.auc_effect(regimen, pk, tg)
    lam = -np.log1p(-true_p) / auc[-1]
    v = rng.random()
    c = -np.log1p(-v * true_p) / lam
    t = float(np.interp(c, auc, tg))
    return PatientOutcome(regimen=regimen, time=max(t, 1e-9), dlt=True)


# ---------------------------------------------------------------------------
# Per-trial decision engines (deterministic grids, cached per process)
# ---------------------------------------------------------------------------

_PK = PKParams()
_PRI_MU = float(cloglog(0.30))
_PRI_SD = 1.25
_LB_GRID = np.linspace(_PRI_MU - 8 * _PRI_SD, _PRI_MU + 8 * _PRI_SD, 4001)
_BETA_GRID = np.exp(_LB_GRID)
_LOG_PRIOR_T = -0.5 * ((_LB_GRID - _PRI_MU) / _PRI_SD) ** 2

_sched_cache: dict = {}


class _SimSchedule:
    """Per-(panel, interval) exposure tables in reference units."""

    def __init__(self, doses, interval, cycle=504.0):
        ref = reference_scale(DosingRegimen(SIM_REF_DOSE, 24.0, cycle), _PK)
        unit = DosingRegimen(1.0, interval, cycle)
        self.doses = np.asarray(doses, dtype=float)
        self.tg = np.linspace(0.0, cycle, 2017)
        self.auc_unit_t = pkmod.auc_effect(unit, _PK, self.tg) / ref.scale
        self.A = self.doses * self.auc_unit_t[-1]
        self.interval = interval
        self.cycle = cycle


def _sim_schedule(doses, interval, cycle=504.0) -> _SimSchedule:
    key = (tuple(doses), float(interval), float(cycle))
    if key not in _sched_cache:
        _sched_cache[key] = _SimSchedule(doses, interval, cycle)
    return _sched_cache[key]


def _gen_cohort(sched: _SimSchedule, dose_idx: int, p: float,
                rng: np.random.Generator, mode: str, size: int, log=None):
    """Cohort outcomes -> (summed AUC at observation, DLT count)."""
    d = sched.doses[dose_idx]
    u = rng.random(size)
    dlt = u < p
    S = 0.0
    times = []
    for i in range(size):
        if dlt[i]:
            if mode == "exposure-inverse":
                lam = -np.log1p(-p) / sched.A[dose_idx]
                v = rng.random()
                c = -np.log1p(-v * p) / lam
                t = float(np.interp(c, d * sched.auc_unit_t, sched.tg))
                t = max(t, 1e-9)
            else:
                t = 360.0
            S += float(np.interp(t, sched.tg, d * sched.auc_unit_t))
        else:
            t = sched.cycle
            S += float(sched.A[dose_idx])
        times.append(t)
    if log is not None:
        log.append({"dose_index": int(dose_idx), "times": times,
                    "dlts": [bool(x) for x in dlt]})
    return S, int(dlt.sum())


def _titepk_pod(S: float, D: int, A: np.ndarray, cut: float = 0.40) -> np.ndarray:
    lp = D * _LB_GRID - _BETA_GRID * S + _LOG_PRIOR_T
    lp -= lp.max()
    w = np.exp(lp)
    w /= w.sum()
    cdf = np.cumsum(w)
    cuts = np.log(-np.log1p(-cut) / A)
    idx = np.clip(np.searchsorted(_LB_GRID, cuts), 0, _LB_GRID.size - 1)
    return 1.0 - cdf[idx]


class _BlrmGrid:
    """401x401 posterior grid for the two-parameter logistic model."""

    def __init__(self, doses, d_ref, m1, m2, s1, s2, cut=0.40):
        ng = 401
        g1 = np.linspace(m1 - 8 * s1, m1 + 8 * s1, ng)
        g2 = np.linspace(m2 - 8 * s2, m2 + 8 * s2, ng)
        G1, G2 = np.meshgrid(g1, g2, indexing="ij")
        self.logpri = -0.5 * ((G1 - m1) / s1) ** 2 - 0.5 * ((G2 - m2) / s2) ** 2
        lr = np.log(np.asarray(doses, dtype=float) / d_ref)
        eta = G1[None] + np.exp(G2)[None] * lr[:, None, None]
        self.logpi = -np.logaddexp(0, -eta)
        self.log1m = -np.logaddexp(0, eta)
        self.od_mask = expit(eta) > cut
        self.k = len(doses)
        self._cache: dict = {}

    def pod(self, n_at, y_at) -> np.ndarray:
        key = (tuple(int(x) for x in n_at), tuple(int(x) for x in y_at))
        if key not in self._cache:
            lp = (self.logpri + np.tensordot(y_at, self.logpi, axes=1)
                  + np.tensordot(np.asarray(n_at) - np.asarray(y_at), self.log1m, axes=1))
            lp -= lp.max()
            w = np.exp(lp)
            w /= w.sum()
            self._cache[key] = np.array([w[self.od_mask[k]].sum() for k in range(self.k)])
        return self._cache[key]


_blrm_cache: dict = {}


def _blrm_grid(doses, d_ref, s1=2.0) -> _BlrmGrid:
    key = (tuple(doses), float(d_ref), float(s1))
    if key not in _blrm_cache:
        _blrm_cache[key] = _BlrmGrid(doses, d_ref, float(logit(0.30)), 0.0, s1, 1.0)
    return _blrm_cache[key]


class _CrmTables:
    """Power-model posterior tables on an alpha grid."""

    def __init__(self, k, theta=0.30, delta=0.10, prior_sd=2.0):
        skel = lee_cheung_skeleton(k, theta, delta, nu=(k + 1) // 2).rounded()
        self.skeleton = np.asarray(skel.probs)
        self.theta = theta
        self.a_grid = np.linspace(-6 * prior_sd, 6 * prior_sd, 4001)
        ea = np.exp(self.a_grid)
        self.logpri = -0.5 * (self.a_grid / prior_sd) ** 2
        self.logpi = ea[None, :] * np.log(self.skeleton)[:, None]
        with np.errstate(divide="ignore"):
            self.log1mpi = np.log1p(-np.exp(np.clip(self.logpi, None, -1e-300)))
        self.safe_cut = np.log(np.log(theta) / np.log(self.skeleton[0]))


_crm_cache: dict = {}


def _crm_tables(k) -> _CrmTables:
    if k not in _crm_cache:
        _crm_cache[k] = _CrmTables(k)
    return _crm_cache[k]


# ---------------------------------------------------------------------------
# Per-trial runners
# ---------------------------------------------------------------------------

def _phase_stats(n_at, y_at, probs):
    od = np.asarray(probs) > 0.40
    return int(n_at.sum()), int(y_at.sum()), int(n_at[od].sum())


def _run_titepk_single(scn: Scenario, rules: EscalationRules, rng, mode, log=None):
    ph = scn.phases[0]
    sched = _sim_schedule(scn.doses, ph.interval, ph.cycle_length)
    doses = sched.doses
    k = doses.size
    n_at = np.zeros(k, dtype=int)
    y_at = np.zeros(k, dtype=int)
    S, D = 0.0, 0
    cur, enrolled = 0, 0
    sel = -1
    while True:
        s, dd = _gen_cohort(sched, cur, ph.probs[cur], rng, mode, rules.cohort_size, log)
        S += s
        D += dd
        n_at[cur] += rules.cohort_size
        y_at[cur] += dd
        enrolled += rules.cohort_size
        pod = _titepk_pod(S, D, sched.A)
        elig = np.where((pod < rules.ewoc) & (doses <= rules.max_step * doses[cur]))[0]
        if elig.size == 0:
            break
        rec = int(elig[-1])
        if n_at[rec] >= rules.mtd_min_at_dose and enrolled >= rules.mtd_min_phase:
            sel = rec
            break
        if enrolled + rules.cohort_size > rules.max_patients:
            break
        cur = rec
    n, d, od = _phase_stats(n_at, y_at, ph.probs)
    return sel, n, n, d, od


def _run_titepk_seq(scn: Scenario, rules: EscalationRules, rng, mode, log=None):
    ph1, ph2 = scn.phases
    s1 = _sim_schedule(scn.doses, ph1.interval, ph1.cycle_length)
    s2 = _sim_schedule(scn.doses, ph2.interval, ph2.cycle_length)
    doses = s1.doses
    k = doses.size
    S, D = 0.0, 0
    n1 = np.zeros(k, dtype=int)
    y1 = np.zeros(k, dtype=int)
    cur, enr1 = 0, 0
    s1_mtd = -1
    while True:
        s, dd = _gen_cohort(s1, cur, ph1.probs[cur], rng, mode, rules.cohort_size, log)
        S += s
        D += dd
        n1[cur] += rules.cohort_size
        y1[cur] += dd
        enr1 += rules.cohort_size
        pod = _titepk_pod(S, D, s1.A)
        elig = np.where((pod < rules.ewoc) & (doses <= rules.max_step * doses[cur]))[0]
        if elig.size == 0:
            break
        rec = int(elig[-1])
        if n1[rec] >= rules.mtd_min_at_dose and enr1 >= rules.mtd_min_phase:
            s1_mtd = rec
            break
        if enr1 + rules.cohort_size > rules.max_patients:
            break
        cur = rec
    pn1, pd1, pod1 = _phase_stats(n1, y1, ph1.probs)
    if s1_mtd < 0:
        return -1, pn1, pn1, pd1, pod1
    # second schedule: entry at min(declared MTD, highest admissible), uncapped step
    n2 = np.zeros(k, dtype=int)
    y2 = np.zeros(k, dtype=int)
    enr2 = 0
    pod = _titepk_pod(S, D, s2.A)
    elig = np.where(pod < rules.ewoc)[0]
    if elig.size == 0:
        return -1, 0, pn1, pd1, pod1
    cur = int(min(s1_mtd, elig[-1]))
    sel = -1
    while True:
        s, dd = _gen_cohort(s2, cur, ph2.probs[cur], rng, mode, rules.cohort_size, log)
        S += s
        D += dd
        n2[cur] += rules.cohort_size
        y2[cur] += dd
        enr2 += rules.cohort_size
        pod = _titepk_pod(S, D, s2.A)
        elig = np.where((pod < rules.ewoc) & (doses <= rules.max_step * doses[cur]))[0]
        if elig.size == 0:
            break
        rec = int(elig[-1])
        if n2[rec] >= rules.mtd_min_at_dose and enr2 >= rules.mtd_min_phase:
            sel = rec
            break
        if enr2 + rules.cohort_size > rules.max_patients:
            break
        cur = rec
    pn2, pd2, pod2 = _phase_stats(n2, y2, ph2.probs)
    return sel, pn2, pn1 + pn2, pd1 + pd2, pod1 + pod2


def _run_blrm(scn: Scenario, rules: EscalationRules, rng, mode, log=None):
    ph = scn.phases[0]
    grid = _blrm_grid(scn.doses, SIM_REF_DOSE)
    doses = np.asarray(scn.doses, dtype=float)
    k = doses.size
    n_at = np.zeros(k, dtype=int)
    y_at = np.zeros(k, dtype=int)
    cur, enrolled = 0, 0
    sel = -1
    while True:
        y = int(rng.binomial(rules.cohort_size, ph.probs[cur]))
        if log is not None:
            log.append({"dose_index": cur, "dlts": y})
        n_at[cur] += rules.cohort_size
        y_at[cur] += y
        enrolled += rules.cohort_size
        pod = grid.pod(n_at, y_at)
        elig = np.where((pod < rules.ewoc) & (doses <= rules.max_step * doses[cur]))[0]
        if elig.size == 0:
            break
        rec = int(elig[-1])
        if n_at[rec] >= rules.mtd_min_at_dose and enrolled >= rules.mtd_min_phase:
            sel = rec
            break
        if enrolled + rules.cohort_size > rules.max_patients:
            break
        cur = rec
    n, d, od = _phase_stats(n_at, y_at, ph.probs)
    return sel, n, n, d, od


def _run_crm(scn: Scenario, rules: EscalationRules, rng, mode, log=None):
    ph = scn.phases[0]
    tab = _crm_tables(len(scn.doses))
    k = len(scn.doses)
    n_at = np.zeros(k, dtype=int)
    y_at = np.zeros(k, dtype=int)
    cur, enrolled = 0, 0
    sel = -1
    while True:
        y = int(rng.binomial(rules.cohort_size, ph.probs[cur]))
        if log is not None:
            log.append({"dose_index": cur, "dlts": y})
        n_at[cur] += rules.cohort_size
        y_at[cur] += y
        enrolled += rules.cohort_size
        lp = tab.logpri + y_at @ tab.logpi + (n_at - y_at) @ tab.log1mpi
        lp -= lp.max()
        w = np.exp(lp)
        w /= w.sum()
        cdf = np.cumsum(w)
        p1 = cdf[np.searchsorted(tab.a_grid, tab.safe_cut)]
        if p1 > 0.90:
            break
        a_med = tab.a_grid[np.searchsorted(cdf, 0.5)]
        est = tab.skeleton ** np.exp(a_med)
        rec = int(np.argmin(np.abs(est - tab.theta)))
        rec = min(rec, cur + 1)
        if enrolled >= rules.mtd_min_phase:
            sel = rec
            break
        cur = rec
    n, d, od = _phase_stats(n_at, y_at, ph.probs)
    return sel, n, n, d, od


_RUNNERS = {"titepk": None, "crm": _run_crm, "blrm": _run_blrm}


def _run_one(method, scn, rules, rng, mode, log=None):
    if method == "titepk":
        fn = _run_titepk_seq if scn.sequential else _run_titepk_single
        return fn(scn, rules, rng, mode, log)
    if method in ("crm", "blrm"):
        if scn.sequential:
            raise ValueError(f"{method} handles single-schedule scenarios only")
        return _RUNNERS[method](scn, rules, rng, mode, log)
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# Lockstep engine for the hierarchical design on sequential scenarios
# ---------------------------------------------------------------------------

def _map_replicate(scn: Scenario, rules: EscalationRules, reps: int, seed: int,
                   log=None):
    """All trials advance one decision round at a time so the 8-parameter
    refits batch into single vectorized sampler runs."""
    ph1, ph2 = scn.phases
    doses = np.asarray(scn.doses, dtype=float)
    k = doses.size
    d1 = SIM_REF_DOSE * ph1.interval / 24.0
    d2 = SIM_REF_DOSE * ph2.interval / 24.0
    hyper = MapHyper(ref_doses=(d1, d2), mu_sd=(2.0, 1.0))
    lr2 = np.log(doses / d2)
    logpost, init = map_batched_logpost(np.log(doses / d1), lr2, hyper)
    grid1 = _blrm_grid(scn.doses, SIM_REF_DOSE)

    rngs = [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(reps)]
    fit_rng = np.random.default_rng(np.random.SeedSequence([seed, 0xB1D]))
    sel = np.full(reps, -1)
    final_n = np.zeros(reps, dtype=int)
    tot_n = np.zeros(reps, dtype=int)
    tot_d = np.zeros(reps, dtype=int)
    tot_od = np.zeros(reps, dtype=int)
    s1_mtd = np.full(reps, -1)
    n1 = np.zeros((reps, k))
    y1 = np.zeros((reps, k))
    csize = rules.cohort_size

    for t in range(reps):
        rng = rngs[t]
        cur, enrolled = 0, 0
        while True:
            y = int(rng.binomial(csize, ph1.probs[cur]))
            if log is not None:
                log.append({"phase": ph1.label, "dose_index": cur, "dlts": y})
            n1[t, cur] += csize
            y1[t, cur] += y
            enrolled += csize
            pod = grid1.pod(n1[t], y1[t])
            elig = np.where((pod < rules.ewoc) & (doses <= rules.max_step * doses[cur]))[0]
            if elig.size == 0:
                final_n[t] = enrolled
                break
            rec = int(elig[-1])
            if n1[t, rec] >= rules.mtd_min_at_dose and enrolled >= rules.mtd_min_phase:
                s1_mtd[t] = rec
                break
            if enrolled + csize > rules.max_patients:
                final_n[t] = enrolled
                break
            cur = rec
        pn, pd, pod_n = _phase_stats(n1[t].astype(int), y1[t].astype(int), ph1.probs)
        tot_n[t] += pn
        tot_d[t] += pd
        tot_od[t] += pod_n

    active = s1_mtd >= 0
    n2 = np.zeros((reps, k))
    y2 = np.zeros((reps, k))
    cur2 = np.where(active, s1_mtd, 0)
    enr2 = np.zeros(reps, dtype=int)

    def _batch_pod(idx):
        """One lockstep refit round over the active trials."""
        T = idx.size
        kept = _map_kept(logpost, init,
                         (n1[idx], y1[idx], n2[idx], y2[idx]), fit_rng, T)
        eta2 = kept[..., 6, None] + np.exp(kept[..., 7, None]) * lr2
        ind = expit(eta2) > 0.40
        return ind.reshape(kept.shape[0], T, _MAP_CHAINS, k).mean(axis=(0, 2))

    idx = np.where(active)[0]
    if idx.size:
        pod = _batch_pod(idx)
        for j, t in enumerate(idx):
            elig = np.where(pod[j] < rules.ewoc)[0]
            if elig.size == 0:
                active[t] = False
                final_n[t] = 0
            else:
                cur2[t] = int(min(s1_mtd[t], elig[-1]))
    while active.any():
        idx = np.where(active)[0]
        for t in idx:
            y = int(rngs[t].binomial(csize, ph2.probs[cur2[t]]))
            if log is not None:
                log.append({"phase": ph2.label, "dose_index": int(cur2[t]), "dlts": y})
            n2[t, cur2[t]] += csize
            y2[t, cur2[t]] += y
            enr2[t] += csize
        pod = _batch_pod(idx)
        for j, t in enumerate(idx):
            elig = np.where((pod[j] < rules.ewoc) & (doses <= rules.max_step * doses[cur2[t]]))[0]
            if elig.size == 0:
                active[t] = False
                final_n[t] = enr2[t]
                continue
            rec = int(elig[-1])
            if n2[t, rec] >= rules.mtd_min_at_dose and enr2[t] >= rules.mtd_min_phase:
                active[t] = False
                sel[t] = rec
                final_n[t] = enr2[t]
                continue
            if enr2[t] + csize > rules.max_patients:
                active[t] = False
                final_n[t] = enr2[t]
                continue
            cur2[t] = rec

    for t in range(reps):
        pn, pd, pod_n = _phase_stats(n2[t].astype(int), y2[t].astype(int), ph2.probs)
        tot_n[t] += pn
        tot_d[t] += pd
        tot_od[t] += pod_n
    return sel, final_n, tot_n, tot_d, tot_od


_MAP_CHAINS = 8


def _map_kept(logpost, init, data, rng, trials, chains=_MAP_CHAINS,
              warm1=300, warm2=300, warm3=200, keep=1500, target=0.25):
    """Batched preconditioned random-walk sweep; returns (keep, W, 8) draws."""
    n1, y1, n2, y2 = (np.repeat(np.asarray(a, dtype=float), chains, axis=0) for a in data)
    W = trials * chains
    th = np.broadcast_to(init, (W, 8)).copy()
    th += 0.1 * rng.standard_normal((W, 8))

    def lp_of(x):
        return logpost(x, n1, y1, n2, y2)

    lp = lp_of(th)
    step = np.full((W, 1), 0.25)
    scale = np.ones((W, 8))

    def sweep(n_iter, adapt, buf=None):
        nonlocal th, lp, step
        for _ in range(n_iter):
            prop = th + step * scale * rng.standard_normal((W, 8))
            lpp = lp_of(prop)
            acc = np.log(rng.random(W)) < lpp - lp
            th[acc] = prop[acc]
            lp[acc] = lpp[acc]
            if adapt:
                ar = acc.reshape(trials, chains).mean(axis=1)
                step *= np.exp((ar - target) * 0.1).repeat(chains)[:, None]
            if buf is not None:
                buf.append(th.copy())

    sweep(warm1, adapt=True)
    buf: list = []
    sweep(warm2, adapt=False, buf=buf)
    B = np.stack(buf, 0).reshape(warm2, trials, chains, 8)
    sd = B.transpose(1, 0, 2, 3).reshape(trials, warm2 * chains, 8).std(axis=1) + 1e-3
    scale = np.repeat(sd / sd.mean(axis=1, keepdims=True), chains, axis=0)
    sweep(warm3, adapt=True)
    out: list = []
    sweep(keep, adapt=False, buf=out)
    return np.stack(out, 0)


# ---------------------------------------------------------------------------
# Replication and metrics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Metrics:
    """Operating characteristics over replications, with MC standard errors."""

    scenario: str
    method: str
    mode: str
    reps: int
    p_target: float
    p_over: float
    p_under: float
    p_none: float
    mean_patients: float
    prop_od_patients: float
    prop_dlt: float
    mean_dlt: float
    p_select: tuple
    se: dict = field(default_factory=dict)
    errors: int = 0
    transcript: list | None = None

    def to_dict(self) -> dict:
        d = {"scenario": self.scenario, "method": self.method, "mode": self.mode,
             "reps": self.reps, "p_target": self.p_target, "p_over": self.p_over,
             "p_under": self.p_under, "p_none": self.p_none,
             "mean_patients": self.mean_patients,
             "prop_od_patients": self.prop_od_patients,
             "prop_dlt": self.prop_dlt, "mean_dlt": self.mean_dlt,
             "errors": self.errors}
        d.update({f"se_{k}": v for k, v in self.se.items()})
        return d


def _aggregate(scn, method, mode, reps, sel, final_n, tot_n, tot_d, tot_od,
               errors, transcript=None) -> Metrics:
    final = scn.phases[-1]
    probs = np.asarray(final.probs)
    tt = (probs >= 0.20) & (probs <= 0.40)
    od = probs > 0.40
    m = sel.size
    chosen = sel >= 0
    p_tt = float(np.mean([(s >= 0) and tt[s] for s in sel])) if m else 0.0
    p_od = float(np.mean([(s >= 0) and od[s] for s in sel])) if m else 0.0
    p_none = float(np.mean(~chosen)) if m else 1.0
    p_ud = 1.0 - p_tt - p_od - p_none
    p_sel = tuple(float(np.mean(sel == i)) for i in range(len(scn.doses)))
    any_od = any(np.any(np.asarray(ph.probs) > 0.40) for ph in scn.phases)
    prop_od = float(np.mean(tot_od / np.maximum(tot_n, 1))) if any_od else float("nan")
    prop_dlt = float(tot_d.sum() / max(tot_n.sum(), 1))
    sqm = np.sqrt(max(m, 1))

    def pse(p):
        return float(np.sqrt(max(p * (1 - p), 0.0)) / sqm)

    se = {"p_target": pse(p_tt), "p_over": pse(p_od), "p_none": pse(p_none),
          "mean_patients": float(final_n.std(ddof=1) / sqm) if m > 1 else 0.0,
          "mean_dlt": float(tot_d.std(ddof=1) / sqm) if m > 1 else 0.0}
    return Metrics(scenario=scn.id, method=method, mode=mode, reps=m,
                   p_target=p_tt, p_over=p_od, p_under=max(p_ud, 0.0),
                   p_none=p_none, mean_patients=float(final_n.mean()) if m else 0.0,
                   prop_od_patients=prop_od, prop_dlt=prop_dlt,
                   mean_dlt=float(tot_d.mean()) if m else 0.0,
                   p_select=p_sel, se=se, errors=errors, transcript=transcript)


def _block(scn_payload, method, rules_payload, seed, lo, hi, mode):
    """Worker: run trials lo..hi-1 with their spawn-derived streams."""
    scn = Scenario.from_dict(scn_payload)
    rules = EscalationRules(**rules_payload)
    seeds = np.random.SeedSequence(seed).spawn(hi)[lo:hi]
    out = []
    for i, ss in enumerate(seeds):
        rng = np.random.default_rng(ss)
        try:
            out.append(_run_one(method, scn, rules, rng, mode))
        except Exception as exc:  # isolate replicate failures
            out.append(("error", repr(exc)))
    return out


def _default_rules(scn: Scenario) -> EscalationRules:
    return EscalationRules(doses=tuple(scn.doses))


def replicate(scenario: Scenario | str, method: str = "titepk",
              rules: EscalationRules | None = None, reps: int = 1000,
              seed: int = 0, mode: str = "exposure-inverse",
              n_jobs: int = 1, keep_transcript: bool = False) -> Metrics:
    """Operating characteristics of one design under one scenario.

    Deterministic given `seed`; parallel (`n_jobs` > 1) and serial runs agree
    exactly because every trial draws from its own spawned stream.  The
    hierarchical design runs its lockstep batched sampler in-process and
    ignores `n_jobs`.  Failed replicates are isolated and counted in
    `Metrics.errors`.
    """
    if isinstance(scenario, str):
        scenario = SCENARIOS[scenario]
    if method not in METHODS:
        raise ValueError(f"method must be one of {METHODS}")
    rules = rules or _default_rules(scenario)
    if tuple(rules.doses) != tuple(scenario.doses):
        raise ValueError("rules.doses must match the scenario panel")
    if reps < 1:
        raise ValueError("reps must be >= 1")
    if mode not in ("exposure-inverse", "fixed-day"):
        raise ValueError(f"unknown mode {mode!r}")
    if method in ("crm", "blrm") and scenario.sequential:
        raise ValueError(f"{method} handles single-schedule scenarios only")
    transcript: list | None = [] if keep_transcript else None

    if method == "blrm-map":
        if not scenario.sequential:
            warnings.warn("hierarchical design on a single-schedule scenario: "
                          "running the plain logistic model", stacklevel=2)
            method_inner = "blrm"
            return replicate(scenario, method_inner, rules, reps, seed, mode,
                             n_jobs, keep_transcript)
        sel, final_n, tot_n, tot_d, tot_od = _map_replicate(
            scenario, rules, reps, seed, log=transcript)
        return _aggregate(scenario, method, "binomial", reps, sel, final_n,
                          tot_n, tot_d, tot_od, 0, transcript)

    payload = scenario.to_dict()
    rp = {**asdict(rules), "doses": tuple(rules.doses), "target": tuple(rules.target)}
    if n_jobs <= 1:
        blocks = [_block(payload, method, rp, seed, 0, reps, mode)]
    else:
        bounds = np.linspace(0, reps, n_jobs + 1).astype(int)
        with ProcessPoolExecutor(max_workers=n_jobs) as ex:
            futs = [ex.submit(_block, payload, method, rp, seed, int(lo), int(hi), mode)
                    for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
            blocks = [f.result() for f in futs]
    rows = [r for b in blocks for r in b]
    errors = sum(1 for r in rows if r[0] == "error")
    ok = [r for r in rows if r[0] != "error"]
    if transcript is not None and reps == 1 and ok:
        # re-run the single trial with logging to emit its transcript
        rng = np.random.default_rng(np.random.SeedSequence(seed).spawn(1)[0])
        _run_one(method, scenario, rules, rng, mode, log=transcript)
    sel = np.array([r[0] for r in ok], dtype=int) if ok else np.empty(0, dtype=int)
    final_n = np.array([r[1] for r in ok], dtype=int) if ok else np.empty(0, dtype=int)
    tot_n = np.array([r[2] for r in ok], dtype=int) if ok else np.empty(0, dtype=int)
    tot_d = np.array([r[3] for r in ok], dtype=int) if ok else np.empty(0, dtype=int)
    tot_od = np.array([r[4] for r in ok], dtype=int) if ok else np.empty(0, dtype=int)
    return _aggregate(scenario, method, mode, reps, sel, final_n, tot_n, tot_d,
                      tot_od, errors, transcript)


# ---------------------------------------------------------------------------
# Sensitivity sweep over the effect half-life and event timing
# ---------------------------------------------------------------------------

def sensitivity_sweep(outcomes, ref_regimen: DosingRegimen, te_grid,
                      timing_shift: str = "observed", regimens=None,
                      intervals=(0.20, 0.40), median_p: float = 0.30,
                      prior_sd: float = 1.25):
    """Refit the exposure-response model across effect half-life values.

    `timing_shift` relocates every DLT event: "early" to 36 h, "late" to
    492 h, "observed" keeps recorded times.  Returns a list of rows
    {"t_e": value, "summary": PosteriorSummary} over `regimens`
    (default: the distinct regimens in the dataset, by ascending dose).
    """
    if timing_shift not in ("early", "observed", "late"):
        raise ValueError(f"unknown timing_shift {timing_shift!r}")
    shift = {"early": 36.0, "late": 492.0}.get(timing_shift)
    data = []
    for o in outcomes:
        t = shift if (o.dlt and shift is not None) else o.time
        data.append(PatientOutcome(regimen=o.regimen, time=t, dlt=o.dlt))
    if regimens is None:
        seen = {}
        for o in data:
            seen.setdefault((o.regimen.dose, o.regimen.interval), o.regimen)
        regimens = [seen[k] for k in sorted(seen)]
    rows = []
    for te in te_grid:
        pk = PKParams(t_e=float(te))
        ref = reference_scale(DosingRegimen(ref_regimen.dose, ref_regimen.interval,
                                            ref_regimen.cycle_length), pk)
        prior = TitePkPrior(ref=ref, median_p=median_p, sd=prior_sd)
        quad = quadrature_posterior(data, prior, pk)
        rows.append({"t_e": float(te),
                     "summary": summarize(quad, regimens, pk, ref, intervals)})
    return rows
