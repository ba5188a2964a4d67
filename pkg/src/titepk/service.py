"""HTTP/JSON service for live trial conduct.

Endpoints: create a trial, submit cohort outcomes (optimistic concurrency via
an expected version), read posterior summaries and escalation recommendations,
and evaluate hypothetical cohorts without touching stored state.

Persistence is an append-only JSONL event log per trial (one object per line:
``{"seq", "ts", "event", "body"}``) with in-memory materialization; a JSON
snapshot of each trial is written on shutdown.  Logs found in the state
directory are replayed on startup.

Status codes: 404 unknown trial, 409 version conflict (or submission to a
finished trial), 422 semantic validation failure, 503 inference failure.
"""
from __future__ import annotations

import copy
import json
import threading
import uuid
from contextlib import asynccontextmanager
from datetime import datetime, timezone
from pathlib import Path

import numpy as np
from fastapi import Depends, FastAPI, Header, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, ConfigDict, Field

from .model import PatientOutcome, TitePkPrior, quadrature_posterior, summarize
from .pk import DosingRegimen, PKParams, reference_scale
from .trial import Decision, EscalationRules, TrialState, apply_decision, recommend

EVENT_LOG_DOC = ("one JSON object per line: {seq: int, ts: RFC3339 UTC, "
                 "event: 'create'|'cohort', body: request payload}; the log is "
                 "the source of truth and is replayed verbatim on startup")


# ---------------------------------------------------------------------------
# Request / response schemas
# ---------------------------------------------------------------------------

class PhaseConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    label: str = Field(min_length=1)
    interval: float = Field(gt=0, description="hours between administrations")
    doses: list[float] = Field(min_length=1, description="dose panel, mg/m^2")


class PKConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    T_e: float = Field(default=30.0, gt=0, description="effect half-life, hours")
    log_keff: float = 0.37


class ReferenceConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    dose: float = Field(gt=0)
    interval: float = Field(gt=0)


class PriorConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    median_p: float = Field(default=0.30, gt=0, lt=1)
    sd: float = Field(default=1.25, gt=0)


class RulesConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    cohort_size: int = Field(default=3, ge=1)
    max_patients: int = Field(default=60, ge=1)
    ewoc: float = Field(default=0.25, gt=0, lt=1)
    max_step: float = Field(default=2.0, gt=0)
    mtd_min_at_dose: int = Field(default=6, ge=1)
    mtd_min_phase: int = Field(default=21, ge=1)
    target: tuple[float, float] = (0.20, 0.40)


class TrialConfig(BaseModel):
    model_config = ConfigDict(extra="forbid")
    phases: list[PhaseConfig] = Field(min_length=1)
    reference: ReferenceConfig
    prior: PriorConfig = PriorConfig()
    rules: RulesConfig = RulesConfig()
    pk: PKConfig = PKConfig()
    cycle_length: float = Field(default=504.0, gt=0)


class OutcomeIn(BaseModel):
    model_config = ConfigDict(extra="forbid")
    time: float = Field(gt=0, description="first-DLT or censoring time, hours")
    dlt: bool


class CohortIn(BaseModel):
    model_config = ConfigDict(extra="forbid")
    schedule: str | None = Field(default=None,
                                 description="phase label; defaults to current")
    dose: float = Field(gt=0)
    outcomes: list[OutcomeIn] = Field(min_length=1)


class CohortRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    expected_version: int = Field(ge=0)
    cohort: CohortIn


class WhatifRequest(BaseModel):
    model_config = ConfigDict(extra="forbid")
    cohort: CohortIn


class DoseRow(BaseModel):
    dose: float
    interval: float
    median: float
    ci50: tuple[float, float]
    ci95: tuple[float, float]
    p_ud: float
    p_tt: float
    p_od: float


class PosteriorResponse(BaseModel):
    id: str
    version: int
    phase: str
    reference: DoseRow
    doses: list[DoseRow]


class RecommendationResponse(BaseModel):
    id: str
    version: int
    phase: str
    status: str
    action: str
    dose: float | None
    reason: str
    eligible_doses: list[float]
    p_od: dict[str, float]
    mtd_dose: float | None


# ---------------------------------------------------------------------------
# Trial session
# ---------------------------------------------------------------------------

class TrialSession:
    """One live trial: configuration, event log, current-phase engine state."""

    def __init__(self, trial_id: str, config: TrialConfig):
        self.id = trial_id
        self.config = config
        self.version = 0
        self.phase_idx = 0
        self.lock = threading.Lock()
        self.cohorts: list[dict] = []      # {"schedule","interval","dose","outcomes"}
        self.applied: list[dict] = []      # {"expected_version","body","response"}
        self.archived_phases: list[dict] = []
        self.state = self._fresh_state(0)
        self.pk = PKParams(t_e=config.pk.T_e, k_eff=float(np.exp(config.pk.log_keff)))
        self.ref = reference_scale(
            DosingRegimen(config.reference.dose, config.reference.interval,
                          cycle_length=config.cycle_length), self.pk)
        self.prior = TitePkPrior(ref=self.ref, median_p=config.prior.median_p,
                                 sd=config.prior.sd)
        self._cache: dict = {}

    def _fresh_state(self, phase_idx: int) -> TrialState:
        phase = self.config.phases[phase_idx]
        rules = EscalationRules(doses=tuple(phase.doses),
                                **self.config.rules.model_dump())
        return TrialState(rules=rules, phase=phase.label)

    @property
    def phase(self) -> PhaseConfig:
        return self.config.phases[self.phase_idx]

    def phase_index_of(self, label: str) -> int:
        for i, ph in enumerate(self.config.phases):
            if ph.label == label:
                return i
        raise HTTPException(422, f"unknown schedule label {label!r}")

    def outcomes_all(self, extra: dict | None = None) -> list[PatientOutcome]:
        rows = self.cohorts + ([extra] if extra else [])
        out = []
        for c in rows:
            reg = DosingRegimen(c["dose"], c["interval"],
                                cycle_length=self.config.cycle_length,
                                label=c["schedule"])
            for o in c["outcomes"]:
                out.append(PatientOutcome(regimen=reg, time=o["time"],
                                          dlt=bool(o["dlt"])))
        return out

    def panel_regimens(self, phase_idx: int | None = None):
        ph = self.config.phases[self.phase_idx if phase_idx is None else phase_idx]
        return [DosingRegimen(d, ph.interval, cycle_length=self.config.cycle_length,
                              label=ph.label) for d in ph.doses]

    def posterior_summary(self, extra: dict | None = None, state: TrialState | None = None):
        """Panel + reference summaries; cached per stored version."""
        key = (self.version, (state or self.state).phase)
        if extra is None and key in self._cache:
            return self._cache[key]
        try:
            quad = quadrature_posterior(self.outcomes_all(extra), self.prior, self.pk)
            st = state or self.state
            idx = self.phase_index_of(st.phase)
            regimens = self.panel_regimens(idx)
            ref_reg = DosingRegimen(self.config.reference.dose,
                                    self.config.reference.interval,
                                    cycle_length=self.config.cycle_length,
                                    label="reference")
            s = summarize(quad, regimens + [ref_reg], self.pk, self.ref,
                          tuple(self.config.rules.target))
        except HTTPException:
            raise
        except Exception as exc:  # numerical breakdown -> 503, not a crash
            raise HTTPException(503, f"inference failure: {exc}") from exc
        result = (s.rows[:-1], s.rows[-1])
        if extra is None:
            self._cache[key] = result
        return result

    def view(self) -> dict:
        return {
            "id": self.id,
            "version": self.version,
            "phase": self.phase.label,
            "status": self.state.status,
            "enrolled": len(self.state.patients),
            "enrolled_phase": self.state.enrolled_phase,
            "phases": [ph.label for ph in self.config.phases],
            "cohorts": self.cohorts,
            "mtd_dose": (None if self.state.mtd_index is None
                         else float(self.state.rules.doses[self.state.mtd_index])),
        }

    def to_snapshot(self) -> dict:
        return {"id": self.id, "version": self.version,
                "config": self.config.model_dump(), "view": self.view(),
                "decisions": list(self.state.decisions)}


def _decision_payload(session: TrialSession, decision: Decision,
                      rows, state: TrialState) -> dict:
    rules = state.rules
    pod = np.array([r.p_od for r in rows])
    doses = np.asarray(rules.doses, dtype=float)
    if state.current is None:
        eligible = doses[pod < rules.ewoc]
    else:
        eligible = doses[(pod < rules.ewoc)
                         & (doses <= rules.max_step * doses[state.current])]
    return {
        "id": session.id,
        "version": session.version,
        "phase": state.phase,
        "status": state.status,
        "action": decision.action,
        "dose": (None if decision.dose_index is None
                 else float(doses[decision.dose_index])),
        "reason": decision.reason,
        "eligible_doses": [float(d) for d in eligible],
        "p_od": {f"{d:g}": float(p) for d, p in zip(doses, pod)},
        "mtd_dose": (None if state.mtd_index is None
                     else float(doses[state.mtd_index])),
    }


# ---------------------------------------------------------------------------
# Store with event-log persistence
# ---------------------------------------------------------------------------

class TrialStore:
    def __init__(self, state_dir: str | None = None):
        self.trials: dict[str, TrialSession] = {}
        self.state_dir = Path(state_dir) if state_dir else None
        if self.state_dir:
            self.state_dir.mkdir(parents=True, exist_ok=True)
            self._replay_all()

    # -- persistence --------------------------------------------------------
    def _log_path(self, trial_id: str) -> Path:
        return self.state_dir / f"{trial_id}.jsonl"

    def append_event(self, trial_id: str, event: str, body: dict, seq: int) -> None:
        if not self.state_dir:
            return
        line = json.dumps({"seq": seq, "ts": datetime.now(timezone.utc).isoformat(),
                           "event": event, "body": body}, sort_keys=True)
        with open(self._log_path(trial_id), "a") as fh:
            fh.write(line + "\n")

    def _replay_all(self) -> None:
        for path in sorted(self.state_dir.glob("*.jsonl")):
            trial_id = path.stem
            session = None
            with open(path) as fh:
                for line in fh:
                    if not line.strip():
                        continue
                    ev = json.loads(line)
                    if ev["event"] == "create":
                        session = TrialSession(trial_id,
                                               TrialConfig(**ev["body"]))
                    elif ev["event"] == "cohort" and session is not None:
                        _apply_cohort(session, CohortRequest(**ev["body"]),
                                      store=None)
            if session is not None:
                self.trials[trial_id] = session

    def snapshot_all(self) -> None:
        if not self.state_dir:
            return
        for session in self.trials.values():
            path = self.state_dir / f"{session.id}.snapshot.json"
            path.write_text(json.dumps(session.to_snapshot(), indent=2) + "\n")

    # -- access -------------------------------------------------------------
    def create(self, config: TrialConfig) -> TrialSession:
        trial_id = uuid.uuid4().hex[:12]
        session = TrialSession(trial_id, config)
        self.trials[trial_id] = session
        self.append_event(trial_id, "create", config.model_dump(), seq=0)
        return session

    def get(self, trial_id: str) -> TrialSession:
        try:
            return self.trials[trial_id]
        except KeyError:
            raise HTTPException(404, f"unknown trial {trial_id!r}") from None


# ---------------------------------------------------------------------------
# Cohort application (shared by live requests and log replay)
# ---------------------------------------------------------------------------

def _canonical(body: BaseModel) -> str:
    return json.dumps(body.model_dump(), sort_keys=True)


def _apply_cohort(session: TrialSession, req: CohortRequest,
                  store: TrialStore | None) -> dict:
    body_key = _canonical(req)
    if req.expected_version != session.version:
        for past in session.applied:
            if (past["expected_version"] == req.expected_version
                    and past["body"] == body_key):
                return past["response"]          # idempotent replay
        raise HTTPException(
            409, {"error": "version conflict",
                  "expected": req.expected_version,
                  "current": session.version})
    cohort = req.cohort
    label = cohort.schedule or session.phase.label
    idx = session.phase_index_of(label)
    if idx < session.phase_idx:
        raise HTTPException(422, f"schedule {label!r} precedes the current phase")
    if session.state.status != "active":
        raise HTTPException(409, f"trial is {session.state.status}; "
                            "no further enrollment")
    phase_cfg = session.config.phases[idx]
    if cohort.dose not in phase_cfg.doses:
        raise HTTPException(422, f"dose {cohort.dose:g} is not on the "
                            f"{label!r} panel {phase_cfg.doses}")
    for o in cohort.outcomes:
        if o.time > session.config.cycle_length:
            raise HTTPException(422, f"time {o.time:g} exceeds the cycle "
                                f"length {session.config.cycle_length:g}")
    if idx > session.phase_idx:
        session.archived_phases.append(session.state.to_dict())
        session.phase_idx = idx
        session.state = session._fresh_state(idx)
    dose_index = phase_cfg.doses.index(cohort.dose)
    session.state.record_cohort(dose_index,
                                [(o.time, o.dlt) for o in cohort.outcomes])
    session.cohorts.append({"schedule": label, "interval": phase_cfg.interval,
                            "dose": cohort.dose,
                            "outcomes": [o.model_dump() for o in cohort.outcomes]})
    session.version += 1
    rows, _ = session.posterior_summary()
    decision = recommend([r.p_od for r in rows], session.state)
    if decision.action in ("declare", "stop"):
        apply_decision(session.state, decision)
    response = {"id": session.id, "version": session.version,
                "phase": session.state.phase, "status": session.state.status,
                "enrolled": len(session.state.patients),
                "enrolled_phase": session.state.enrolled_phase,
                "decision": decision.to_dict()}
    session.applied.append({"expected_version": req.expected_version,
                            "body": body_key, "response": response})
    if store is not None:
        store.append_event(session.id, "cohort", req.model_dump(),
                           seq=session.version)
    return response


# ---------------------------------------------------------------------------
# App factory
# ---------------------------------------------------------------------------

def create_app(state_dir: str | None = None, token: str | None = None) -> FastAPI:
    store = TrialStore(state_dir)

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        store.snapshot_all()

    app = FastAPI(title="titepk service", lifespan=lifespan)
    app.state.store = store
    # The companion web UI is served as static files from an arbitrary origin.
    app.add_middleware(CORSMiddleware, allow_origins=["*"],
                       allow_methods=["*"], allow_headers=["*"])

    async def require_token(authorization: str | None = Header(default=None)):
        if token is not None and authorization != f"Bearer {token}":
            raise HTTPException(401, "missing or invalid bearer token")

    dep = [Depends(require_token)]

    @app.get("/healthz")
    def healthz():
        return {"status": "ok", "trials": len(store.trials)}

    @app.get("/schema")
    def schema():
        return {
            "requests": {
                "TrialConfig": TrialConfig.model_json_schema(),
                "CohortRequest": CohortRequest.model_json_schema(),
                "WhatifRequest": WhatifRequest.model_json_schema(),
            },
            "responses": {
                "PosteriorResponse": PosteriorResponse.model_json_schema(),
                "RecommendationResponse": RecommendationResponse.model_json_schema(),
            },
            "units": {"time": "hours", "dose": "mg/m^2"},
            "event_log": EVENT_LOG_DOC,
        }

    @app.post("/trials", status_code=201, dependencies=dep)
    def create_trial(config: TrialConfig):
        session = store.create(config)
        return session.view()

    @app.get("/trials/{trial_id}", dependencies=dep)
    def get_trial(trial_id: str):
        return store.get(trial_id).view()

    @app.post("/trials/{trial_id}/cohorts", dependencies=dep)
    def post_cohort(trial_id: str, req: CohortRequest):
        session = store.get(trial_id)
        with session.lock:
            return _apply_cohort(session, req, store)

    def _rows_payload(session, rows, phase_cfg):
        return [DoseRow(dose=float(d), interval=phase_cfg.interval,
                        median=r.median, ci50=tuple(r.ci50), ci95=tuple(r.ci95),
                        p_ud=r.p_ud, p_tt=r.p_tt, p_od=r.p_od)
                for d, r in zip(phase_cfg.doses, rows)]

    @app.get("/trials/{trial_id}/posterior", dependencies=dep,
             response_model=PosteriorResponse)
    def get_posterior(trial_id: str):
        session = store.get(trial_id)
        rows, ref_row = session.posterior_summary()
        ref = DoseRow(dose=session.config.reference.dose,
                      interval=session.config.reference.interval,
                      median=ref_row.median, ci50=tuple(ref_row.ci50),
                      ci95=tuple(ref_row.ci95), p_ud=ref_row.p_ud,
                      p_tt=ref_row.p_tt, p_od=ref_row.p_od)
        return PosteriorResponse(id=session.id, version=session.version,
                                 phase=session.phase.label, reference=ref,
                                 doses=_rows_payload(session, rows, session.phase))

    @app.get("/trials/{trial_id}/recommendation", dependencies=dep,
             response_model=RecommendationResponse)
    def get_recommendation(trial_id: str):
        session = store.get(trial_id)
        rows, _ = session.posterior_summary()
        if session.state.status == "active":
            decision = recommend([r.p_od for r in rows], session.state)
        else:
            decision = Decision(
                "declare" if session.state.status == "mtd" else "stop",
                session.state.mtd_index,
                f"trial already {session.state.status}")
        return RecommendationResponse(
            **_decision_payload(session, decision, rows, session.state))

    @app.post("/trials/{trial_id}/whatif", dependencies=dep,
              response_model=RecommendationResponse)
    def whatif(trial_id: str, req: WhatifRequest):
        session = store.get(trial_id)
        cohort = req.cohort
        label = cohort.schedule or session.phase.label
        idx = session.phase_index_of(label)
        if idx < session.phase_idx:
            raise HTTPException(422,
                                f"schedule {label!r} precedes the current phase")
        phase_cfg = session.config.phases[idx]
        if cohort.dose not in phase_cfg.doses:
            raise HTTPException(422, f"dose {cohort.dose:g} is not on the "
                                f"{label!r} panel {phase_cfg.doses}")
        state = copy.deepcopy(session.state)
        if idx > session.phase_idx:
            state = session._fresh_state(idx)
        dose_index = phase_cfg.doses.index(cohort.dose)
        state.record_cohort(dose_index,
                            [(o.time, o.dlt) for o in cohort.outcomes])
        extra = {"schedule": label, "interval": phase_cfg.interval,
                 "dose": cohort.dose,
                 "outcomes": [o.model_dump() for o in cohort.outcomes]}
        rows, _ = session.posterior_summary(extra=extra, state=state)
        decision = recommend([r.p_od for r in rows], state)
        return RecommendationResponse(
            **_decision_payload(session, decision, rows, state))

    return app


app = create_app()
