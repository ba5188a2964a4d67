#!/usr/bin/env python3
"""Record service request/response fixtures for the web UI test suite.

Drives the trial service in-process through the exact request sequence the
dashboard issues while a user enters the bundled example trial's cohorts in
order, then records the side flows (what-if, version conflict, validation
errors).  The transcript is written to tests/fixtures/replay.json; the
vitest suite replays it through a mock fetch and requires the UI to
reproduce every response verbatim.

Run from the frontend directory:  python3 tools/record_fixtures.py
"""
from __future__ import annotations

import json
from pathlib import Path

from fastapi.testclient import TestClient

from titepk.service import create_app

OUT = Path(__file__).resolve().parent.parent / "tests" / "fixtures" / "replay.json"

# Mirrors DEFAULT_CONFIG in src/main.ts: the bundled two-schedule trial.
CONFIG = {
    "phases": [
        {"label": "weekly", "interval": 168, "doses": [20, 30]},
        {"label": "daily", "interval": 24, "doses": [2.5, 5, 7.5, 10]},
    ],
    "reference": {"dose": 5, "interval": 24},
    "prior": {"median_p": 0.3, "sd": 1.25},
    "rules": {"cohort_size": 3, "ewoc": 0.25, "target": [0.2, 0.4]},
}

# The bundled trial's cohorts in enrollment order (src/titepk/data/everolimus.csv).
COHORTS = [
    {"schedule": "weekly", "dose": 20,
     "outcomes": [{"time": 504.0, "dlt": False}] * 5},
    {"schedule": "weekly", "dose": 30,
     "outcomes": [{"time": 360.0, "dlt": True}] * 4
                + [{"time": 504.0, "dlt": False}] * 9},
    {"schedule": "daily", "dose": 2.5,
     "outcomes": [{"time": 360.0, "dlt": True}] * 2
                + [{"time": 504.0, "dlt": False}] * 2},
    {"schedule": "daily", "dose": 5,
     "outcomes": [{"time": 360.0, "dlt": True}] * 3
                + [{"time": 504.0, "dlt": False}] * 3},
]

WHATIF_CLEAN = {"schedule": "daily", "dose": 5,
                "outcomes": [{"time": 504.0, "dlt": False}] * 3}


def main() -> None:
    client = TestClient(create_app())
    transcript: list[dict] = []

    def record(method: str, path: str, body=None):
        if method == "GET":
            res = client.get(path)
        else:
            res = client.post(path, json=body)
        entry = {"method": method, "path": path, "status": res.status_code,
                 "response": res.json()}
        if body is not None:
            entry["body"] = body
        transcript.append(entry)
        return entry["response"], res.status_code

    # -- create + initial refresh (the store's createTrial flow) ------------
    view, status = record("POST", "/trials", CONFIG)
    assert status == 201, view
    tid = view["id"]
    base = f"/trials/{tid}"
    record("GET", base)
    fresh_posterior, _ = record("GET", f"{base}/posterior")
    fresh_recommendation, _ = record("GET", f"{base}/recommendation")

    # -- cohort entry in order (submit + refresh each time) -----------------
    version = view["version"]
    for cohort in COHORTS:
        body = {"expected_version": version, "cohort": cohort}
        res, status = record("POST", f"{base}/cohorts", body)
        assert status == 200, res
        version = res["version"]
        record("GET", base)
        record("GET", f"{base}/posterior")
        record("GET", f"{base}/recommendation")

    # final state = the last refresh cycle's responses
    final_view = transcript[-3]["response"]
    final_posterior = transcript[-2]["response"]
    final_recommendation = transcript[-1]["response"]

    # -- what-if: a clean cohort at the current dose ------------------------
    whatif_res, status = record("POST", f"{base}/whatif", {"cohort": WHATIF_CLEAN})
    assert status == 200, whatif_res

    # -- version conflict: a submission from a stale client -----------------
    stale = {"expected_version": 1,
             "cohort": {"schedule": "daily", "dose": 2.5,
                        "outcomes": [{"time": 504.0, "dlt": False}] * 3}}
    _, status = record("POST", f"{base}/cohorts", stale)
    assert status == 409
    # the reload that the conflict prompt triggers
    record("GET", base)
    record("GET", f"{base}/posterior")
    record("GET", f"{base}/recommendation")

    # -- validation errors --------------------------------------------------
    bad_dose = {"cohort": {"schedule": "daily", "dose": 999,
                           "outcomes": [{"time": 504.0, "dlt": False}] * 3}}
    _, status = record("POST", f"{base}/whatif", bad_dose)
    assert status == 422
    empty = {"expected_version": version,
             "cohort": {"schedule": "daily", "dose": 2.5, "outcomes": []}}
    _, status = record("POST", f"{base}/cohorts", empty)
    assert status == 422

    fixture = {
        "note": "recorded service transcript; regenerate with `npm run fixtures`",
        "config": CONFIG,
        "cohorts": COHORTS,
        "whatif_cohort": WHATIF_CLEAN,
        "stale_cohort": stale,
        "bad_dose_cohort": bad_dose["cohort"],
        "empty_outcomes_cohort": empty["cohort"],
        "trial_id": tid,
        "fresh": {"posterior": fresh_posterior,
                  "recommendation": fresh_recommendation},
        "final": {"view": final_view, "posterior": final_posterior,
                  "recommendation": final_recommendation},
        "whatif": {"cohort": WHATIF_CLEAN, "response": whatif_res},
        "transcript": transcript,
    }
    OUT.parent.mkdir(parents=True, exist_ok=True)
    OUT.write_text(json.dumps(fixture, indent=2) + "\n")
    print(f"wrote {OUT} ({len(transcript)} transcript entries)")
    print(f"final recommendation: action={final_recommendation['action']} "
          f"dose={final_recommendation['dose']} "
          f"eligible={final_recommendation['eligible_doses']}")
    print(f"fresh reference median: {fresh_posterior['reference']['median']:.6f}")
    print(f"whatif eligible: {whatif_res['eligible_doses']} vs "
          f"live {final_recommendation['eligible_doses']}")


if __name__ == "__main__":
    main()
