// Dashboard entry point: wires the store to the static page shell.
//
// Layout (ids defined in index.html):
//   #connect-form     service URL + optional bearer token
//   #config-area      trial configuration JSON + create button
//   #trial-header     id / phase / version / status line
//   #plot             posterior interval plot (SVG)
//   #posterior-table  per-dose summary table
//   #recommendation   EWOC recommendation banner
//   #cohort-form      cohort outcome entry
//   #whatif-form      hypothetical cohort entry
//   #whatif-panel     side-by-side comparison (never replaces the live view)
//   #conflict         version-conflict reload prompt

import { ApiClient } from "./api.js";
import { TrialStore, type StoreSnapshot } from "./state.js";
import { renderIntervalPlot } from "./plot.js";
import {
  renderCohortReceipt,
  renderConflict,
  renderFieldError,
  renderFormErrors,
  renderPosteriorTable,
  renderRecommendation,
  renderTrialHeader,
  renderWhatifPanel,
} from "./render.js";
import type { CohortIn, OutcomeIn, TrialConfig } from "./types.js";

// Prefilled two-schedule configuration matching the bundled example trial.
const DEFAULT_CONFIG: TrialConfig = {
  phases: [
    { label: "weekly", interval: 168, doses: [20, 30] },
    { label: "daily", interval: 24, doses: [2.5, 5, 7.5, 10] },
  ],
  reference: { dose: 5, interval: 24 },
  prior: { median_p: 0.3, sd: 1.25 },
  rules: { cohort_size: 3, ewoc: 0.25, target: [0.2, 0.4] },
};

let store: TrialStore | null = null;

function el<T extends HTMLElement>(id: string): T {
  const node = document.getElementById(id);
  if (!node) throw new Error(`missing element #${id}`);
  return node as T;
}

function configEwoc(s: StoreSnapshot): number {
  return s.config?.rules?.ewoc ?? 0.25;
}

function configTarget(s: StoreSnapshot): [number, number] {
  return s.config?.rules?.target ?? [0.2, 0.4];
}

// -- outcome row editors ----------------------------------------------------

function outcomeRow(prefix: string, time: string, dlt: boolean): string {
  return `
  <div class="outcome-row">
    <input type="number" class="${prefix}-time" min="1" step="any" value="${time}"
           aria-label="first-DLT or censoring time (hours)">
    <label><input type="checkbox" class="${prefix}-dlt" ${dlt ? "checked" : ""}> DLT</label>
    <button type="button" class="${prefix}-remove">×</button>
  </div>`;
}

function addOutcomeRow(listId: string, prefix: string): void {
  const list = el(listId);
  const cycle = store?.snapshot.config?.cycle_length ?? 504;
  list.insertAdjacentHTML("beforeend", outcomeRow(prefix, String(cycle), false));
  wireRemoveButtons(listId, prefix);
}

function wireRemoveButtons(listId: string, prefix: string): void {
  el(listId).querySelectorAll(`.${prefix}-remove`).forEach((btn) => {
    (btn as HTMLButtonElement).onclick = () => btn.closest(".outcome-row")?.remove();
  });
}

function readOutcomes(listId: string, prefix: string): OutcomeIn[] {
  const out: OutcomeIn[] = [];
  el(listId).querySelectorAll(".outcome-row").forEach((row) => {
    const time = (row.querySelector(`.${prefix}-time`) as HTMLInputElement).valueAsNumber;
    const dlt = (row.querySelector(`.${prefix}-dlt`) as HTMLInputElement).checked;
    out.push({ time, dlt });
  });
  return out;
}

function readCohort(formPrefix: string): CohortIn {
  const schedule = (el<HTMLSelectElement>(`${formPrefix}-schedule`)).value;
  const dose = Number((el<HTMLSelectElement>(`${formPrefix}-dose`)).value);
  return { schedule, dose, outcomes: readOutcomes(`${formPrefix}-outcomes`, formPrefix) };
}

function fillScheduleOptions(formPrefix: string, s: StoreSnapshot): void {
  const phases = s.config?.phases ?? [];
  const schedule = el<HTMLSelectElement>(`${formPrefix}-schedule`);
  const doseSel = el<HTMLSelectElement>(`${formPrefix}-dose`);
  const chosen = schedule.value || s.view?.phase || phases[0]?.label || "";
  schedule.innerHTML = phases
    .map((p) => `<option value="${p.label}" ${p.label === chosen ? "selected" : ""}>${p.label}</option>`)
    .join("");
  const phase = phases.find((p) => p.label === schedule.value) ?? phases[0];
  const doses = phase?.doses ?? [];
  const chosenDose = doseSel.value;
  doseSel.innerHTML = doses
    .map((d) => `<option value="${d}" ${String(d) === chosenDose ? "selected" : ""}>${d} mg</option>`)
    .join("");
}

// -- rendering --------------------------------------------------------------

function renderAll(s: StoreSnapshot): void {
  el("config-section").hidden = store === null;
  el("trial-section").hidden = s.view === null;

  el("global-error").textContent = s.error ?? "";
  el("busy").hidden = !s.busy;

  if (s.view) el("trial-header").innerHTML = renderTrialHeader(s.view);
  if (s.posterior) {
    el("plot").innerHTML = renderIntervalPlot(s.posterior, configTarget(s));
    el("posterior-table").innerHTML = renderPosteriorTable(s.posterior);
  }
  if (s.recommendation) {
    el("recommendation").innerHTML = renderRecommendation(s.recommendation, configEwoc(s));
  }
  el("receipt").innerHTML = s.lastCohort ? renderCohortReceipt(s.lastCohort) : "";

  el("conflict").innerHTML = s.conflict ? renderConflict(s.conflict) : "";
  if (s.conflict) {
    el<HTMLButtonElement>("reload-btn").onclick = () => void store?.refresh();
  }

  el("cohort-error-dose").innerHTML = renderFieldError(s.fieldErrors, "cohort.dose");
  el("cohort-error-outcomes").innerHTML = renderFieldError(s.fieldErrors, "cohort.outcomes");
  el("cohort-error-schedule").innerHTML = renderFieldError(s.fieldErrors, "cohort.schedule");
  el("form-errors").innerHTML = renderFormErrors(s.fieldErrors);

  if (s.whatif && s.recommendation) {
    el("whatif-panel").innerHTML = renderWhatifPanel(s.whatif, s.recommendation, configEwoc(s));
  } else {
    el("whatif-panel").innerHTML = "";
  }

  if (s.view) {
    fillScheduleOptions("cohort", s);
    fillScheduleOptions("whatif", s);
  }
}

// -- wiring -----------------------------------------------------------------

function connect(): void {
  const baseUrl = el<HTMLInputElement>("base-url").value.trim();
  const token = el<HTMLInputElement>("token").value.trim() || null;
  const api = new ApiClient(baseUrl, { token });
  api.health().then(
    () => {
      store = new TrialStore(api);
      store.onChange(renderAll);
      el("connect-status").textContent = "connected";
      renderAll(store.snapshot);
    },
    (err) => {
      el("connect-status").textContent = `unreachable: ${err instanceof Error ? err.message : err}`;
    },
  );
}

function createTrial(): void {
  if (!store) return;
  let config: TrialConfig;
  try {
    config = JSON.parse(el<HTMLTextAreaElement>("config-json").value);
  } catch (err) {
    el("config-error").textContent = `invalid JSON: ${err instanceof Error ? err.message : err}`;
    return;
  }
  el("config-error").textContent = "";
  void store.createTrial(config);
}

document.addEventListener("DOMContentLoaded", () => {
  el<HTMLTextAreaElement>("config-json").value = JSON.stringify(DEFAULT_CONFIG, null, 2);

  el<HTMLButtonElement>("connect-btn").onclick = connect;
  el<HTMLButtonElement>("create-btn").onclick = createTrial;

  el<HTMLButtonElement>("cohort-add-outcome").onclick = () =>
    addOutcomeRow("cohort-outcomes", "cohort");
  el<HTMLButtonElement>("whatif-add-outcome").onclick = () =>
    addOutcomeRow("whatif-outcomes", "whatif");

  el<HTMLSelectElement>("cohort-schedule").onchange = () => {
    if (store) fillScheduleOptions("cohort", store.snapshot);
  };
  el<HTMLSelectElement>("whatif-schedule").onchange = () => {
    if (store) fillScheduleOptions("whatif", store.snapshot);
  };

  el<HTMLButtonElement>("cohort-submit").onclick = () => {
    void store?.submitCohort(readCohort("cohort"));
  };
  el<HTMLButtonElement>("whatif-run").onclick = () => {
    void store?.runWhatif(readCohort("whatif"));
  };
  el<HTMLButtonElement>("whatif-clear").onclick = () => store?.clearWhatif();
  el<HTMLButtonElement>("refresh-btn").onclick = () => void store?.refresh();
});
