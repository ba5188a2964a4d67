// HTML fragment builders for the trial dashboard.
//
// Every builder takes server response objects and returns markup; no
// statistic is computed here.  Displayed probabilities are the server's
// numbers passed through one formatting rule, and each element carries the
// raw value in a data attribute for verbatim comparison.

import type {
  CohortResponse,
  PosteriorResponse,
  RecommendationResponse,
  TrialView,
} from "./types.js";
import type { ConflictInfo, FieldErrors, WhatifResult } from "./state.js";

export function escapeHtml(s: string): string {
  return s
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

/** Single display rule for probabilities: three decimals, raw value in data-. */
export function fmtProb(p: number): string {
  return p.toFixed(3);
}

export function renderTrialHeader(view: TrialView): string {
  const mtd = view.mtd_dose === null ? "—" : `${view.mtd_dose} mg`;
  return `
  <div class="trial-meta">
    <span class="meta-item">trial <code>${escapeHtml(view.id)}</code></span>
    <span class="meta-item">phase <strong>${escapeHtml(view.phase)}</strong>
      (${view.phases.map(escapeHtml).join(" → ")})</span>
    <span class="meta-item">version ${view.version}</span>
    <span class="meta-item status-${escapeHtml(view.status)}">status ${escapeHtml(view.status)}</span>
    <span class="meta-item">enrolled ${view.enrolled} (${view.enrolled_phase} this phase)</span>
    <span class="meta-item">MTD ${mtd}</span>
  </div>`;
}

export function renderPosteriorTable(post: PosteriorResponse): string {
  const row = (r: PosteriorResponse["reference"], cls: string, label: string): string => `
    <tr class="${cls}" data-dose="${r.dose}" data-median="${r.median}" data-p-ud="${r.p_ud}"
        data-p-tt="${r.p_tt}" data-p-od="${r.p_od}">
      <td>${label}</td>
      <td class="num" data-raw="${r.median}">${fmtProb(r.median)}</td>
      <td class="num">[${fmtProb(r.ci50[0])}, ${fmtProb(r.ci50[1])}]</td>
      <td class="num">[${fmtProb(r.ci95[0])}, ${fmtProb(r.ci95[1])}]</td>
      <td class="num" data-raw="${r.p_ud}">${fmtProb(r.p_ud)}</td>
      <td class="num" data-raw="${r.p_tt}">${fmtProb(r.p_tt)}</td>
      <td class="num" data-raw="${r.p_od}">${fmtProb(r.p_od)}</td>
    </tr>`;
  const body = post.doses
    .map((r) => row(r, "panel-row", `${r.dose} mg / ${r.interval} h`))
    .join("");
  const ref = row(post.reference, "reference-row",
                  `${post.reference.dose} mg / ${post.reference.interval} h (reference)`);
  return `
  <table class="posterior-table">
    <thead>
      <tr><th>regimen</th><th>median</th><th>50% CI</th><th>95% CI</th>
          <th>P(under)</th><th>P(target)</th><th>P(over)</th></tr>
    </thead>
    <tbody>${body}${ref}</tbody>
  </table>`;
}

function decisionWord(action: string, dose: number | null): string {
  if (action === "treat") return dose === null ? "treat" : `treat next cohort at ${dose} mg`;
  if (action === "declare") return dose === null ? "declare MTD" : `declare MTD = ${dose} mg`;
  if (action === "stop") return "stop the trial";
  return action;
}

export function renderRecommendation(rec: RecommendationResponse, ewoc: number): string {
  const chips = Object.entries(rec.p_od)
    .map(([dose, p]) => {
      const eligible = rec.eligible_doses.some((d) => String(d) === dose || d === Number(dose));
      return `<span class="dose-chip ${eligible ? "eligible" : "blocked"}"
        data-dose="${dose}" data-p-od="${p}">${dose} mg · ${fmtProb(p)}</span>`;
    })
    .join("");
  const mtd = rec.mtd_dose === null ? "" :
    `<div class="mtd-line">MTD: <strong>${rec.mtd_dose} mg</strong></div>`;
  return `
  <div class="recommendation action-${escapeHtml(rec.action)} status-${escapeHtml(rec.status)}">
    <div class="headline">${escapeHtml(decisionWord(rec.action, rec.dose))}</div>
    <div class="reason">${escapeHtml(rec.reason)}</div>
    ${mtd}
    <div class="eligible-line">doses with P(over) &lt; ${ewoc}: ${chips || "none"}</div>
  </div>`;
}

export function renderCohortReceipt(res: CohortResponse): string {
  return `
  <div class="cohort-receipt">
    cohort accepted — version ${res.version}, ${res.enrolled} enrolled,
    engine action: ${escapeHtml(res.decision.action)}
    (${escapeHtml(res.decision.reason)})
  </div>`;
}

/** Hypothetical outcome beside the live recommendation; never replaces it. */
export function renderWhatifPanel(
  whatif: WhatifResult,
  live: RecommendationResponse,
  ewoc: number,
): string {
  const n = whatif.cohort.outcomes.length;
  const nDlt = whatif.cohort.outcomes.filter((o) => o.dlt).length;
  return `
  <div class="whatif-compare">
    <div class="whatif-col live">
      <h4>current</h4>
      ${renderRecommendation(live, ewoc)}
    </div>
    <div class="whatif-col hypothetical">
      <h4>if ${nDlt}/${n} DLT at ${whatif.cohort.dose} mg</h4>
      ${renderRecommendation(whatif.response, ewoc)}
    </div>
  </div>`;
}

export function renderConflict(conflict: ConflictInfo): string {
  return `
  <div class="conflict-banner">
    Submitted against version ${conflict.expected}, but the trial is at
    version ${conflict.current} — someone else recorded a cohort first.
    <button type="button" id="reload-btn">Reload latest state</button>
  </div>`;
}

export function renderFieldError(errors: FieldErrors, key: string): string {
  const msg = errors[key];
  return msg ? `<span class="field-error">${escapeHtml(msg)}</span>` : "";
}

export function renderFormErrors(errors: FieldErrors): string {
  const entries = Object.entries(errors);
  if (entries.length === 0) return "";
  return `
  <ul class="form-errors">
    ${entries.map(([k, v]) => `<li><code>${escapeHtml(k)}</code>: ${escapeHtml(v)}</li>`).join("")}
  </ul>`;
}
