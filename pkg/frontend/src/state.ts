// Client-side session state for one live trial.
//
// The store is a plain state machine over the service API: it remembers the
// latest server responses and exposes the cohort-entry flow (submit with
// optimistic concurrency, reload on conflict, what-if side panel).  It holds
// no statistics of its own — posterior and recommendation objects are stored
// exactly as the server returned them, and renderers read them verbatim.

import { ApiClient, ApiError } from "./api.js";
import type {
  CohortIn,
  CohortResponse,
  PosteriorResponse,
  RecommendationResponse,
  TrialConfig,
  TrialView,
} from "./types.js";

export interface ConflictInfo {
  expected: number;
  current: number;
}

/** One what-if evaluation, kept beside (never instead of) the live view. */
export interface WhatifResult {
  cohort: CohortIn;
  response: RecommendationResponse;
}

/** Field-path → message map for inline validation errors. */
export type FieldErrors = Record<string, string>;

export interface StoreSnapshot {
  config: TrialConfig | null;
  view: TrialView | null;
  posterior: PosteriorResponse | null;
  recommendation: RecommendationResponse | null;
  lastCohort: CohortResponse | null;
  whatif: WhatifResult | null;
  conflict: ConflictInfo | null;
  fieldErrors: FieldErrors;
  error: string | null;
  busy: boolean;
}

function emptySnapshot(): StoreSnapshot {
  return {
    config: null,
    view: null,
    posterior: null,
    recommendation: null,
    lastCohort: null,
    whatif: null,
    conflict: null,
    fieldErrors: {},
    error: null,
    busy: false,
  };
}

/**
 * Flatten a 422 `detail` payload into field-path → message entries.
 *
 * Pydantic body validation sends a list of {loc, msg}; handler-level checks
 * send a plain string, which is attached to the field its wording names.
 */
export function fieldErrorsFromDetail(detail: unknown): FieldErrors {
  const errors: FieldErrors = {};
  if (Array.isArray(detail)) {
    for (const item of detail) {
      const loc = Array.isArray(item?.loc) ? item.loc : [];
      const path = loc
        .filter((part: unknown) => part !== "body")
        .map((part: unknown, i: number) =>
          typeof part === "number" ? `[${part}]` : (i > 0 ? "." : "") + String(part))
        .join("");
      errors[path || "form"] = String(item?.msg ?? "invalid value");
    }
    return errors;
  }
  const msg = typeof detail === "string" ? detail : JSON.stringify(detail);
  if (/\bdose\b/i.test(msg)) errors["cohort.dose"] = msg;
  else if (/\btime\b/i.test(msg)) errors["cohort.outcomes"] = msg;
  else if (/\bschedule\b/i.test(msg)) errors["cohort.schedule"] = msg;
  else errors["form"] = msg;
  return errors;
}

export class TrialStore {
  api: ApiClient;
  snapshot: StoreSnapshot = emptySnapshot();
  private listeners: Array<(s: StoreSnapshot) => void> = [];

  constructor(api: ApiClient) {
    this.api = api;
  }

  onChange(fn: (s: StoreSnapshot) => void): void {
    this.listeners.push(fn);
  }

  private notify(): void {
    for (const fn of this.listeners) fn(this.snapshot);
  }

  private patch(update: Partial<StoreSnapshot>): void {
    this.snapshot = { ...this.snapshot, ...update };
    this.notify();
  }

  /** Create a trial and load its prior view. */
  async createTrial(config: TrialConfig): Promise<void> {
    this.patch({ busy: true, error: null, fieldErrors: {} });
    try {
      const view = await this.api.createTrial(config);
      this.snapshot = { ...emptySnapshot(), config, view };
      await this.refresh();
    } catch (err) {
      this.fail(err);
    }
  }

  /** Re-fetch view, posterior, and recommendation; clears any conflict. */
  async refresh(): Promise<void> {
    const id = this.snapshot.view?.id;
    if (!id) return;
    this.patch({ busy: true, error: null });
    try {
      const view = await this.api.getTrial(id);
      const posterior = await this.api.getPosterior(id);
      const recommendation = await this.api.getRecommendation(id);
      this.patch({ view, posterior, recommendation, conflict: null, busy: false });
    } catch (err) {
      this.fail(err);
    }
  }

  /**
   * Submit a cohort at the currently displayed version.
   *
   * 409 → conflict info for the reload prompt (view untouched);
   * 422 → inline field errors; success → full refresh.
   */
  async submitCohort(cohort: CohortIn): Promise<void> {
    const view = this.snapshot.view;
    if (!view) return;
    this.patch({ busy: true, error: null, fieldErrors: {} });
    try {
      const res = await this.api.postCohort(view.id, {
        expected_version: view.version,
        cohort,
      });
      this.patch({ lastCohort: res, whatif: null });
      await this.refresh();
    } catch (err) {
      if (err instanceof ApiError && err.status === 409) {
        const d = err.detail as { expected?: number; current?: number } | string;
        const conflict = typeof d === "object" && d !== null
          ? { expected: d.expected ?? view.version, current: d.current ?? -1 }
          : { expected: view.version, current: -1 };
        this.patch({ conflict, busy: false });
        return;
      }
      if (err instanceof ApiError && err.status === 422) {
        this.patch({ fieldErrors: fieldErrorsFromDetail(err.detail), busy: false });
        return;
      }
      this.fail(err);
    }
  }

  /** Evaluate a hypothetical cohort; result sits beside the live view. */
  async runWhatif(cohort: CohortIn): Promise<void> {
    const view = this.snapshot.view;
    if (!view) return;
    this.patch({ busy: true, error: null });
    try {
      const response = await this.api.whatif(view.id, { cohort });
      this.patch({ whatif: { cohort, response }, busy: false });
    } catch (err) {
      if (err instanceof ApiError && err.status === 422) {
        this.patch({ fieldErrors: fieldErrorsFromDetail(err.detail), busy: false });
        return;
      }
      this.fail(err);
    }
  }

  clearWhatif(): void {
    this.patch({ whatif: null });
  }

  private fail(err: unknown): void {
    const msg = err instanceof Error ? err.message : String(err);
    this.patch({ error: msg, busy: false });
  }
}
