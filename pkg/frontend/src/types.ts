// JSON payloads exchanged with the titepk trial service.
//
// These interfaces mirror the server's request and response schemas
// field-for-field (GET /schema serves the authoritative JSON Schema).
// The UI never derives statistics of its own: every probability shown
// anywhere comes verbatim from one of the response fields below.

// ---------------------------------------------------------------------------
// Requests
// ---------------------------------------------------------------------------

export interface PhaseConfig {
  label: string;
  interval: number; // hours between administrations
  doses: number[];  // dose panel, mg/m^2
}

export interface TrialConfig {
  phases: PhaseConfig[];
  reference: { dose: number; interval: number };
  prior?: { median_p?: number; sd?: number };
  rules?: {
    cohort_size?: number;
    max_patients?: number;
    ewoc?: number;
    max_step?: number;
    mtd_min_at_dose?: number;
    mtd_min_phase?: number;
    target?: [number, number];
  };
  pk?: { T_e?: number; log_keff?: number };
  cycle_length?: number;
}

export interface OutcomeIn {
  time: number; // first-DLT or censoring time, hours
  dlt: boolean;
}

export interface CohortIn {
  schedule?: string; // phase label; server defaults to the current phase
  dose: number;
  outcomes: OutcomeIn[];
}

export interface CohortRequest {
  expected_version: number;
  cohort: CohortIn;
}

export interface WhatifRequest {
  cohort: CohortIn;
}

// ---------------------------------------------------------------------------
// Responses
// ---------------------------------------------------------------------------

export interface DoseRow {
  dose: number;
  interval: number;
  median: number;
  ci50: [number, number];
  ci95: [number, number];
  p_ud: number;
  p_tt: number;
  p_od: number;
}

export interface PosteriorResponse {
  id: string;
  version: number;
  phase: string;
  reference: DoseRow;
  doses: DoseRow[];
}

export interface RecommendationResponse {
  id: string;
  version: number;
  phase: string;
  status: string;
  action: string;
  dose: number | null;
  reason: string;
  eligible_doses: number[];
  p_od: Record<string, number>;
  mtd_dose: number | null;
}

export interface TrialView {
  id: string;
  version: number;
  phase: string;
  status: string;
  enrolled: number;
  enrolled_phase: number;
  phases: string[];
  cohorts: Array<{
    schedule: string;
    interval: number;
    dose: number;
    outcomes: Array<{ time: number; dlt: boolean }>;
  }>;
  mtd_dose: number | null;
}

export interface CohortResponse {
  id: string;
  version: number;
  phase: string;
  status: string;
  enrolled: number;
  enrolled_phase: number;
  decision: {
    action: string;
    dose_index: number | null;
    reason: string;
  };
}
