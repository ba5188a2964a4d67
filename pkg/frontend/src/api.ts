// Thin typed client for the titepk trial service.
//
// All methods resolve with the parsed JSON body on 2xx and throw ApiError
// otherwise, preserving the HTTP status and the server's `detail` payload so
// callers can branch on 409 (version conflict) and 422 (validation).
// The fetch implementation is injectable for tests.

import type {
  CohortRequest,
  CohortResponse,
  PosteriorResponse,
  RecommendationResponse,
  TrialConfig,
  TrialView,
  WhatifRequest,
} from "./types.js";

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  status: number;
  detail: unknown;

  constructor(status: number, detail: unknown) {
    super(`HTTP ${status}: ${typeof detail === "string" ? detail : JSON.stringify(detail)}`);
    this.name = "ApiError";
    this.status = status;
    this.detail = detail;
  }
}

export class ApiClient {
  baseUrl: string;
  token: string | null;
  private fetchFn: FetchLike;

  constructor(baseUrl: string, opts?: { token?: string | null; fetchFn?: FetchLike }) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
    this.token = opts?.token ?? null;
    this.fetchFn = opts?.fetchFn ?? ((url, init) => fetch(url, init));
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = {};
    if (body !== undefined) headers["Content-Type"] = "application/json";
    if (this.token) headers["Authorization"] = `Bearer ${this.token}`;
    const res = await this.fetchFn(this.baseUrl + path, {
      method,
      headers,
      body: body === undefined ? undefined : JSON.stringify(body),
    });
    let data: unknown = null;
    try {
      data = await res.json();
    } catch {
      /* non-JSON body; keep null */
    }
    if (!res.ok) {
      const detail = data && typeof data === "object" && "detail" in (data as object)
        ? (data as { detail: unknown }).detail
        : data;
      throw new ApiError(res.status, detail);
    }
    return data as T;
  }

  health(): Promise<{ status: string; trials: number }> {
    return this.request("GET", "/healthz");
  }

  createTrial(config: TrialConfig): Promise<TrialView> {
    return this.request("POST", "/trials", config);
  }

  getTrial(trialId: string): Promise<TrialView> {
    return this.request("GET", `/trials/${trialId}`);
  }

  postCohort(trialId: string, req: CohortRequest): Promise<CohortResponse> {
    return this.request("POST", `/trials/${trialId}/cohorts`, req);
  }

  getPosterior(trialId: string): Promise<PosteriorResponse> {
    return this.request("GET", `/trials/${trialId}/posterior`);
  }

  getRecommendation(trialId: string): Promise<RecommendationResponse> {
    return this.request("GET", `/trials/${trialId}/recommendation`);
  }

  whatif(trialId: string, req: WhatifRequest): Promise<RecommendationResponse> {
    return this.request("POST", `/trials/${trialId}/whatif`, req);
  }
}
