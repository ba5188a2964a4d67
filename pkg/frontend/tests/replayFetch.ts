// Mock fetch that replays a recorded service transcript in strict order.
//
// Each call must match the next recorded entry's method, path, and JSON body
// exactly; the recorded response is then returned with its original status.
// A mismatch throws, so tests double as a check that the store issues
// precisely the request sequence the real service saw when the fixture was
// recorded.

import type { FetchLike } from "../src/api.js";

export interface TranscriptEntry {
  method: string;
  path: string;
  status: number;
  response: unknown;
  body?: unknown;
}

export interface ReplayFetch {
  fetchFn: FetchLike;
  /** Index of the next unserved entry. */
  position(): number;
  /** Throws unless every entry has been consumed. */
  assertDone(): void;
}

export function makeReplayFetch(transcript: TranscriptEntry[], baseUrl: string): ReplayFetch {
  let i = 0;

  const fetchFn: FetchLike = async (url, init) => {
    const entry = transcript[i];
    if (!entry) {
      throw new Error(`request #${i} (${init?.method ?? "GET"} ${url}) beyond transcript end`);
    }
    const method = init?.method ?? "GET";
    const path = url.startsWith(baseUrl) ? url.slice(baseUrl.length) : url;
    if (method !== entry.method || path !== entry.path) {
      throw new Error(
        `request #${i}: got ${method} ${path}, transcript has ${entry.method} ${entry.path}`);
    }
    if (entry.body !== undefined) {
      const sent = init?.body ? JSON.parse(String(init.body)) : undefined;
      const want = JSON.stringify(entry.body);
      const got = JSON.stringify(sent);
      if (canonical(sent) !== canonical(entry.body)) {
        throw new Error(
          `request #${i} ${method} ${path}: body mismatch\n  sent: ${got}\n  want: ${want}`);
      }
    }
    i += 1;
    return new Response(JSON.stringify(entry.response), {
      status: entry.status,
      headers: { "Content-Type": "application/json" },
    });
  };

  return {
    fetchFn,
    position: () => i,
    assertDone: () => {
      if (i !== transcript.length) {
        throw new Error(`transcript has ${transcript.length - i} unserved entries`);
      }
    },
  };
}

/** Key-sorted JSON so object-key order does not affect body comparison. */
function canonical(value: unknown): string {
  return JSON.stringify(sortKeys(value));
}

function sortKeys(value: unknown): unknown {
  if (Array.isArray(value)) return value.map(sortKeys);
  if (value && typeof value === "object") {
    const out: Record<string, unknown> = {};
    for (const key of Object.keys(value as object).sort()) {
      out[key] = sortKeys((value as Record<string, unknown>)[key]);
    }
    return out;
  }
  return value;
}
