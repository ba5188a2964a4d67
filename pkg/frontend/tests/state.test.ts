// Unit coverage for the pieces of the store that shape server errors for
// display: 422 detail payloads (both pydantic lists and handler strings)
// flattened into field-path keyed messages, and HTML escaping in renderers.

import { describe, expect, it } from "vitest";

import { fieldErrorsFromDetail } from "../src/state.js";
import { escapeHtml, fmtProb, renderFormErrors } from "../src/render.js";

describe("fieldErrorsFromDetail", () => {
  it("flattens pydantic location lists into dotted paths", () => {
    const detail = [
      { loc: ["body", "cohort", "outcomes"], msg: "List should have at least 1 item" },
      { loc: ["body", "cohort", "outcomes", 0, "time"], msg: "Input should be greater than 0" },
      { loc: ["body", "expected_version"], msg: "Field required" },
    ];
    const errors = fieldErrorsFromDetail(detail);
    expect(errors["cohort.outcomes"]).toBe("List should have at least 1 item");
    expect(errors["cohort.outcomes[0].time"]).toBe("Input should be greater than 0");
    expect(errors["expected_version"]).toBe("Field required");
  });

  it("routes handler-level messages to the field their wording names", () => {
    expect(fieldErrorsFromDetail("dose 999 is not on the panel")["cohort.dose"]).toBeTruthy();
    expect(fieldErrorsFromDetail("time 900 exceeds the cycle length 504")["cohort.outcomes"])
      .toBeTruthy();
    expect(fieldErrorsFromDetail("unknown schedule label 'qod'")["cohort.schedule"]).toBeTruthy();
    expect(fieldErrorsFromDetail("something else entirely")["form"]).toBeTruthy();
  });

  it("never drops a message", () => {
    const errors = fieldErrorsFromDetail([{ loc: [], msg: "boom" }]);
    expect(Object.values(errors)).toContain("boom");
  });
});

describe("render helpers", () => {
  it("escapes markup in server-sent text", () => {
    expect(escapeHtml(`<b>&"x"`)).toBe("&lt;b&gt;&amp;&quot;x&quot;");
    const html = renderFormErrors({ form: "<script>alert(1)</script>" });
    expect(html).not.toContain("<script>");
    expect(html).toContain("&lt;script&gt;");
  });

  it("formats probabilities with one fixed display rule", () => {
    expect(fmtProb(0.1299440221805228)).toBe("0.130");
    expect(fmtProb(0)).toBe("0.000");
    expect(fmtProb(1)).toBe("1.000");
  });
});
