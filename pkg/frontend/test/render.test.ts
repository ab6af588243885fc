import { describe, expect, it } from "vitest";

import { escapeHtml, renderBadges, renderColumn, renderControls } from "../src/render.js";
import { initialState } from "../src/state.js";
import { STUB_SCHEMA, makeResponse } from "./stub.js";

const REQUEST = {
  history: ["h1"],
  scheme: ["price", "brand"] as const,
  tokens: { price: "0-10", brand: "acme" },
  method: "learned" as const,
  k: 6,
};

describe("badges", () => {
  it("one badge per token in scheme order with on/off classes", () => {
    const html = renderBadges([1, 0], [
      { attribute: "price", value: "0-10" },
      { attribute: "brand", value: "acme" },
    ]);
    const classes = [...html.matchAll(/class="([^"]+)"/g)].map((m) => m[1]);
    expect(classes).toEqual(["badge badge-on", "badge badge-off"]);
    expect(html).toContain('data-satisfied="1"');
    expect(html).toContain('data-satisfied="0"');
  });
});

describe("column rendering", () => {
  it("shows rank, title, score, r and a consistency flag", () => {
    const response = makeResponse({ ...REQUEST, scheme: [...REQUEST.scheme] }, 5);
    const html = renderColumn("learned", response, response.threshold);
    expect(html).toContain('data-method="learned"');
    expect(html).toContain('data-consistent="true"');
    for (const entry of response.entries) {
      expect(html).toContain(escapeHtml(entry.title));
      expect(html).toContain(`data-r="${entry.r}"`);
    }
  });

  it("flags inconsistency when the client and server disagree at t = N_C", () => {
    const response = makeResponse({ ...REQUEST, scheme: [...REQUEST.scheme] }, 6);
    const broken = { ...response, cp_at_k: response.cp_at_k + 0.25 };
    const html = renderColumn("learned", broken, broken.threshold);
    expect(html).toContain('data-consistent="false"');
  });

  it("reports the hard-filter boundary when present", () => {
    const response = makeResponse(
      { ...REQUEST, scheme: [...REQUEST.scheme], method: "hard_filter" },
      8,
    );
    const html = renderColumn("hard_filter", response, 1);
    expect(html).toContain("boundary");
  });

  it("escapes markup in titles", () => {
    const response = makeResponse({ ...REQUEST, scheme: [...REQUEST.scheme] }, 9);
    response.entries[0] = { ...response.entries[0], title: '<img src=x onerror="1">' };
    const html = renderColumn("learned", response, 1);
    expect(html).not.toContain("<img");
    expect(html).toContain("&lt;img");
  });
});

describe("controls", () => {
  it("renders a picker only for toggled attributes and caps the slider at N_C", () => {
    let state = initialState();
    state = { ...state, schema: STUB_SCHEMA, scheme: ["price", "rank"], threshold: 2 };
    const html = renderControls(state);
    expect([...html.matchAll(/class="token-picker"/g)].length).toBe(2);
    expect(html).toContain('max="2"');
  });
});
