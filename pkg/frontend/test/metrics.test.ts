import { describe, expect, it } from "vitest";

import { controlDepth, controlPrecision } from "../src/metrics.js";
import { makeResponse, makeRng, serverCd, serverCp } from "./stub.js";

describe("control precision", () => {
  it("counts inclusive threshold hits in the top k", () => {
    expect(controlPrecision([2, 1, 2, 0, 2, 1], 3, 2)).toBeCloseTo(2 / 3, 12);
    expect(controlPrecision([3, 3, 3], 3, 2)).toBe(1);
    expect(controlPrecision([0, 1, 0], 3, 2)).toBe(0);
  });

  it("rejects k outside the list", () => {
    expect(() => controlPrecision([1, 1], 3, 1)).toThrow(RangeError);
    expect(() => controlPrecision([1, 1], 0, 1)).toThrow(RangeError);
  });
});

describe("control depth", () => {
  it("returns the first qualifying rank or length + 1", () => {
    expect(controlDepth([2, 1, 2], 2)).toBe(1);
    expect(controlDepth([1, 1, 2], 2)).toBe(3);
    expect(controlDepth([1, 0, 1, 0, 1, 0], 2)).toBe(7);
    expect(controlDepth([0, 0], 0)).toBe(1);
  });
});

describe("agreement with served fixtures", () => {
  it("matches the server's values on randomized responses", () => {
    const rng = makeRng(97);
    for (let trial = 0; trial < 200; trial++) {
      const n = 1 + Math.floor(rng() * 3);
      const scheme = (["price", "rank", "brand"] as const).slice(0, n);
      const request = {
        history: ["h1"],
        scheme: [...scheme],
        tokens: { price: "0-10", rank: "1-100", brand: "acme" },
        method: "learned" as const,
        k: 6,
      };
      const response = makeResponse(request, trial + 1);
      const relevance = response.entries.map((e) => e.r);
      // exact equality: both sides integer-count / k in double precision
      expect(controlPrecision(relevance, relevance.length, n)).toBe(response.cp_at_k);
      expect(controlDepth(relevance, n)).toBe(response.cd);
      // spot-check against the standalone server formulas too
      for (let t = 0; t <= n; t++) {
        expect(controlPrecision(relevance, relevance.length, t)).toBe(
          serverCp(relevance, relevance.length, t),
        );
        expect(controlDepth(relevance, t)).toBe(serverCd(relevance, t));
      }
    }
  });

  it("is monotone in the threshold", () => {
    const rng = makeRng(11);
    for (let trial = 0; trial < 100; trial++) {
      const relevance = Array.from({ length: 6 }, () => Math.floor(rng() * 4));
      for (let t = 3; t >= 1; t--) {
        expect(controlPrecision(relevance, 6, t - 1)).toBeGreaterThanOrEqual(
          controlPrecision(relevance, 6, t),
        );
        expect(controlDepth(relevance, t - 1)).toBeLessThanOrEqual(controlDepth(relevance, t));
      }
    }
  });
});
