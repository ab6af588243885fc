import { beforeEach, describe, expect, it, vi } from "vitest";

import { ApiClient } from "../src/api.js";
import { Controller } from "../src/controller.js";
import { renderResults } from "../src/render.js";
import type { SessionState } from "../src/state.js";
import { makeRng, makeStubServer } from "./stub.js";

function makeController(options: Parameters<typeof makeStubServer>[0] = {}) {
  const server = makeStubServer(options);
  const renders: string[] = [];
  const states: SessionState[] = [];
  const controller = new Controller(new ApiClient("", server.fetch), (state) => {
    states.push(state);
    renders.push(renderResults(state));
  });
  return { controller, server, renders, states };
}

async function prime(controller: Controller) {
  await controller.start();
  await controller.change({
    kind: "set-history",
    items: [
      { item_id: "h1", title: "one" },
      { item_id: "h2", title: "two" },
    ],
  });
  await controller.change({ kind: "toggle-attribute", attribute: "price", on: true });
}

describe("round trip", () => {
  it("a token pick issues a rerank and re-renders within one response cycle", async () => {
    const { controller, server, renders } = makeController();
    await prime(controller);
    const before = server.calls.filter((c) => c.url.endsWith("/rerank")).length;
    const rendersBefore = renders.length;

    await controller.change({ kind: "set-token", attribute: "price", value: "0-10" });

    const rerankCalls = server.calls.filter((c) => c.url.endsWith("/rerank"));
    expect(rerankCalls.length).toBe(before + 1);
    expect(rerankCalls.at(-1)!.request!.tokens).toEqual({ price: "0-10" });
    expect(renders.length).toBeGreaterThan(rendersBefore);
    expect(renders.at(-1)).toContain("result-row");
  });

  it("toggling an attribute off drops its token from the next request", async () => {
    const { controller, server } = makeController();
    await prime(controller);
    await controller.change({ kind: "toggle-attribute", attribute: "brand", on: true });
    await controller.change({ kind: "set-token", attribute: "price", value: "0-10" });
    await controller.change({ kind: "set-token", attribute: "brand", value: "acme" });
    let last = server.calls.filter((c) => c.url.endsWith("/rerank")).at(-1)!;
    expect(last.request!.scheme).toEqual(["price", "brand"]);

    await controller.change({ kind: "toggle-attribute", attribute: "brand", on: false });
    last = server.calls.filter((c) => c.url.endsWith("/rerank")).at(-1)!;
    expect(last.request!.scheme).toEqual(["price"]);
    expect(last.request!.tokens).toEqual({ price: "0-10" });
  });

  it("threshold changes re-render without a round trip", async () => {
    const { controller, server, renders } = makeController();
    await prime(controller);
    await controller.change({ kind: "toggle-attribute", attribute: "rank", on: true });
    await controller.change({ kind: "set-token", attribute: "price", value: "0-10" });
    await controller.change({ kind: "set-token", attribute: "rank", value: "1-100" });
    const calls = server.calls.length;
    const rendersBefore = renders.length;
    await controller.change({ kind: "set-threshold", t: 1 });
    expect(server.calls.length).toBe(calls);
    expect(renders.length).toBe(rendersBefore + 1);
    expect(renders.at(-1)).toContain("t=1");
  });
});

describe("badges and client-side metrics", () => {
  it("badges equal the satisfied flags on 20 scripted interactions", async () => {
    const rng = makeRng(2024);
    const { controller, server, states } = makeController({
      seedOf: (_request, index) => 1000 + index,
    });
    await prime(controller);
    await controller.change({ kind: "toggle-attribute", attribute: "brand", on: true });
    const prices = ["0-10", "10-25", "25-50", "50-120"];
    const brands = ["acme", "nordica", "zenbo"];

    for (let step = 0; step < 20; step++) {
      if (step % 2 === 0) {
        await controller.change({
          kind: "set-token",
          attribute: "price",
          value: prices[Math.floor(rng() * prices.length)],
        });
      } else {
        await controller.change({
          kind: "set-token",
          attribute: "brand",
          value: brands[Math.floor(rng() * brands.length)],
        });
      }
      const state = states.at(-1)!;
      const response = state.results.learned;
      if (!response) continue;
      const html = renderResults(state);
      const rows = html.split('<tr class="result-row"').slice(1);
      expect(rows.length).toBe(response.entries.length);
      rows.forEach((row, i) => {
        const flags = [...row.matchAll(/data-satisfied="(\d)"/g)].map((m) => Number(m[1]));
        expect(flags).toEqual(response.entries[i].satisfied);
      });
      // client CP at t = N_C equals the server's cp_at_k exactly
      const consistent = html.match(/data-consistent="(\w+)"/);
      expect(consistent![1]).toBe("true");
    }
    expect(server.calls.filter((c) => c.url.endsWith("/rerank")).length).toBeGreaterThanOrEqual(20);
  });

  it("rendered order equals response order", async () => {
    const { controller, states } = makeController();
    await prime(controller);
    await controller.change({ kind: "set-token", attribute: "price", value: "0-10" });
    const state = states.at(-1)!;
    const response = state.results.learned!;
    const html = renderResults(state);
    const ids = [...html.matchAll(/data-item="([^"]+)"/g)].map((m) => m[1]);
    expect(ids).toEqual(response.entries.map((e) => e.item_id));
  });
});

describe("supersession", () => {
  beforeEach(() => {
    vi.useFakeTimers();
  });

  it("two rapid changes render only the second response", async () => {
    const { controller, states } = makeController({
      delayMs: 500,
      seedOf: (request) => (request.tokens.price === "0-10" ? 71 : 72),
    });
    vi.useRealTimers();
    await prime(controller);
    vi.useFakeTimers();

    const first = controller.change({ kind: "set-token", attribute: "price", value: "0-10" });
    const second = controller.change({ kind: "set-token", attribute: "price", value: "10-25" });
    await vi.advanceTimersByTimeAsync(600);
    await Promise.all([first, second]);
    vi.useRealTimers();

    const rendered = states
      .map((s) => s.results.learned)
      .filter((r) => r !== undefined);
    // the superseded response never reaches the view
    expect(rendered.every((r) => r!.entries[0].item_id.startsWith("i72"))).toBe(true);
    expect(rendered.length).toBeGreaterThan(0);
    expect(states.at(-1)!.results.learned!.tokens).toEqual([
      { attribute: "price", value: "10-25" },
    ]);
  });

  it("compare mode issues one request per active method", async () => {
    const { controller, server } = makeController();
    await prime(controller);
    await controller.change({ kind: "set-compare", on: true });
    await controller.change({ kind: "set-token", attribute: "price", value: "0-10" });
    const methods = server.calls
      .filter((c) => c.url.endsWith("/rerank"))
      .slice(-3)
      .map((c) => c.request!.method);
    expect(new Set(methods)).toEqual(new Set(["learned", "hard_filter", "zero_shot"]));
  });

  it("errors surface inline without clearing prior results", async () => {
    let failNext = false;
    const base = makeStubServer();
    const failing: typeof base.fetch = (url, init) => {
      if (url.endsWith("/rerank") && failNext) {
        return Promise.resolve(new Response("boom", { status: 500 }));
      }
      return base.fetch(url, init);
    };
    const states: SessionState[] = [];
    const controller = new Controller(new ApiClient("", failing), (s) => states.push(s));
    vi.useRealTimers();
    await controller.start();
    await controller.change({
      kind: "set-history",
      items: [{ item_id: "h1", title: "one" }],
    });
    await controller.change({ kind: "toggle-attribute", attribute: "price", on: true });
    await controller.change({ kind: "set-token", attribute: "price", value: "0-10" });
    const good = states.at(-1)!.results.learned;
    expect(good).toBeDefined();

    failNext = true;
    await controller.change({ kind: "set-token", attribute: "price", value: "10-25" });
    const state = states.at(-1)!;
    expect(state.errors.learned).toContain("500");
    expect(state.results.learned).toEqual(good);
    const html = renderResults(state);
    expect(html).toContain("column-error");
    expect(html).toContain("result-row");
  });
});
