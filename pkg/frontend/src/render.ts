// HTML-string renderers. Pure functions of the session state: the rendered
// item order is exactly the response order, badges mirror the satisfied
// flags, and the header metrics are recomputed client-side at the slider
// threshold (flagged for consistency against the server at t = N_C).

import type { Method, RerankResponse } from "./api.js";
import { controlDepth, controlPrecision } from "./metrics.js";
import { SessionState, activeMethods, tokenCount } from "./state.js";

const METHOD_LABELS: Record<Method, string> = {
  learned: "Learned",
  hard_filter: "Hard filter",
  zero_shot: "Zero shot",
};

export function escapeHtml(text: string): string {
  return text
    .replace(/&/g, "&amp;")
    .replace(/</g, "&lt;")
    .replace(/>/g, "&gt;")
    .replace(/"/g, "&quot;");
}

function scoreBarWidth(score: number, scores: number[]): number {
  const lo = Math.min(...scores);
  const hi = Math.max(...scores);
  if (hi === lo) return 50;
  return Math.round(100 * ((score - lo) / (hi - lo)));
}

export function renderBadges(satisfied: number[], tokens: { attribute: string; value: string }[]): string {
  return satisfied
    .map((flag, i) => {
      const token = tokens[i];
      const cls = flag ? "badge badge-on" : "badge badge-off";
      const label = token ? `${token.attribute}=${token.value}` : `token ${i + 1}`;
      return `<span class="${cls}" data-satisfied="${flag}" title="${escapeHtml(label)}">${escapeHtml(
        token ? token.attribute : String(i + 1),
      )}</span>`;
    })
    .join("");
}

export function renderColumn(method: Method, response: RerankResponse, t: number): string {
  const relevance = response.entries.map((e) => e.r);
  const k = relevance.length;
  const cp = controlPrecision(relevance, k, t);
  const cd = controlDepth(relevance, t);
  const atServerThreshold = t === response.threshold;
  const consistent = !atServerThreshold || cp === response.cp_at_k;
  const scores = response.entries.map((e) => e.score);
  const rows = response.entries
    .map((entry, idx) => {
      const width = scoreBarWidth(entry.score, scores);
      return (
        `<tr class="result-row" data-item="${escapeHtml(entry.item_id)}">` +
        `<td class="rank">${idx + 1}</td>` +
        `<td class="title">${escapeHtml(entry.title)}</td>` +
        `<td class="score"><div class="bar" style="width:${width}%"></div>` +
        `<span class="score-value">${entry.score.toFixed(4)}</span></td>` +
        `<td class="r" data-r="${entry.r}">${entry.r}</td>` +
        `<td class="badges">${renderBadges(entry.satisfied, response.tokens)}</td>` +
        `</tr>`
      );
    })
    .join("");
  const boundary =
    response.boundary === null || response.boundary === undefined
      ? ""
      : ` &middot; boundary ${response.boundary}`;
  return (
    `<section class="method-column" data-method="${method}" data-consistent="${consistent}">` +
    `<header><h3>${METHOD_LABELS[method]}</h3>` +
    `<span class="metrics">CP@${k} ${cp.toFixed(4)} &middot; CD ${cd}${boundary}` +
    ` &middot; t=${t}${atServerThreshold ? ` (server ${response.cp_at_k.toFixed(4)})` : ""}</span>` +
    `</header>` +
    `<table><tbody>${rows}</tbody></table>` +
    `</section>`
  );
}

export function renderResults(state: SessionState): string {
  const columns = activeMethods(state)
    .map((method) => {
      const response = state.results[method];
      const error = state.errors[method];
      if (error) {
        const stale = response ? renderColumn(method, response, state.threshold) : "";
        return `<div class="column-error" data-method="${method}">${escapeHtml(error)}</div>${stale}`;
      }
      if (!response) {
        return `<section class="method-column empty" data-method="${method}"><em>no results yet</em></section>`;
      }
      return renderColumn(method, response, state.threshold);
    })
    .join("\n");
  return `<div class="results ${state.compare ? "compare" : ""}">${columns}</div>`;
}

export function renderControls(state: SessionState): string {
  if (!state.schema) return "<em>loading schema&hellip;</em>";
  const n = tokenCount(state);
  const toggles = state.schema.attributes
    .map((attr) => {
      const on = state.scheme.includes(attr);
      return (
        `<label class="attr-toggle"><input type="checkbox" data-attr="${attr}" ${on ? "checked" : ""}/>` +
        `${attr}</label>` +
        (on ? renderTokenPicker(state, attr) : "")
      );
    })
    .join("");
  const slider =
    n >= 1
      ? `<label class="threshold">t = <input type="range" id="threshold" min="1" max="${n}" ` +
        `step="1" value="${state.threshold}"/> ${state.threshold}</label>`
      : "";
  return `<div class="controls">${toggles}${slider}</div>`;
}

function renderTokenPicker(state: SessionState, attr: string): string {
  const schema = state.schema!;
  let values: string[] = [];
  if (attr === "price" || attr === "rank") {
    values = schema.bucket_labels[attr as "price" | "rank"] ?? [];
  } else if (attr === "brand") {
    values = schema.brands;
  } else {
    values = schema.categories;
  }
  const picked = state.tokens[attr as keyof typeof state.tokens];
  const options = [`<option value="">pick ${attr}&hellip;</option>`]
    .concat(
      values.map(
        (v) =>
          `<option value="${escapeHtml(v)}" ${v === picked ? "selected" : ""}>${escapeHtml(v)}</option>`,
      ),
    )
    .join("");
  return `<select class="token-picker" data-attr="${attr}">${options}</select>`;
}
