// Session state for the steering console and the pure transitions on it.
// The state is a plain object; the controller owns mutation and requests.

import type { Attribute, Method, RerankResponse, Schema } from "./api.js";

export interface HistoryPick {
  item_id: string;
  title: string;
}

export interface SessionState {
  schema: Schema | null;
  history: HistoryPick[];
  scheme: Attribute[];
  tokens: Partial<Record<Attribute, string>>;
  methods: Method[];
  compare: boolean;
  threshold: number;
  k: number;
  results: Partial<Record<Method, RerankResponse>>;
  errors: Partial<Record<Method, string>>;
}

export function initialState(): SessionState {
  return {
    schema: null,
    history: [],
    scheme: [],
    tokens: {},
    methods: ["learned"],
    compare: false,
    threshold: 1,
    k: 6,
    results: {},
    errors: {},
  };
}

export type Change =
  | { kind: "set-history"; items: HistoryPick[] }
  | { kind: "toggle-attribute"; attribute: Attribute; on: boolean }
  | { kind: "set-token"; attribute: Attribute; value: string }
  | { kind: "set-compare"; on: boolean }
  | { kind: "set-method"; method: Method }
  | { kind: "set-threshold"; t: number };

export const ALL_METHODS: Method[] = ["learned", "hard_filter", "zero_shot"];

export function tokenCount(state: SessionState): number {
  return state.scheme.length;
}

/** Every toggled attribute has a picked value and a history exists. */
export function requestReady(state: SessionState): boolean {
  if (state.history.length < 1 || state.history.length > 5) return false;
  return state.scheme.every((attr) => !!state.tokens[attr]);
}

export function activeMethods(state: SessionState): Method[] {
  return state.compare ? ALL_METHODS : state.methods;
}

/** Apply a change to the session state (no requests; pure data). */
export function applyChange(state: SessionState, change: Change): SessionState {
  switch (change.kind) {
    case "set-history":
      return { ...state, history: change.items.slice(0, 5) };
    case "toggle-attribute": {
      let scheme: Attribute[];
      const tokens = { ...state.tokens };
      if (change.on) {
        scheme = state.scheme.includes(change.attribute)
          ? state.scheme
          : [...state.scheme, change.attribute];
      } else {
        scheme = state.scheme.filter((a) => a !== change.attribute);
        delete tokens[change.attribute];
      }
      const threshold = Math.min(Math.max(state.threshold, 1), Math.max(scheme.length, 1));
      return { ...state, scheme, tokens, threshold };
    }
    case "set-token": {
      if (!state.scheme.includes(change.attribute)) return state;
      return { ...state, tokens: { ...state.tokens, [change.attribute]: change.value } };
    }
    case "set-compare":
      return { ...state, compare: change.on };
    case "set-method":
      return { ...state, methods: [change.method] };
    case "set-threshold": {
      const upper = Math.max(tokenCount(state), 1);
      const t = Math.min(Math.max(change.t, 1), upper);
      return { ...state, threshold: t };
    }
  }
}

/** Changes that leave the ranking untouched need no round trip. */
export function needsRequest(change: Change): boolean {
  return change.kind !== "set-threshold";
}
