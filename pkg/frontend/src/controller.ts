// Wires state changes to rerank requests with last-write-wins supersession:
// each method keeps a sequence counter, responses carrying a stale sequence
// are discarded, and the previous in-flight request is aborted when a new
// one starts.

import { ApiClient, Method, RerankRequest } from "./api.js";
import {
  Change,
  SessionState,
  activeMethods,
  applyChange,
  initialState,
  needsRequest,
  requestReady,
} from "./state.js";

export type RenderFn = (state: SessionState) => void;

export class Controller {
  state: SessionState = initialState();
  private sequence: Record<string, number> = {};
  private inflight: Record<string, AbortController | undefined> = {};

  constructor(private api: ApiClient, private render: RenderFn) {}

  async start(): Promise<void> {
    this.state.schema = await this.api.schema();
    this.render(this.state);
  }

  /** Apply one user change; resolves once its responses (if any) rendered. */
  async change(change: Change): Promise<void> {
    this.state = applyChange(this.state, change);
    if (!needsRequest(change) || !requestReady(this.state)) {
      this.render(this.state);
      return;
    }
    await Promise.all(activeMethods(this.state).map((m) => this.issue(m)));
  }

  private request(method: Method): RerankRequest {
    return {
      history: this.state.history.map((h) => h.item_id),
      scheme: [...this.state.scheme],
      tokens: { ...this.state.tokens },
      method,
      k: this.state.k,
    };
  }

  private async issue(method: Method): Promise<void> {
    const seq = (this.sequence[method] ?? 0) + 1;
    this.sequence[method] = seq;
    this.inflight[method]?.abort();
    const aborter = new AbortController();
    this.inflight[method] = aborter;
    try {
      const response = await this.api.rerank(this.request(method), aborter.signal);
      if (this.sequence[method] !== seq) return; // superseded while in flight
      this.state = {
        ...this.state,
        results: { ...this.state.results, [method]: response },
        errors: { ...this.state.errors, [method]: undefined },
      };
    } catch (err) {
      if (this.sequence[method] !== seq) return;
      if ((err as Error).name === "AbortError") return;
      // keep prior results visible; surface the error inline
      this.state = {
        ...this.state,
        errors: { ...this.state.errors, [method]: String(err) },
      };
    } finally {
      if (this.inflight[method] === aborter) this.inflight[method] = undefined;
    }
    this.render(this.state);
  }
}
