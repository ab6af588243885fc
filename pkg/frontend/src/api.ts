// Typed client for the re-ranking service. The fetch implementation is
// injectable so tests can stub the network.

export type Attribute = "price" | "rank" | "brand" | "category";
export type Method = "learned" | "hard_filter" | "zero_shot";

export interface Schema {
  attributes: Attribute[];
  bucket_labels: Partial<Record<Attribute, string[]>>;
  brands: string[];
  categories: string[];
  methods: Method[];
}

export interface ItemSummary {
  item_id: string;
  title: string;
  brand: string | null;
  price: number | null;
  rank: number | null;
}

export interface HistoryEntry {
  item_id: string;
  title: string;
  timestamp: number;
}

export interface RerankEntry {
  item_id: string;
  title: string;
  score: number;
  r: number;
  satisfied: number[];
  retrieval_score: number;
}

export interface RerankResponse {
  method: Method;
  tokens: { attribute: string; value: string }[];
  entries: RerankEntry[];
  cp_at_k: number;
  cd: number;
  threshold: number;
  boundary: number | null;
}

export interface RerankRequest {
  history: string[];
  scheme: Attribute[];
  tokens: Partial<Record<Attribute, string>>;
  method: Method;
  k: number;
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ApiError extends Error {
  constructor(public status: number, detail: string) {
    super(`${status}: ${detail}`);
  }
}

export class ApiClient {
  constructor(
    private baseUrl: string = "",
    private fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {}

  private async get<T>(path: string): Promise<T> {
    const resp = await this.fetchImpl(this.baseUrl + path);
    if (!resp.ok) throw new ApiError(resp.status, await resp.text());
    return (await resp.json()) as T;
  }

  schema(): Promise<Schema> {
    return this.get<Schema>("/schema");
  }

  health(): Promise<{ status: string }> {
    return this.get<{ status: string }>("/health");
  }

  async searchItems(query: string): Promise<ItemSummary[]> {
    const body = await this.get<{ items: ItemSummary[] }>(
      `/items?query=${encodeURIComponent(query)}`,
    );
    return body.items;
  }

  async userHistory(userId: string): Promise<HistoryEntry[]> {
    const body = await this.get<{ items: HistoryEntry[] }>(
      `/users/${encodeURIComponent(userId)}/history`,
    );
    return body.items;
  }

  async rerank(request: RerankRequest, signal?: AbortSignal): Promise<RerankResponse> {
    const resp = await this.fetchImpl(this.baseUrl + "/rerank", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(request),
      signal,
    });
    if (!resp.ok) throw new ApiError(resp.status, await resp.text());
    return (await resp.json()) as RerankResponse;
  }
}
