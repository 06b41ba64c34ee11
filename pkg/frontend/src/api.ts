// Typed client over the backend API. The fetch implementation is injected
// so tests can replay recorded responses and prove no other request happens.

import type {
  AnswerResponse,
  ErrorEnvelope,
  NeighborsResponse,
  NodeRef,
  PathsResponse,
  QasOutcome,
  RetrievalResult,
} from "./types.js";

export interface FetchResponse {
  status: number;
  json(): Promise<unknown>;
}

export type FetchLike = (
  url: string,
  init?: { method?: string; headers?: Record<string, string>; body?: string },
) => Promise<FetchResponse>;

export class ApiError extends Error {
  constructor(readonly envelope: ErrorEnvelope) {
    super(envelope.message);
  }
}

export class ApiClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: FetchLike,
  ) {}

  private async get<T>(path: string): Promise<T> {
    const res = await this.fetchFn(this.baseUrl + path);
    const body = await res.json();
    if (res.status >= 400) throw new ApiError(body as ErrorEnvelope);
    return body as T;
  }

  private async post(path: string, payload: unknown): Promise<FetchResponse> {
    return this.fetchFn(this.baseUrl + path, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(payload),
    });
  }

  retrieve(entity: string): Promise<RetrievalResult> {
    return this.get(`/graph/retrieve?entity=${encodeURIComponent(entity)}`);
  }

  node(id: string): Promise<NodeRef> {
    return this.get(`/graph/node/${encodeURIComponent(id)}`);
  }

  neighbors(id: string, relation?: string): Promise<NeighborsResponse> {
    const q = relation ? `?relation=${encodeURIComponent(relation)}` : "";
    return this.get(`/graph/neighbors/${encodeURIComponent(id)}${q}`);
  }

  traceBack(node: string, depth?: number): Promise<PathsResponse> {
    const q = depth === undefined ? "" : `&depth=${depth}`;
    return this.get(`/paths/trace?node=${encodeURIComponent(node)}${q}`);
  }

  inferred(): Promise<PathsResponse> {
    return this.get("/paths/inferred");
  }

  async qas(question: string, k: number): Promise<QasOutcome> {
    const res = await this.post("/qas", { question, k });
    const body = await res.json();
    if (res.status === 200) return { kind: "ok", answer: body as AnswerResponse };
    const envelope = body as ErrorEnvelope;
    if (envelope.code === "out_of_scope") return { kind: "refused", envelope };
    if (envelope.code === "not_found") return { kind: "not_found", envelope };
    throw new ApiError(envelope);
  }
}
