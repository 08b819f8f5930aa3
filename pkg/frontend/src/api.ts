import type { HealthResponse, NeighborsResponse, QueryRequest, QueryResponse } from "./types";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly body: string,
  ) {
    super(`HTTP ${status}: ${body}`);
  }

  /** The failing pipeline stage, when the service names one. */
  stage(): string | null {
    try {
      const parsed = JSON.parse(this.body);
      return typeof parsed.stage === "string" ? parsed.stage : null;
    } catch {
      return null;
    }
  }
}

export class ApiClient {
  constructor(public baseUrl: string) {}

  private url(path: string): string {
    return this.baseUrl.replace(/\/+$/, "") + path;
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await fetch(this.url(path), init);
    const text = await response.text();
    if (!response.ok) {
      throw new ApiError(response.status, text);
    }
    return JSON.parse(text) as T;
  }

  query(request: QueryRequest): Promise<QueryResponse> {
    return this.request<QueryResponse>("/api/query", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify(request),
    });
  }

  neighbors(node: string): Promise<NeighborsResponse> {
    return this.request<NeighborsResponse>(
      `/api/graph/neighbors?node=${encodeURIComponent(node)}`,
    );
  }

  health(): Promise<HealthResponse> {
    return this.request<HealthResponse>("/api/health");
  }
}
