// Thin typed client over the labeling-service API. Network failures and
// server rejections are distinguished so the UI can keep rejected items
// in place but queue retries when the service is unreachable.

import type {
  IterateResponse,
  LabelAck,
  MetricsResponse,
  QueueResponse,
  SessionResponse,
} from "./types.js";

export class ServiceRejection extends Error {
  status: number;
  constructor(status: number, message: string) {
    super(message);
    this.status = status;
  }
}

export class ServiceUnreachable extends Error {
  constructor(cause: unknown) {
    super(`service unreachable: ${String(cause)}`);
  }
}

export type FetchLike = (url: string, init?: RequestInit) => Promise<Response>;

export class ServiceClient {
  constructor(
    private baseUrl: string,
    private fetchImpl: FetchLike = (...args) => fetch(...args),
  ) {
    this.baseUrl = baseUrl.replace(/\/+$/, "");
  }

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    } catch (err) {
      throw new ServiceUnreachable(err);
    }
    const body = await response.json();
    if (!response.ok) {
      throw new ServiceRejection(response.status, body.error ?? response.statusText);
    }
    return body as T;
  }

  createSession(overrides: Record<string, unknown> = {}): Promise<SessionResponse> {
    return this.request<SessionResponse>("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(overrides),
    });
  }

  getQueue(sessionId: string): Promise<QueueResponse> {
    return this.request<QueueResponse>(`/sessions/${sessionId}/queue`);
  }

  submitLabel(
    sessionId: string,
    sampleId: string,
    label: string,
    analystId: string,
  ): Promise<LabelAck> {
    return this.request<LabelAck>(`/sessions/${sessionId}/labels`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ sample_id: sampleId, label, analyst_id: analystId }),
    });
  }

  iterate(sessionId: string): Promise<IterateResponse> {
    return this.request<IterateResponse>(`/sessions/${sessionId}/iterate`, {
      method: "POST",
    });
  }

  getMetrics(sessionId: string): Promise<MetricsResponse> {
    return this.request<MetricsResponse>(`/sessions/${sessionId}/metrics`);
  }
}
