/**
 * Typed client for the workbench HTTP API.
 *
 * Deliberately narrow: the only queue an annotator identity can request is
 * its own (the identity is baked in at construction), and there is no method
 * that could return another annotator's pending verdict. Peer verdicts reach
 * the client only inside queue entries the server already filtered.
 */

import type {
  AdjudicationQueuePayload,
  AdjudicationSubmitBody,
  AdjudicationSubmitResponse,
  AnnotationQueuePayload,
  AnnotationSubmitBody,
  AnnotationSubmitResponse,
  ErrorPayload,
  ScreenDecisionBody,
  ScreenDecisionRecord,
  ScreenQueuePayload,
} from './types.js';

/** The slice of Response the client uses; lets tests pass a plain object. */
export interface FetchResponseLike {
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
}

export type FetchLike = (
  url: string,
  init: { method: string; headers?: Record<string, string>; body?: string },
) => Promise<FetchResponseLike>;

/** Server said no: carries the HTTP status and the machine-readable code. */
export class ApiError extends Error {
  constructor(
    readonly status: number,
    readonly code: string,
    message: string,
  ) {
    super(message);
    this.name = 'ApiError';
  }
}

/** The request never reached the server (offline, DNS, refused). */
export class NetworkError extends Error {
  constructor(message: string) {
    super(message);
    this.name = 'NetworkError';
  }
}

export class ApiClient {
  constructor(
    private readonly fetchLike: FetchLike,
    private readonly apiBase: string,
    private token: string,
  ) {}

  setToken(token: string): void {
    this.token = token;
  }

  screenQueue(intent: string, offset: number, limit: number): Promise<ScreenQueuePayload> {
    const query = new URLSearchParams({
      intent,
      offset: String(offset),
      limit: String(limit),
    });
    return this.request<ScreenQueuePayload>('GET', `/api/queues/screen?${query}`);
  }

  submitScreenDecision(body: ScreenDecisionBody): Promise<ScreenDecisionRecord> {
    return this.request<ScreenDecisionRecord>('POST', '/api/screen-decisions', body);
  }

  annotationQueue(annotator: string): Promise<AnnotationQueuePayload> {
    const query = new URLSearchParams({ annotator });
    return this.request<AnnotationQueuePayload>('GET', `/api/queues/annotation?${query}`);
  }

  submitAnnotation(body: AnnotationSubmitBody): Promise<AnnotationSubmitResponse> {
    return this.request<AnnotationSubmitResponse>('POST', '/api/annotations', body);
  }

  adjudicationQueue(): Promise<AdjudicationQueuePayload> {
    return this.request<AdjudicationQueuePayload>('GET', '/api/adjudication');
  }

  submitAdjudication(body: AdjudicationSubmitBody): Promise<AdjudicationSubmitResponse> {
    return this.request<AdjudicationSubmitResponse>('POST', '/api/adjudications', body);
  }

  private async request<T>(method: string, path: string, body?: unknown): Promise<T> {
    const headers: Record<string, string> = { Accept: 'application/json' };
    if (this.token) {
      headers['Authorization'] = `Bearer ${this.token}`;
    }
    if (body !== undefined) {
      headers['Content-Type'] = 'application/json';
    }
    let response: FetchResponseLike;
    try {
      response = await this.fetchLike(`${this.apiBase}${path}`, {
        method,
        headers,
        body: body === undefined ? undefined : JSON.stringify(body),
      });
    } catch (cause) {
      throw new NetworkError(cause instanceof Error ? cause.message : String(cause));
    }
    if (!response.ok) {
      const payload = (await response.json().catch(() => null)) as ErrorPayload | null;
      const code = payload?.error?.code ?? 'http_error';
      const message = payload?.error?.message ?? `HTTP ${response.status}`;
      throw new ApiError(response.status, code, message);
    }
    return (await response.json()) as T;
  }
}
