/**
 * Typed client for the annotation service JSON API.
 *
 * Endpoints: POST /sessions, GET /sessions/{id}/batch,
 * POST /sessions/{id}/labels, GET /sessions/{id}/status,
 * GET /sessions/{id}/curve. Errors arrive as {error, field?} with
 * 400/404/409/422 and are surfaced as ApiError so the UI can render each
 * state distinctly.
 */

export type Label = "PRO" | "CON" | "NON";
export const LABELS: readonly Label[] = ["PRO", "CON", "NON"];

export type SessionStatus =
  | "awaiting_labels"
  | "training"
  | "idle"
  | "finished"
  | "failed";

export interface BatchItem {
  id: string;
  tokens: string[];
  topic: string;
  submitted: boolean;
}

export interface BatchResponse {
  episode: number;
  items: BatchItem[];
  remaining: number;
}

export interface CurvePoint {
  labeled_count: number;
  dev_macro_f1: number;
  epoch_seconds_mean: number;
}

export interface StatusResponse {
  id: string;
  status: SessionStatus;
  episode: number;
  labeled: number;
  unlabeled: number;
  error: string | null;
  curve: CurvePoint[];
}

export interface SubmitResponse {
  ok: boolean;
  remaining: number;
}

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    message: string,
    public readonly field?: string,
  ) {
    super(message);
    this.name = "ApiError";
  }
}

async function parseError(response: Response): Promise<never> {
  let message = `HTTP ${response.status}`;
  let field: string | undefined;
  try {
    const body = (await response.json()) as { error?: string; field?: string };
    if (body.error) message = body.error;
    field = body.field;
  } catch {
    // non-JSON error body: keep the status line
  }
  throw new ApiError(response.status, message, field);
}

export class ServiceClient {
  constructor(
    private readonly baseUrl: string = "",
    private readonly fetchImpl: typeof fetch = fetch,
  ) {}

  private async request<T>(path: string, init?: RequestInit): Promise<T> {
    const response = await this.fetchImpl(`${this.baseUrl}${path}`, init);
    if (!response.ok) await parseError(response);
    return (await response.json()) as T;
  }

  createSession(config: Record<string, string>): Promise<{ id: string; status: SessionStatus }> {
    return this.request("/sessions", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ config }),
    });
  }

  getBatch(sessionId: string): Promise<BatchResponse> {
    return this.request(`/sessions/${sessionId}/batch`);
  }

  submitLabels(sessionId: string, id: string, labels: Label[]): Promise<SubmitResponse> {
    return this.request(`/sessions/${sessionId}/labels`, {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify({ id, labels }),
    });
  }

  getStatus(sessionId: string): Promise<StatusResponse> {
    return this.request(`/sessions/${sessionId}/status`);
  }

  getCurve(sessionId: string): Promise<CurvePoint[]> {
    return this.request(`/sessions/${sessionId}/curve`);
  }
}
