/**
 * Typed client for the session HTTP API.
 *
 * Every method returns a discriminated result instead of throwing: HTTP
 * errors carry the status and the server's detail message, network
 * failures carry the exception text. Server strings pass through verbatim;
 * nothing is trimmed, re-encoded, or templated here.
 */

export interface CreatedSession {
  session_id: string;
  n_trials: number;
}

export interface NextPayload {
  trial_id: string | null;
  instruction_text: string | null;
  done: boolean;
  position: number;
  n_trials: number;
}

export type ApiResult<T> =
  | { ok: true; value: T }
  | { ok: false; kind: "http"; status: number; detail: string }
  | { ok: false; kind: "network"; detail: string };

export type FetchLike = (
  input: string,
  init?: RequestInit,
) => Promise<Response>;

async function failureOf<T>(response: Response): Promise<ApiResult<T>> {
  let detail = response.statusText;
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (typeof body.detail === "string") {
      detail = body.detail;
    }
  } catch {
    // non-JSON error body; keep the status text
  }
  return { ok: false, kind: "http", status: response.status, detail };
}

export class ApiClient {
  private readonly base: string;

  private readonly fetchImpl: FetchLike;

  constructor(baseUrl: string, fetchImpl?: FetchLike) {
    this.base = baseUrl.replace(/\/$/, "");
    const impl = fetchImpl ?? globalThis.fetch;
    // bind so the browser implementation keeps its window receiver
    this.fetchImpl = (input, init) => impl(input, init);
  }

  private async request<T>(
    path: string,
    init?: RequestInit,
  ): Promise<ApiResult<T>> {
    let response: Response;
    try {
      response = await this.fetchImpl(`${this.base}${path}`, init);
    } catch (error) {
      return { ok: false, kind: "network", detail: String(error) };
    }
    if (!response.ok) {
      return failureOf<T>(response);
    }
    return { ok: true, value: (await response.json()) as T };
  }

  createSession(meta: Record<string, unknown>): Promise<ApiResult<CreatedSession>> {
    return this.request<CreatedSession>("/api/session", {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ meta }),
    });
  }

  nextTrial(sessionId: string): Promise<ApiResult<NextPayload>> {
    return this.request<NextPayload>(
      `/api/session/${encodeURIComponent(sessionId)}/next`,
    );
  }

  postResponse(
    sessionId: string,
    trialId: string,
    text: string,
  ): Promise<ApiResult<Record<string, unknown>>> {
    return this.request<Record<string, unknown>>(
      `/api/session/${encodeURIComponent(sessionId)}/response`,
      {
        method: "POST",
        headers: { "Content-Type": "application/json" },
        body: JSON.stringify({ trial_id: trialId, text }),
      },
    );
  }
}
