/**
 * Thin fetch wrapper over the labeling service.
 *
 * All paths are relative, so the console works wherever the service
 * mounts it (normally `queryguard serve --ui dist` at /). Errors come
 * back as ApiError with the server's message verbatim; a network-level
 * failure is status 0 so the app can show a connection banner without
 * discarding local drafts.
 */

import type {
  AdvanceResponse,
  BatchReport,
  LabelSubmission,
  LabelsResponse,
  PendingPage,
  SessionInfo,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    readonly status: number,
    message: string,
  ) {
    super(message);
    this.name = "ApiError";
  }

  /** True when the request never reached the service. */
  get connectionLost(): boolean {
    return this.status === 0;
  }
}

async function request<T>(path: string, init?: RequestInit): Promise<T> {
  let res: Response;
  try {
    res = await fetch(path, init);
  } catch {
    throw new ApiError(0, "cannot reach the labeling service");
  }
  let body: unknown = null;
  try {
    body = await res.json();
  } catch {
    // non-JSON body; fall through to the status check
  }
  if (!res.ok) {
    const message =
      body && typeof body === "object" && typeof (body as { error?: unknown }).error === "string"
        ? (body as { error: string }).error
        : `${res.status} ${res.statusText}`;
    throw new ApiError(res.status, message);
  }
  return body as T;
}

export function getSession(): Promise<SessionInfo> {
  return request("api/session");
}

export function getPending(offset: number, limit: number): Promise<PendingPage> {
  return request(`api/pending?offset=${offset}&limit=${limit}`);
}

export function postLabels(items: LabelSubmission[]): Promise<LabelsResponse> {
  return request("api/labels", {
    method: "POST",
    headers: { "content-type": "application/json" },
    body: JSON.stringify(items),
  });
}

export function postAdvance(): Promise<AdvanceResponse> {
  return request("api/advance", { method: "POST" });
}

export function getReport(batch: number): Promise<BatchReport> {
  return request(`api/report/${batch}`);
}
