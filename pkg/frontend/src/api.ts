/** Typed client for the screening service; the UI's only data source. */

import type {
  CaseListing,
  CaseSummary,
  HealthResponse,
  Modality,
  PredictResponse,
  TriageDecision,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public readonly status: number,
    public readonly detail: string,
  ) {
    super(`HTTP ${status}: ${detail}`);
    this.name = "ApiError";
  }
}

/** Raised when the service is unreachable (DNS, refused, aborted). */
export class NetworkError extends Error {
  constructor(cause: unknown) {
    super(`service unreachable: ${String(cause)}`);
    this.name = "NetworkError";
  }
}

async function errorDetail(response: Response): Promise<string> {
  try {
    const body = (await response.json()) as { detail?: unknown };
    if (typeof body.detail === "string") return body.detail;
    return JSON.stringify(body);
  } catch {
    return response.statusText || "request failed";
  }
}

export class ServiceClient {
  constructor(
    private readonly baseUrl: string,
    private readonly fetchFn: typeof fetch = fetch,
  ) {}

  private async request(path: string, init?: RequestInit): Promise<Response> {
    let response: Response;
    try {
      response = await this.fetchFn(`${this.baseUrl}${path}`, init);
    } catch (cause) {
      throw new NetworkError(cause);
    }
    if (!response.ok) {
      throw new ApiError(response.status, await errorDetail(response));
    }
    return response;
  }

  async health(): Promise<HealthResponse> {
    const response = await this.request("/v1/health");
    return (await response.json()) as HealthResponse;
  }

  async predict(file: File | Blob, modality: Modality): Promise<PredictResponse> {
    const form = new FormData();
    form.append("image", file);
    form.append("modality", modality);
    const response = await this.request("/v1/predict", {
      method: "POST",
      body: form,
    });
    return (await response.json()) as PredictResponse;
  }

  async getCase(caseId: string): Promise<CaseSummary> {
    const response = await this.request(`/v1/cases/${caseId}`);
    return (await response.json()) as CaseSummary;
  }

  async listCases(triage?: TriageDecision, limit = 50, offset = 0): Promise<CaseListing> {
    const filter = triage ? `&triage=${triage}` : "";
    const response = await this.request(
      `/v1/cases?limit=${limit}&offset=${offset}${filter}`,
    );
    return (await response.json()) as CaseListing;
  }

  /** Rendered overlay bytes for (case, class, alpha); alpha 0 is the raw study. */
  async fetchOverlay(caseId: string, className: string, alpha: number): Promise<Blob> {
    const query = `class=${encodeURIComponent(className)}&alpha=${alpha}`;
    const response = await this.request(`/v1/cases/${caseId}/cam?${query}`);
    return await response.blob();
  }

  async setTriage(
    caseId: string,
    decision: TriageDecision,
    note = "",
  ): Promise<CaseSummary> {
    const response = await this.request(`/v1/cases/${caseId}/triage`, {
      method: "POST",
      headers: { "Content-Type": "application/json" },
      body: JSON.stringify({ decision, note }),
    });
    return (await response.json()) as CaseSummary;
  }
}
