import type {
  BackendInfo,
  CostReportPayload,
  EventsPage,
  LaunchBody,
  RunDetail,
  RunSummary,
} from "./types.js";

export class ApiError extends Error {
  constructor(
    public status: number,
    public detail: string,
  ) {
    super(`${status}: ${detail}`);
  }
}

async function parseError(resp: Response): Promise<ApiError> {
  let detail = resp.statusText;
  try {
    const body = await resp.json();
    detail = body.detail ?? body.error ?? JSON.stringify(body);
  } catch {
    // non-JSON error body; keep the status text
  }
  return new ApiError(resp.status, detail);
}

export class ApiClient {
  constructor(private base: string = "") {}

  private async getJson<T>(path: string): Promise<T> {
    const resp = await fetch(this.base + path);
    if (!resp.ok) {
      throw await parseError(resp);
    }
    return (await resp.json()) as T;
  }

  async listRuns(): Promise<RunSummary[]> {
    const body = await this.getJson<{ runs: RunSummary[] }>("/runs");
    return body.runs;
  }

  getRun(runId: string): Promise<RunDetail> {
    return this.getJson<RunDetail>(`/runs/${encodeURIComponent(runId)}`);
  }

  async launchRun(body: LaunchBody): Promise<string> {
    const resp = await fetch(this.base + "/runs", {
      method: "POST",
      headers: { "content-type": "application/json" },
      body: JSON.stringify(body),
    });
    if (!resp.ok) {
      throw await parseError(resp);
    }
    const doc = await resp.json();
    return doc.run_id as string;
  }

  async cancelRun(runId: string): Promise<void> {
    const resp = await fetch(this.base + `/runs/${encodeURIComponent(runId)}/cancel`, {
      method: "POST",
    });
    if (!resp.ok) {
      throw await parseError(resp);
    }
  }

  events(runId: string, afterSeq: number, limit = 1000): Promise<EventsPage> {
    const params = new URLSearchParams({
      after_seq: String(afterSeq),
      limit: String(limit),
    });
    return this.getJson<EventsPage>(
      `/runs/${encodeURIComponent(runId)}/events?${params.toString()}`,
    );
  }

  costReport(groupBy: "asset" | "platform"): Promise<CostReportPayload> {
    return this.getJson<CostReportPayload>(`/reports/cost?group_by=${groupBy}`);
  }

  async backends(): Promise<BackendInfo[]> {
    const body = await this.getJson<{ backends: BackendInfo[] }>("/backends");
    return body.backends;
  }
}
