import { ApiClient, ApiError } from "./api.js";
import { EventCursor } from "./cursor.js";
import type {
  CostReportPayload,
  LaunchBody,
  LogEntry,
  RunDetail,
  RunSummary,
} from "./types.js";

export interface UiState {
  runs: RunSummary[];
  connectionLost: boolean;
  groupBy: "asset" | "platform";
  report: CostReportPayload | null;
  detail: RunDetail | null;
  detailLog: LogEntry[];
  notice: { message: string; isError: boolean } | null;
}

export type Listener = (state: UiState) => void;

const LIST_POLL_MS = 2000;
const DETAIL_POLL_MS = 1000;

/**
 * Single store owning all UI state. Every mutation funnels through here and
 * notifies one render listener, so concurrent poll responses can never
 * interleave half-applied updates.
 */
export class DashboardStore {
  readonly state: UiState = {
    runs: [],
    connectionLost: false,
    groupBy: "asset",
    report: null,
    detail: null,
    detailLog: [],
    notice: null,
  };

  private listener: Listener | null = null;
  private listTimer: ReturnType<typeof setInterval> | null = null;
  private detailTimer: ReturnType<typeof setInterval> | null = null;
  private cursor: EventCursor | null = null;

  constructor(private api: ApiClient) {}

  subscribe(listener: Listener): void {
    this.listener = listener;
    listener(this.state);
  }

  private notify(): void {
    this.listener?.(this.state);
  }

  start(): void {
    void this.refresh();
    this.listTimer = setInterval(() => void this.refresh(), LIST_POLL_MS);
  }

  stop(): void {
    if (this.listTimer) {
      clearInterval(this.listTimer);
    }
    this.closeDetail();
  }

  async refresh(): Promise<void> {
    try {
      const [runs, report] = await Promise.all([
        this.api.listRuns(),
        this.api.costReport(this.state.groupBy),
      ]);
      this.state.runs = runs;
      this.state.report = report;
      this.state.connectionLost = false;
    } catch {
      this.state.connectionLost = true;
    }
    this.notify();
  }

  async setGroupBy(groupBy: "asset" | "platform"): Promise<void> {
    this.state.groupBy = groupBy;
    await this.refresh();
  }

  async launch(body: LaunchBody): Promise<void> {
    try {
      const runId = await this.api.launchRun(body);
      this.state.notice = { message: `launched ${runId}`, isError: false };
    } catch (err) {
      this.state.notice = {
        message: err instanceof ApiError ? err.detail : String(err),
        isError: true,
      };
    }
    await this.refresh();
  }

  async cancel(runId: string): Promise<void> {
    // optimistic: flip the badge, revert from the server's answer on error
    const run = this.state.runs.find((r) => r.run_id === runId);
    const previous = run?.run_state;
    if (run) {
      run.run_state = "CANCELED";
      this.notify();
    }
    try {
      await this.api.cancelRun(runId);
      this.state.notice = { message: `cancel requested for ${runId}`, isError: false };
    } catch (err) {
      if (run && previous) {
        run.run_state = previous;
      }
      this.state.notice = {
        message:
          err instanceof ApiError && err.status === 409
            ? `${runId} is already terminal`
            : String(err),
        isError: true,
      };
    }
    await this.refresh();
  }

  async openDetail(runId: string): Promise<void> {
    this.closeDetail();
    this.cursor = new EventCursor();
    this.state.detailLog = [];
    await this.pollDetail(runId);
    this.detailTimer = setInterval(() => void this.pollDetail(runId), DETAIL_POLL_MS);
  }

  closeDetail(): void {
    if (this.detailTimer) {
      clearInterval(this.detailTimer);
      this.detailTimer = null;
    }
    this.cursor = null;
    this.state.detail = null;
    this.state.detailLog = [];
    this.notify();
  }

  private async pollDetail(runId: string): Promise<void> {
    if (!this.cursor) {
      return;
    }
    try {
      const detail = await this.api.getRun(runId);
      let page = await this.api.events(runId, this.cursor.afterSeq);
      while (true) {
        this.state.detailLog.push(...this.cursor.ingest(page));
        if (page.events.length === 0) {
          break;
        }
        page = await this.api.events(runId, this.cursor.afterSeq);
      }
      this.state.detail = detail;
      this.state.connectionLost = false;
      // terminal runs stop changing; stop polling but keep the panel open
      if (detail.run_state !== "RUNNING" && this.detailTimer) {
        clearInterval(this.detailTimer);
        this.detailTimer = null;
      }
    } catch {
      this.state.connectionLost = true;
    }
    this.notify();
  }
}
