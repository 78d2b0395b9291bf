// Shapes served by the control-plane API. Field names mirror the engine's
// domain types; money fields are decimal strings and must be displayed
// verbatim, never recomputed client-side.

export type RunState = "RUNNING" | "SUCCESS" | "FAILURE" | "CANCELED";

export interface RunSummary {
  run_id: string;
  pipeline: string;
  seed: number | null;
  run_state: RunState;
  total_usd: string;
  surcharge_usd: string;
  duration_hours: number;
  backend_mix: Record<string, number>;
  steps_total: number;
  live?: boolean;
}

export interface CostCells {
  compute_usd: string;
  storage_usd: string;
  surcharge_usd: string;
  total_usd: string;
}

export interface AttemptRow {
  step_key: string;
  attempt: number;
  backend_id: string;
  state: string;
  started_at: number | null;
  ended_at: number | null;
  duration_hours: number | null;
  cost: CostCells | null;
  error_code: string | null;
}

export interface RunDetail extends RunSummary {
  plan: { step_key: string; backend_id: string }[];
  attempts: AttemptRow[];
}

export interface LogEntry {
  cursor: number;
  ts: number;
  type: string;
  [extra: string]: unknown;
}

export interface EventsPage {
  events: LogEntry[];
  next_cursor: number;
  run_state: RunState;
}

export interface CostGroup extends CostCells {
  group: string;
  duration_hours: number;
}

export interface DurationSample {
  platform: string;
  step_key: string;
  duration_hours: number;
}

export interface CostReportPayload {
  group_by: "asset" | "platform";
  groups: CostGroup[];
  duration_samples: DurationSample[];
  table: string;
}

export interface BackendInfo {
  backend_id: string;
  display_name: string;
  rate_card: Record<string, string>;
  sim_profile: Record<string, unknown> | null;
}

export interface LaunchBody {
  seed?: number;
  partitions?: string;
  time_range?: string;
  pace?: number;
}
