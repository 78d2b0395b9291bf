import { badgeClass, hours, money } from "./format.js";
import type { AttemptRow, LogEntry, RunDetail } from "./types.js";

const LOG_DISPLAY_LIMIT = 250;

function attemptRow(doc: Document, attempt: AttemptRow): HTMLTableRowElement {
  const tr = doc.createElement("tr");
  const cells: (string | HTMLElement)[] = [
    attempt.step_key,
    String(attempt.attempt),
    attempt.backend_id,
  ];
  const badge = doc.createElement("span");
  badge.className = badgeClass(attempt.state);
  badge.textContent = attempt.error_code
    ? `${attempt.state} (${attempt.error_code})`
    : attempt.state;
  cells.push(badge);
  cells.push(hours(attempt.duration_hours));
  cells.push(attempt.cost ? money(attempt.cost.total_usd) : "–");
  cells.push(attempt.cost ? money(attempt.cost.surcharge_usd) : "–");
  for (const cell of cells) {
    const td = doc.createElement("td");
    if (typeof cell === "string") {
      td.textContent = cell;
    } else {
      td.appendChild(cell);
    }
    tr.appendChild(td);
  }
  return tr;
}

function describeEntry(entry: LogEntry): string {
  const ts = `t+${Number(entry.ts).toFixed(1)}s`;
  if (entry.type === "run_state") {
    return `${ts}  run -> ${entry.state}`;
  }
  if (entry.type === "step_state") {
    const err = entry.error_code ? ` (${entry.error_code})` : "";
    return `${ts}  ${entry.step_key} #${entry.attempt} -> ${entry.state}${err}`;
  }
  if (entry.type === "step_event") {
    const ev = entry.event as {
      kind: string;
      step_key: string;
      payload: Record<string, unknown>;
    };
    if (ev.kind === "LOG") {
      return `${ts}  ${ev.step_key}  ${ev.payload.level}: ${ev.payload.message}`;
    }
    if (ev.kind === "MATERIALIZATION") {
      return `${ts}  ${ev.step_key}  materialized ${ev.payload.asset} (${ev.payload.row_count} rows)`;
    }
    return `${ts}  ${ev.step_key}  ${ev.kind}`;
  }
  return `${ts}  ${entry.type}`;
}

export function renderRunDetail(
  doc: Document,
  detail: RunDetail,
  log: LogEntry[],
  onClose?: () => void,
): HTMLElement {
  const panel = doc.createElement("div");
  panel.className = "detail-panel";

  const header = doc.createElement("div");
  header.className = "detail-header";
  const title = doc.createElement("h2");
  title.textContent = detail.run_id;
  header.appendChild(title);
  const badge = doc.createElement("span");
  badge.className = badgeClass(detail.run_state);
  badge.textContent = detail.run_state;
  header.appendChild(badge);
  const totals = doc.createElement("span");
  totals.className = "detail-totals";
  totals.textContent = `total ${money(detail.total_usd)} · surcharge ${money(
    detail.surcharge_usd,
  )} · ${hours(detail.duration_hours)}`;
  header.appendChild(totals);
  if (onClose) {
    const close = doc.createElement("button");
    close.className = "btn btn-close";
    close.textContent = "close";
    close.addEventListener("click", onClose);
    header.appendChild(close);
  }
  panel.appendChild(header);

  const table = doc.createElement("table");
  table.className = "attempt-table";
  const head = doc.createElement("tr");
  for (const col of ["Step", "Attempt", "Backend", "State", "Duration", "Cost", "Surcharge"]) {
    const th = doc.createElement("th");
    th.textContent = col;
    head.appendChild(th);
  }
  table.appendChild(head);
  for (const attempt of detail.attempts) {
    table.appendChild(attemptRow(doc, attempt));
  }
  panel.appendChild(table);

  const logBox = doc.createElement("pre");
  logBox.className = "event-log";
  const shown = log.slice(-LOG_DISPLAY_LIMIT);
  logBox.textContent =
    (log.length > shown.length ? `… ${log.length - shown.length} earlier entries\n` : "") +
    shown.map(describeEntry).join("\n");
  panel.appendChild(logBox);

  return panel;
}
