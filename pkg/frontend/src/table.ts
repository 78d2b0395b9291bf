import { backendMixLabel, badgeClass, hours, money } from "./format.js";
import type { RunSummary } from "./types.js";

export interface TableHandlers {
  onView?: (runId: string) => void;
  onCancel?: (runId: string) => void;
}

export function renderRunTable(
  doc: Document,
  runs: RunSummary[],
  handlers: TableHandlers = {},
): HTMLElement {
  if (runs.length === 0) {
    const empty = doc.createElement("div");
    empty.className = "empty-state";
    empty.textContent = "No runs yet. Launch one above.";
    return empty;
  }
  const table = doc.createElement("table");
  table.className = "run-table";
  const head = doc.createElement("tr");
  for (const col of ["Run", "Pipeline", "State", "Total", "Surcharge", "Duration", "Backends", ""]) {
    const th = doc.createElement("th");
    th.textContent = col;
    head.appendChild(th);
  }
  table.appendChild(head);

  for (const run of runs) {
    const tr = doc.createElement("tr");
    tr.dataset.runId = run.run_id;

    const id = doc.createElement("td");
    const view = doc.createElement("a");
    view.href = "#";
    view.textContent = run.run_id;
    view.addEventListener("click", (ev) => {
      ev.preventDefault();
      handlers.onView?.(run.run_id);
    });
    id.appendChild(view);
    tr.appendChild(id);

    const pipeline = doc.createElement("td");
    pipeline.textContent = run.pipeline;
    tr.appendChild(pipeline);

    const state = doc.createElement("td");
    const badge = doc.createElement("span");
    badge.className = badgeClass(run.run_state);
    badge.textContent = run.run_state;
    state.appendChild(badge);
    tr.appendChild(state);

    const total = doc.createElement("td");
    total.className = "money";
    total.textContent = money(run.total_usd); // verbatim API value
    tr.appendChild(total);

    const surcharge = doc.createElement("td");
    surcharge.className = "money";
    surcharge.textContent = money(run.surcharge_usd);
    tr.appendChild(surcharge);

    const duration = doc.createElement("td");
    duration.textContent = hours(run.duration_hours);
    tr.appendChild(duration);

    const mix = doc.createElement("td");
    mix.className = "backend-mix";
    mix.textContent = backendMixLabel(run.backend_mix);
    tr.appendChild(mix);

    const actions = doc.createElement("td");
    if (run.run_state === "RUNNING") {
      const cancel = doc.createElement("button");
      cancel.className = "btn btn-cancel";
      cancel.textContent = "cancel";
      cancel.addEventListener("click", () => handlers.onCancel?.(run.run_id));
      actions.appendChild(cancel);
    }
    tr.appendChild(actions);

    table.appendChild(tr);
  }
  return table;
}
