import type { LaunchBody } from "./types.js";

export interface FormHandlers {
  onLaunch: (body: LaunchBody) => void;
}

function field(doc: Document, label: string, input: HTMLInputElement): HTMLElement {
  const wrap = doc.createElement("label");
  wrap.className = "field";
  const span = doc.createElement("span");
  span.textContent = label;
  wrap.appendChild(span);
  wrap.appendChild(input);
  return wrap;
}

function numberOrUndefined(value: string): number | undefined {
  const trimmed = value.trim();
  if (!trimmed) {
    return undefined;
  }
  const n = Number(trimmed);
  return Number.isFinite(n) ? n : undefined;
}

export function renderForms(doc: Document, handlers: FormHandlers): HTMLElement {
  const box = doc.createElement("div");
  box.className = "forms";

  // launch with optional partition filter
  const launch = doc.createElement("form");
  launch.className = "form form-launch";
  const seed = doc.createElement("input");
  seed.name = "seed";
  seed.placeholder = "(file default)";
  const partitions = doc.createElement("input");
  partitions.name = "partitions";
  partitions.placeholder = "TIME[/SEG], comma separated";
  const pace = doc.createElement("input");
  pace.name = "pace";
  pace.placeholder = "virtual s / wall s";
  launch.appendChild(field(doc, "seed", seed));
  launch.appendChild(field(doc, "partitions", partitions));
  launch.appendChild(field(doc, "pace", pace));
  const launchBtn = doc.createElement("button");
  launchBtn.type = "submit";
  launchBtn.className = "btn btn-primary";
  launchBtn.textContent = "launch run";
  launch.appendChild(launchBtn);
  launch.addEventListener("submit", (ev) => {
    ev.preventDefault();
    handlers.onLaunch({
      seed: numberOrUndefined(seed.value),
      partitions: partitions.value.trim() || undefined,
      pace: numberOrUndefined(pace.value),
    });
  });
  box.appendChild(launch);

  // backfill over an inclusive time range
  const backfill = doc.createElement("form");
  backfill.className = "form form-backfill";
  const start = doc.createElement("input");
  start.name = "start";
  start.placeholder = "first time id";
  const end = doc.createElement("input");
  end.name = "end";
  end.placeholder = "last time id";
  backfill.appendChild(field(doc, "backfill from", start));
  backfill.appendChild(field(doc, "to", end));
  const backfillBtn = doc.createElement("button");
  backfillBtn.type = "submit";
  backfillBtn.className = "btn";
  backfillBtn.textContent = "backfill";
  backfill.appendChild(backfillBtn);
  backfill.addEventListener("submit", (ev) => {
    ev.preventDefault();
    if (start.value.trim() && end.value.trim()) {
      handlers.onLaunch({ time_range: `${start.value.trim()}..${end.value.trim()}` });
    }
  });
  box.appendChild(backfill);

  const status = doc.createElement("div");
  status.className = "form-status";
  box.appendChild(status);
  return box;
}

export function setFormStatus(box: HTMLElement, message: string, isError: boolean): void {
  const status = box.querySelector<HTMLElement>(".form-status");
  if (status) {
    status.textContent = message;
    status.className = `form-status ${isError ? "form-status-error" : ""}`.trim();
  }
}
