import { ApiClient } from "./api.js";
import { renderDurationStrip, renderStackedBarChart } from "./charts.js";
import { renderRunDetail } from "./detail.js";
import { renderForms, setFormStatus } from "./forms.js";
import { DashboardStore, type UiState } from "./store.js";
import { renderRunTable } from "./table.js";

declare global {
  interface Window {
    COSTFLOW_API_BASE?: string;
  }
}

function mount(): void {
  const doc = document;
  const api = new ApiClient(window.COSTFLOW_API_BASE ?? "");
  const store = new DashboardStore(api);

  const banner = doc.getElementById("banner")!;
  const formsBox = doc.getElementById("forms")!;
  const runsBox = doc.getElementById("runs")!;
  const detailBox = doc.getElementById("detail")!;
  const chartsBox = doc.getElementById("charts")!;

  const forms = renderForms(doc, {
    onLaunch: (body) => void store.launch(body),
  });
  formsBox.appendChild(forms);

  const render = (state: UiState): void => {
    banner.className = state.connectionLost ? "banner banner-lost" : "banner hidden";
    banner.textContent = state.connectionLost
      ? "connection lost — retrying…"
      : "";

    if (state.notice) {
      setFormStatus(forms, state.notice.message, state.notice.isError);
    }

    runsBox.replaceChildren(
      renderRunTable(doc, state.runs, {
        onView: (runId) => void store.openDetail(runId),
        onCancel: (runId) => void store.cancel(runId),
      }),
    );

    if (state.detail) {
      detailBox.replaceChildren(
        renderRunDetail(doc, state.detail, state.detailLog, () => store.closeDetail()),
      );
    } else {
      detailBox.replaceChildren();
    }

    chartsBox.replaceChildren();
    const toggle = doc.createElement("div");
    toggle.className = "group-toggle";
    for (const groupBy of ["asset", "platform"] as const) {
      const btn = doc.createElement("button");
      btn.className = `btn ${state.groupBy === groupBy ? "btn-active" : ""}`.trim();
      btn.textContent = `by ${groupBy}`;
      btn.addEventListener("click", () => void store.setGroupBy(groupBy));
      toggle.appendChild(btn);
    }
    chartsBox.appendChild(toggle);
    if (state.report && state.report.groups.length > 0) {
      const h = doc.createElement("h3");
      h.textContent = `cost by ${state.report.group_by} (compute / storage / surcharge)`;
      chartsBox.appendChild(h);
      chartsBox.appendChild(renderStackedBarChart(doc, state.report.groups));
      const h2 = doc.createElement("h3");
      h2.textContent = "step durations by platform";
      chartsBox.appendChild(h2);
      chartsBox.appendChild(renderDurationStrip(doc, state.report.duration_samples));
    } else {
      const empty = doc.createElement("div");
      empty.className = "empty-state";
      empty.textContent = "No cost data yet.";
      chartsBox.appendChild(empty);
    }
  };

  store.subscribe(render);
  store.start();
}

mount();
