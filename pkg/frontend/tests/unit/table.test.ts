import { Window } from "happy-dom";
import { describe, expect, it } from "vitest";

import { renderRunTable } from "../../src/table.js";
import type { RunSummary } from "../../src/types.js";

function dom(): Document {
  return new Window().document as unknown as Document;
}

function run(overrides: Partial<RunSummary>): RunSummary {
  return {
    run_id: "run-x",
    pipeline: "webgraph",
    seed: 1,
    run_state: "SUCCESS",
    total_usd: "12.34",
    surcharge_usd: "1.00",
    duration_hours: 0.5,
    backend_mix: { local: 4 },
    steps_total: 4,
    ...overrides,
  };
}

describe("renderRunTable", () => {
  it("empty list shows the empty-state panel", () => {
    const el = renderRunTable(dom(), []);
    expect(el.className).toBe("empty-state");
  });

  it("one row per run with verbatim money and a state badge", () => {
    const doc = dom();
    const el = renderRunTable(doc, [
      run({ run_id: "a", run_state: "SUCCESS", total_usd: "422.95" }),
      run({ run_id: "b", run_state: "FAILURE" }),
      run({ run_id: "c", run_state: "CANCELED" }),
    ]);
    const rows = el.querySelectorAll("tr[data-run-id]");
    expect(rows.length).toBe(3);
    expect(rows[0]!.querySelector(".money")!.textContent).toBe("$422.95");
    expect(rows[0]!.querySelector(".badge")!.className).toContain("badge-success");
    expect(rows[1]!.querySelector(".badge")!.className).toContain("badge-failure");
    expect(rows[2]!.querySelector(".badge")!.className).toContain("badge-canceled");
  });

  it("only RUNNING rows get a cancel button, and it fires the handler", () => {
    const doc = dom();
    let canceled = "";
    const el = renderRunTable(
      doc,
      [run({ run_id: "live", run_state: "RUNNING" }), run({ run_id: "done" })],
      { onCancel: (id) => (canceled = id) },
    );
    const buttons = el.querySelectorAll("button.btn-cancel");
    expect(buttons.length).toBe(1);
    (buttons[0] as HTMLButtonElement).click();
    expect(canceled).toBe("live");
  });

  it("clicking the run id opens the detail view", () => {
    const doc = dom();
    let viewed = "";
    const el = renderRunTable(doc, [run({ run_id: "r-9" })], {
      onView: (id) => (viewed = id),
    });
    (el.querySelector("a") as HTMLAnchorElement).click();
    expect(viewed).toBe("r-9");
  });
});
