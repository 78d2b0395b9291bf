import { centsToUsd, money, usdToCents } from "./format.js";
import type { CostGroup, DurationSample } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";

const STACK_PARTS: { key: keyof CostGroup; label: string; cssClass: string }[] = [
  { key: "compute_usd", label: "compute", cssClass: "seg-compute" },
  { key: "storage_usd", label: "storage", cssClass: "seg-storage" },
  { key: "surcharge_usd", label: "surcharge", cssClass: "seg-surcharge" },
];

export interface StackedBar {
  group: string;
  totalCents: number;
  totalLabel: string; // the API's total string, verbatim
  segments: { label: string; cents: number; cssClass: string }[];
}

/** Stack heights are exact cent sums of the API-provided components. */
export function buildStacks(groups: CostGroup[]): StackedBar[] {
  return groups.map((g) => {
    const segments = STACK_PARTS.map((part) => ({
      label: part.label,
      cents: usdToCents(g[part.key] as string),
      cssClass: part.cssClass,
    }));
    return {
      group: g.group,
      totalCents: segments.reduce((acc, s) => acc + s.cents, 0),
      totalLabel: g.total_usd,
      segments,
    };
  });
}

export function renderStackedBarChart(
  doc: Document,
  groups: CostGroup[],
  width = 560,
  height = 240,
): SVGElement {
  const svg = doc.createElementNS(SVG_NS, "svg") as SVGElement;
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  svg.setAttribute("class", "chart chart-stacked");
  const stacks = buildStacks(groups);
  const maxCents = Math.max(1, ...stacks.map((s) => s.totalCents));
  const plotH = height - 40;
  const band = width / Math.max(1, stacks.length);
  const barW = Math.min(72, band * 0.6);

  stacks.forEach((stack, i) => {
    const x = band * i + (band - barW) / 2;
    let yCursor = 10 + plotH;
    for (const seg of stack.segments) {
      const h = (seg.cents / maxCents) * plotH;
      yCursor -= h;
      const rect = doc.createElementNS(SVG_NS, "rect");
      rect.setAttribute("x", x.toFixed(1));
      rect.setAttribute("y", yCursor.toFixed(1));
      rect.setAttribute("width", barW.toFixed(1));
      rect.setAttribute("height", Math.max(0, h).toFixed(1));
      rect.setAttribute("class", seg.cssClass);
      rect.setAttribute("data-group", stack.group);
      rect.setAttribute("data-segment", seg.label);
      rect.setAttribute("data-cents", String(seg.cents));
      svg.appendChild(rect);
    }
    const total = doc.createElementNS(SVG_NS, "text");
    total.setAttribute("x", (x + barW / 2).toFixed(1));
    total.setAttribute("y", Math.max(8, yCursor - 4).toFixed(1));
    total.setAttribute("class", "chart-total");
    total.setAttribute("text-anchor", "middle");
    total.setAttribute("data-total-cents", String(stack.totalCents));
    total.textContent = money(stack.totalLabel);
    svg.appendChild(total);

    const label = doc.createElementNS(SVG_NS, "text");
    label.setAttribute("x", (x + barW / 2).toFixed(1));
    label.setAttribute("y", String(height - 8));
    label.setAttribute("class", "chart-label");
    label.setAttribute("text-anchor", "middle");
    label.textContent = stack.group;
    svg.appendChild(label);
  });
  return svg;
}

/** One row of dots per platform, positioned by duration. */
export function renderDurationStrip(
  doc: Document,
  samples: DurationSample[],
  width = 560,
  rowHeight = 26,
): SVGElement {
  const platforms = [...new Set(samples.map((s) => s.platform))].sort();
  const height = Math.max(1, platforms.length) * rowHeight + 24;
  const svg = doc.createElementNS(SVG_NS, "svg") as SVGElement;
  svg.setAttribute("viewBox", `0 0 ${width} ${height}`);
  svg.setAttribute("class", "chart chart-durations");
  const maxDur = Math.max(0.001, ...samples.map((s) => s.duration_hours));
  const plotX0 = 110;
  const plotW = width - plotX0 - 20;

  platforms.forEach((platform, row) => {
    const y = row * rowHeight + 18;
    const label = doc.createElementNS(SVG_NS, "text");
    label.setAttribute("x", "4");
    label.setAttribute("y", String(y + 4));
    label.setAttribute("class", "chart-label");
    label.textContent = platform;
    svg.appendChild(label);
    for (const sample of samples.filter((s) => s.platform === platform)) {
      const dot = doc.createElementNS(SVG_NS, "circle");
      dot.setAttribute("cx", (plotX0 + (sample.duration_hours / maxDur) * plotW).toFixed(1));
      dot.setAttribute("cy", String(y));
      dot.setAttribute("r", "4");
      dot.setAttribute("class", "duration-dot");
      dot.setAttribute("data-platform", platform);
      dot.setAttribute("data-hours", String(sample.duration_hours));
      const title = doc.createElementNS(SVG_NS, "title");
      title.textContent = `${sample.step_key}: ${sample.duration_hours.toFixed(2)}h`;
      dot.appendChild(title);
      svg.appendChild(dot);
    }
  });
  return svg;
}

export function chartGrandTotalCents(groups: CostGroup[]): number {
  return buildStacks(groups).reduce((acc, s) => acc + s.totalCents, 0);
}

export { centsToUsd };
