// Display helpers. Money arrives as decimal strings from the API and is
// shown verbatim; the only arithmetic ever done on it is exact cent
// addition for chart stack heights.

export function usdToCents(usd: string): number {
  const m = /^(-?)(\d+)(?:\.(\d{1,2}))?$/.exec(usd.trim());
  if (!m) {
    throw new Error(`not a money string: ${usd}`);
  }
  const sign = m[1] === "-" ? -1 : 1;
  const dollars = parseInt(m[2]!, 10);
  const centsPart = (m[3] ?? "0").padEnd(2, "0");
  return sign * (dollars * 100 + parseInt(centsPart, 10));
}

export function centsToUsd(cents: number): string {
  const sign = cents < 0 ? "-" : "";
  const abs = Math.abs(cents);
  return `${sign}${Math.floor(abs / 100)}.${String(abs % 100).padStart(2, "0")}`;
}

export function money(usd: string): string {
  return `$${usd}`;
}

export function hours(h: number | null | undefined): string {
  if (h === null || h === undefined) {
    return "–";
  }
  return `${h.toFixed(2)}h`;
}

const BADGE_CLASSES: Record<string, string> = {
  RUNNING: "badge badge-running",
  SUCCESS: "badge badge-success",
  FAILURE: "badge badge-failure",
  CANCELED: "badge badge-canceled",
  LAUNCHING: "badge badge-running",
  QUEUED: "badge badge-queued",
};

export function badgeClass(state: string): string {
  return BADGE_CLASSES[state] ?? "badge";
}

export function backendMixLabel(mix: Record<string, number>): string {
  return Object.entries(mix)
    .sort(([a], [b]) => a.localeCompare(b))
    .map(([backend, count]) => `${backend}×${count}`)
    .join("  ");
}
