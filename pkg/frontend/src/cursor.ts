import type { EventsPage, LogEntry } from "./types.js";

/**
 * Resumable view over a run's append-only event log.
 *
 * The server hands out entries with dense cursors; reconnecting with the
 * last seen cursor must replay nothing and miss nothing. This class
 * enforces that client-side: batches may overlap or arrive twice, but every
 * entry is delivered downstream exactly once and in order.
 */
export class EventCursor {
  private cursor = -1;

  get afterSeq(): number {
    return this.cursor;
  }

  ingest(page: EventsPage): LogEntry[] {
    const fresh: LogEntry[] = [];
    for (const entry of page.events) {
      if (entry.cursor <= this.cursor) {
        continue; // replayed duplicate
      }
      if (entry.cursor !== this.cursor + 1) {
        throw new Error(
          `event log gap: expected cursor ${this.cursor + 1}, got ${entry.cursor}`,
        );
      }
      fresh.push(entry);
      this.cursor = entry.cursor;
    }
    return fresh;
  }
}
