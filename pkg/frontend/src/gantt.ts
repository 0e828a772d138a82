/** Gantt timeline geometry: one bar per launched task, open-ended while
 * running, normalized x coordinates in [0, 1]. Pure functions so the
 * layout is testable without a DOM.
 */

import type { TaskRow } from "./types.js";

export interface GanttBar {
  taskId: string;
  status: string;
  lane: number;
  x0: number;
  x1: number;
  openEnded: boolean;
  selected: boolean;
}

export interface GanttModel {
  bars: GanttBar[];
  t0Iso: string | null;
  t1Iso: string | null;
  spanSeconds: number;
}

export function buildGantt(rows: TaskRow[], selected: Set<string>,
                           nowIso: string): GanttModel {
  const launched = rows.filter((r) => r.launched_at !== null);
  if (launched.length === 0) {
    return { bars: [], t0Iso: null, t1Iso: null, spanSeconds: 0 };
  }
  const starts = launched.map((r) => Date.parse(r.launched_at as string));
  const now = Date.parse(nowIso);
  const ends = launched.map((r, i) => r.finished_at !== null
    ? Date.parse(r.finished_at)
    : Math.max(now, starts[i] as number));
  const t0 = Math.min(...starts);
  const t1 = Math.max(...ends, t0 + 1);
  const span = t1 - t0;

  const order = launched
    .map((row, i) => ({ row, start: starts[i] as number, end: ends[i] as number }))
    .sort((a, b) => a.start - b.start || a.row.task_id.localeCompare(b.row.task_id));

  const bars = order.map((entry, lane) => ({
    taskId: entry.row.task_id,
    status: entry.row.status,
    lane,
    x0: (entry.start - t0) / span,
    x1: Math.max((entry.end - t0) / span, (entry.start - t0) / span + 0.002),
    openEnded: entry.row.finished_at === null,
    selected: selected.has(entry.row.task_id),
  }));
  return {
    bars,
    t0Iso: new Date(t0).toISOString(),
    t1Iso: new Date(t1).toISOString(),
    spanSeconds: span / 1000,
  };
}
