/** Usage-plot view model: per-task RSS and CPU traces for the selection.
 *
 * An empty selection falls back to the first `cap` tasks that have data,
 * flagged so the page can show a notice instead of an unreadable overlay.
 */

import type { UsageSeries } from "./types.js";

export const DEFAULT_TRACE_CAP = 20;

export interface Trace {
  taskId: string;
  kind: "rss" | "cpu";
  /** normalized [x, y] points in [0, 1]^2, y growing upward */
  points: [number, number][];
}

export interface UsageModel {
  traces: Trace[];
  shownIds: string[];
  capped: boolean;
  tMax: number;
  rssMax: number;
  cpuMax: number;
}

export function buildUsage(selectedIds: string[],
                           seriesById: Map<string, UsageSeries>,
                           cap: number = DEFAULT_TRACE_CAP): UsageModel {
  const withData = (id: string) =>
    (seriesById.get(id)?.samples.length ?? 0) > 0;

  let shown: string[];
  let capped = false;
  if (selectedIds.length > 0) {
    shown = selectedIds.filter(withData);
  } else {
    const all = [...seriesById.keys()].filter(withData).sort();
    capped = all.length > cap;
    shown = all.slice(0, cap);
  }

  let tMax = 0;
  let rssMax = 0;
  let cpuMax = 0;
  for (const id of shown) {
    for (const [t, cpu, rss] of seriesById.get(id)?.samples ?? []) {
      tMax = Math.max(tMax, t);
      cpuMax = Math.max(cpuMax, cpu);
      rssMax = Math.max(rssMax, rss);
    }
  }
  tMax = tMax || 1;
  rssMax = rssMax || 1;
  cpuMax = cpuMax || 1;

  const traces: Trace[] = [];
  for (const id of shown) {
    const samples = seriesById.get(id)?.samples ?? [];
    traces.push({
      taskId: id,
      kind: "rss",
      points: samples.map(([t, , rss]) => [t / tMax, rss / rssMax]),
    });
    traces.push({
      taskId: id,
      kind: "cpu",
      points: samples.map(([t, cpu]) => [t / tMax, cpu / cpuMax]),
    });
  }
  return { traces, shownIds: shown, capped, tMax, rssMax, cpuMax };
}
