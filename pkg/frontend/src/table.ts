/** Task-table view model: execution statistics or invocation parameters. */

import type { TaskRow } from "./types.js";
import type { TableMode } from "./state.js";

export const STAT_COLUMNS = [
  "status", "attempt", "launched_at", "duration_s", "exit_code",
  "peak_rss_bytes", "mean_cpu_pct",
] as const;

export interface TableCellRow {
  taskId: string;
  status: string;
  selected: boolean;
  cells: string[];
}

export interface TableModel {
  columns: string[];
  rows: TableCellRow[];
}

export function formatBytes(bytes: number | null): string {
  if (bytes === null) return "";
  if (bytes >= 1024 ** 3) return `${(bytes / 1024 ** 3).toFixed(2)} GiB`;
  if (bytes >= 1024 ** 2) return `${(bytes / 1024 ** 2).toFixed(1)} MiB`;
  if (bytes >= 1024) return `${(bytes / 1024).toFixed(1)} KiB`;
  return `${bytes} B`;
}

export function formatSeconds(seconds: number | null): string {
  if (seconds === null) return "";
  return `${seconds.toFixed(1)} s`;
}

function formatTimestamp(iso: string | null): string {
  if (!iso) return "";
  return iso.replace("T", " ").replace(/(\.\d{3})\d*/, "$1")
    .replace("+00:00", "Z");
}

/** Sorted union of parameter names across all rows. */
export function parameterColumns(rows: TaskRow[]): string[] {
  const names = new Set<string>();
  for (const row of rows) {
    for (const key of Object.keys(row.params)) names.add(key);
  }
  return [...names].sort();
}

function statCells(row: TaskRow): string[] {
  return [
    row.status,
    row.attempt === null ? "" : String(row.attempt),
    formatTimestamp(row.launched_at),
    formatSeconds(row.duration_s),
    row.exit_code === null ? "" : String(row.exit_code),
    formatBytes(row.peak_rss_bytes),
    row.mean_cpu_pct === null ? "" : `${row.mean_cpu_pct.toFixed(1)} %`,
  ];
}

export function buildTable(rows: TaskRow[], mode: TableMode,
                           selected: Set<string>): TableModel {
  if (mode === "stats") {
    return {
      columns: ["task", ...STAT_COLUMNS],
      rows: rows.map((row) => ({
        taskId: row.task_id,
        status: row.status,
        selected: selected.has(row.task_id),
        cells: [row.task_id, ...statCells(row)],
      })),
    };
  }
  const params = parameterColumns(rows);
  return {
    columns: ["task", ...params],
    rows: rows.map((row) => ({
      taskId: row.task_id,
      status: row.status,
      selected: selected.has(row.task_id),
      cells: [row.task_id,
              ...params.map((p) => row.params[p] === undefined
                ? "" : String(row.params[p]))],
    })),
  };
}
