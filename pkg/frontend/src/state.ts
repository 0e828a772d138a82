/** View state and its URL-fragment encoding, so any view is shareable. */

import type { Predicate, FilterOp, TaskRow } from "./types.js";
import { FILTER_OPS } from "./types.js";

export type TableMode = "stats" | "parameters";
export type SourceKind = "live" | "static";

export interface ViewState {
  tableMode: TableMode;
  filters: Predicate[];
  selected: Set<string>;
  pollIntervalS: number;
  dataSource: SourceKind;
}

export const DEFAULT_POLL_INTERVAL_S = 5;

export function initialState(dataSource: SourceKind): ViewState {
  return {
    tableMode: "stats",
    filters: [],
    selected: new Set(),
    pollIntervalS: DEFAULT_POLL_INTERVAL_S,
    dataSource,
  };
}

export function encodeFragment(state: ViewState): string {
  const parts: string[] = [];
  if (state.tableMode !== "stats") parts.push(`mode=${state.tableMode}`);
  for (const f of state.filters) {
    parts.push(`f=${encodeURIComponent(`${f.field}:${f.op}:${f.value}`)}`);
  }
  if (state.selected.size > 0) {
    parts.push(`sel=${[...state.selected].sort().join(",")}`);
  }
  return parts.length ? `#${parts.join("&")}` : "";
}

export function decodeFragment(hash: string, dataSource: SourceKind): ViewState {
  const state = initialState(dataSource);
  const trimmed = hash.replace(/^#/, "");
  if (!trimmed) return state;
  for (const part of trimmed.split("&")) {
    const eq = part.indexOf("=");
    if (eq < 0) continue;
    const key = part.slice(0, eq);
    const value = decodeURIComponent(part.slice(eq + 1));
    if (key === "mode" && (value === "stats" || value === "parameters")) {
      state.tableMode = value;
    } else if (key === "f") {
      const [field, op, ...rest] = value.split(":");
      if (field && op && FILTER_OPS.includes(op as FilterOp)) {
        state.filters.push({ field, op: op as FilterOp, value: rest.join(":") });
      }
    } else if (key === "sel") {
      for (const id of value.split(",")) {
        if (id) state.selected.add(id);
      }
    }
  }
  return state;
}

/** Drop selected ids that no longer exist in the data. */
export function pruneSelection(state: ViewState, rows: TaskRow[]): void {
  const present = new Set(rows.map((r) => r.task_id));
  for (const id of [...state.selected]) {
    if (!present.has(id)) state.selected.delete(id);
  }
}
