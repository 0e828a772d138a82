/** Client-side row filtering with the same semantics as the portal API.
 *
 * Static bundles have no server to filter for them, and the timeline must
 * stay in sync with the table either way, so the predicate logic lives
 * here too: conjunction of predicates, missing values never match,
 * numeric comparison when both sides parse as numbers.
 */

import type { Predicate, TaskRow } from "./types.js";
import { FILTER_OPS } from "./types.js";

const ROW_FIELDS = [
  "task_id", "status", "launched_at", "finished_at", "duration_s",
  "exit_code", "peak_rss_bytes", "mean_cpu_pct", "attempt",
] as const;

export class FilterError extends Error {
  constructor(message: string, readonly field: string) {
    super(message);
  }
}

export function fieldValue(row: TaskRow, field: string): unknown {
  if ((ROW_FIELDS as readonly string[]).includes(field)) {
    return (row as unknown as Record<string, unknown>)[field];
  }
  return row.params[field];
}

export function knownFields(rows: TaskRow[]): string[] {
  const params = new Set<string>();
  for (const row of rows) {
    for (const key of Object.keys(row.params)) params.add(key);
  }
  return [...ROW_FIELDS, ...[...params].sort()];
}

function asNumber(value: unknown): number | null {
  if (typeof value === "boolean") return null;
  if (typeof value === "number") return Number.isFinite(value) ? value : null;
  if (typeof value === "string" && value.trim() !== "") {
    const parsed = Number(value);
    return Number.isFinite(parsed) ? parsed : null;
  }
  return null;
}

function looseEq(rowValue: unknown, wanted: string): boolean {
  if (typeof rowValue === "boolean") {
    return String(rowValue) === wanted.toLowerCase();
  }
  const a = asNumber(rowValue);
  const b = asNumber(wanted);
  if (a !== null && b !== null) return a === b;
  return String(rowValue) === wanted;
}

export function matches(row: TaskRow, predicate: Predicate): boolean {
  const value = fieldValue(row, predicate.field);
  if (value === null || value === undefined) return false;
  switch (predicate.op) {
    case "eq":
      return looseEq(value, predicate.value);
    case "ne":
      return !looseEq(value, predicate.value);
    case "contains":
      return String(value).includes(predicate.value);
    case "lt":
    case "gt": {
      const a = asNumber(value);
      const b = asNumber(predicate.value);
      if (a !== null && b !== null) {
        return predicate.op === "lt" ? a < b : a > b;
      }
      const left = String(value);
      return predicate.op === "lt" ? left < predicate.value
        : left > predicate.value;
    }
  }
}

export function applyPredicates(rows: TaskRow[], predicates: Predicate[]): TaskRow[] {
  for (const p of predicates) {
    if (!FILTER_OPS.includes(p.op)) {
      throw new FilterError(`bad operator ${p.op}`, p.field);
    }
    if (!knownFields(rows).includes(p.field)) {
      throw new FilterError(`unknown field ${p.field}`, p.field);
    }
  }
  return rows.filter((row) => predicates.every((p) => matches(row, p)));
}
