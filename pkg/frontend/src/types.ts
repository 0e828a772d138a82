/** Payload shapes served by the experiment portal (live API and static bundle). */

export type TaskStatus = "running" | "succeeded" | "failed" | "incomplete";

export interface TaskRow {
  task_id: string;
  status: TaskStatus;
  launched_at: string | null;
  finished_at: string | null;
  duration_s: number | null;
  exit_code: number | null;
  peak_rss_bytes: number | null;
  mean_cpu_pct: number | null;
  attempt: number | null;
  params: Record<string, unknown>;
  note: string | null;
}

export interface ExperimentSummary {
  experiment_id: string;
  descriptor_digest: string;
  generated_at: string;
  counts: Record<TaskStatus, number>;
  aggregate: {
    mean_duration_s: number | null;
    max_duration_s: number | null;
    mean_peak_rss_bytes: number | null;
    max_peak_rss_bytes: number | null;
  } | null;
  task_rows: TaskRow[];
}

export interface Envelope<T> {
  data: T;
  generated_at: string;
  stale?: boolean;
  diagnostics?: string;
}

/** Samples arrive as [seconds-since-launch, cpu percent, rss bytes] triples. */
export interface UsageSeries {
  task_id: string;
  attempt: number | null;
  samples: [number, number, number][];
}

export type FilterOp = "eq" | "ne" | "lt" | "gt" | "contains";

export interface Predicate {
  field: string;
  op: FilterOp;
  value: string;
}

export const FILTER_OPS: FilterOp[] = ["eq", "ne", "lt", "gt", "contains"];
