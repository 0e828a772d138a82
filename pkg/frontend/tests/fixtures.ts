/** Shared fixtures: a 6-task experiment payload mirroring the portal schema. */

import type {
  Envelope,
  ExperimentSummary,
  TaskRow,
  UsageSeries,
} from "../src/types.js";

export function makeRow(ordinal: number, overrides: Partial<TaskRow> = {}): TaskRow {
  const id = `task-${String(ordinal).padStart(5, "0")}`;
  const start = new Date(Date.UTC(2018, 7, 8, 14, 0, ordinal * 10));
  const end = new Date(start.getTime() + 8000);
  return {
    task_id: id,
    status: "succeeded",
    launched_at: start.toISOString(),
    finished_at: end.toISOString(),
    duration_s: 8.0,
    exit_code: 0,
    peak_rss_bytes: (ordinal + 1) * 100 * 1024 * 1024,
    mean_cpu_pct: 50 + ordinal,
    attempt: 1,
    params: {
      analysis_level: "participant",
      participant_label: String(100206 + ordinal),
    },
    note: null,
    ...overrides,
  };
}

export function sixTaskRows(): TaskRow[] {
  return [
    makeRow(0),
    makeRow(1, { status: "failed", exit_code: 1 }),
    makeRow(2),
    makeRow(3),
    makeRow(4, { status: "running", finished_at: null, duration_s: null,
                 exit_code: null }),
    makeRow(5),
  ];
}

export function summaryFor(rows: TaskRow[]): ExperimentSummary {
  const counts = { running: 0, succeeded: 0, failed: 0, incomplete: 0 };
  for (const row of rows) counts[row.status] += 1;
  return {
    experiment_id: "exp-test",
    descriptor_digest: "0".repeat(64),
    generated_at: "2018-08-08T14:03:07+00:00",
    counts,
    aggregate: null,
    task_rows: rows,
  };
}

export function usageFor(taskId: string, n = 5): UsageSeries {
  const samples: [number, number, number][] = [];
  for (let i = 1; i <= n; i++) {
    samples.push([i * 0.5, 40 + 10 * Math.sin(i), (50 + i) * 1024 * 1024]);
  }
  return { task_id: taskId, attempt: 1, samples };
}

export function envelope<T>(data: T): Envelope<T> {
  return { data, generated_at: "2018-08-08T14:03:08+00:00", stale: false };
}

export interface BundleFiles {
  [path: string]: unknown;
}

export function staticBundle(rows: TaskRow[]): BundleFiles {
  const files: BundleFiles = {
    "./data/experiment.json": { data: summaryFor(rows),
                                generated_at: "2018-08-08T14:03:08+00:00" },
    "./data/tasks.json": { data: rows,
                           generated_at: "2018-08-08T14:03:08+00:00" },
  };
  for (const row of rows) {
    files[`./data/usage/${row.task_id}.json`] = {
      data: usageFor(row.task_id),
      generated_at: "2018-08-08T14:03:08+00:00",
    };
  }
  return files;
}

/** fetch stub serving canned JSON bodies keyed by exact URL. */
export function fakeFetch(files: BundleFiles) {
  return async (url: string) => {
    if (url in files) {
      return {
        ok: true,
        status: 200,
        json: async () => files[url],
      };
    }
    return {
      ok: false,
      status: 404,
      json: async () => ({ error: `no ${url}` }),
    };
  };
}
