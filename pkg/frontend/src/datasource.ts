/** Data access for both modes.
 *
 * Live mode passes filters to the portal (the server owns the semantics
 * and reports bad fields with HTTP 400); static mode loads the exported
 * bundle files once and filters locally with identical semantics. Every
 * request URL is appended to the injected request log, which is how tests
 * prove static mode never touches the API.
 */

import { applyPredicates, FilterError } from "./filters.js";
import type {
  Envelope,
  ExperimentSummary,
  Predicate,
  TaskRow,
  UsageSeries,
} from "./types.js";

export interface FetchResponse {
  ok: boolean;
  status: number;
  json(): Promise<unknown>;
}

export type FetchLike = (url: string) => Promise<FetchResponse>;

export interface DataSource {
  readonly kind: "live" | "static";
  fetchExperiment(): Promise<Envelope<ExperimentSummary>>;
  fetchTasks(filters: Predicate[]): Promise<TaskRow[]>;
  fetchUsage(taskId: string): Promise<UsageSeries>;
}

async function getJson(fetchFn: FetchLike, log: string[], url: string): Promise<unknown> {
  log.push(url);
  const resp = await fetchFn(url);
  if (!resp.ok) {
    const body = (await resp.json().catch(() => ({}))) as { error?: string };
    if (resp.status === 400 && body.error) {
      const field = /'([^']+)'/.exec(body.error)?.[1] ?? "";
      throw new FilterError(body.error, field);
    }
    throw new Error(`GET ${url} -> ${resp.status}${body.error ? `: ${body.error}` : ""}`);
  }
  return resp.json();
}

export class LiveSource implements DataSource {
  readonly kind = "live" as const;

  constructor(
    private readonly base: string,
    private readonly fetchFn: FetchLike,
    readonly requestLog: string[] = [],
  ) {}

  async fetchExperiment(): Promise<Envelope<ExperimentSummary>> {
    return (await getJson(this.fetchFn, this.requestLog,
      `${this.base}/api/experiment`)) as Envelope<ExperimentSummary>;
  }

  async fetchTasks(filters: Predicate[]): Promise<TaskRow[]> {
    const query = filters
      .map((f) => f.op === "eq"
        ? `${encodeURIComponent(f.field)}=${encodeURIComponent(f.value)}`
        : `${encodeURIComponent(f.field)}__${f.op}=${encodeURIComponent(f.value)}`)
      .join("&");
    const url = `${this.base}/api/tasks${query ? `?${query}` : ""}`;
    const doc = (await getJson(this.fetchFn, this.requestLog, url)) as
      Envelope<TaskRow[]>;
    return doc.data;
  }

  async fetchUsage(taskId: string): Promise<UsageSeries> {
    const doc = (await getJson(this.fetchFn, this.requestLog,
      `${this.base}/api/tasks/${taskId}/usage`)) as Envelope<UsageSeries>;
    return doc.data;
  }
}

export class StaticSource implements DataSource {
  readonly kind = "static" as const;
  private experiment: Envelope<ExperimentSummary> | null = null;
  private tasks: TaskRow[] | null = null;
  private usage = new Map<string, UsageSeries>();

  constructor(
    private readonly base: string,
    private readonly fetchFn: FetchLike,
    readonly requestLog: string[] = [],
  ) {}

  async fetchExperiment(): Promise<Envelope<ExperimentSummary>> {
    if (this.experiment === null) {
      this.experiment = (await getJson(this.fetchFn, this.requestLog,
        `${this.base}/data/experiment.json`)) as Envelope<ExperimentSummary>;
    }
    return this.experiment;
  }

  async fetchTasks(filters: Predicate[]): Promise<TaskRow[]> {
    if (this.tasks === null) {
      const doc = (await getJson(this.fetchFn, this.requestLog,
        `${this.base}/data/tasks.json`)) as Envelope<TaskRow[]>;
      this.tasks = doc.data;
    }
    return applyPredicates(this.tasks, filters);
  }

  async fetchUsage(taskId: string): Promise<UsageSeries> {
    const cached = this.usage.get(taskId);
    if (cached) return cached;
    const doc = (await getJson(this.fetchFn, this.requestLog,
      `${this.base}/data/usage/${taskId}.json`)) as Envelope<UsageSeries>;
    this.usage.set(taskId, doc.data);
    return doc.data;
  }
}

declare global {
  interface Window {
    MUSTER_DATA_SOURCE?: string;
  }
}

export function makeSource(fetchFn: FetchLike, configured: string | undefined,
                           requestLog: string[] = []): DataSource {
  if (configured === "static") {
    return new StaticSource(".", fetchFn, requestLog);
  }
  return new LiveSource("", fetchFn, requestLog);
}
