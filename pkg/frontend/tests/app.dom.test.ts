// @vitest-environment happy-dom
/** Mounts the dashboard against the real index.html markup. */

import { readFileSync } from "node:fs";
import { dirname, join } from "node:path";
import { fileURLToPath } from "node:url";

import { beforeEach, describe, expect, it } from "vitest";

import { App } from "../src/app.js";
import { StaticSource, type DataSource } from "../src/datasource.js";
import { applyPredicates, FilterError } from "../src/filters.js";
import { initialState } from "../src/state.js";
import type { Envelope, ExperimentSummary, Predicate, TaskRow, UsageSeries } from "../src/types.js";
import {
  envelope,
  fakeFetch,
  sixTaskRows,
  staticBundle,
  summaryFor,
  usageFor,
} from "./fixtures.js";

const here = dirname(fileURLToPath(import.meta.url));
const INDEX_HTML = readFileSync(join(here, "..", "static", "index.html"), "utf-8");

function mountMarkup(): void {
  const body = /<body>([\s\S]*)<\/body>/.exec(INDEX_HTML)?.[1] ?? "";
  document.body.innerHTML = body;
}

/** In-memory stand-in for the live portal: same filter semantics, same
 * FilterError surface on bad fields, plus a request log. */
class FakeLiveSource implements DataSource {
  readonly kind = "live" as const;
  requestLog: string[] = [];
  failNext = false;

  constructor(private rows: TaskRow[]) {}

  setRows(rows: TaskRow[]): void {
    this.rows = rows;
  }

  async fetchExperiment(): Promise<Envelope<ExperimentSummary>> {
    this.requestLog.push("/api/experiment");
    if (this.failNext) throw new Error("connection refused");
    return envelope(summaryFor(this.rows));
  }

  async fetchTasks(filters: Predicate[]): Promise<TaskRow[]> {
    this.requestLog.push("/api/tasks");
    if (this.failNext) throw new Error("connection refused");
    return applyPredicates(this.rows, filters);
  }

  async fetchUsage(taskId: string): Promise<UsageSeries> {
    this.requestLog.push(`/api/tasks/${taskId}/usage`);
    if (this.failNext) throw new Error("connection refused");
    return usageFor(taskId);
  }
}

function tableRows(): HTMLTableRowElement[] {
  return [...document.querySelectorAll<HTMLTableRowElement>("#task-table tbody tr")];
}

function ganttBars(): Element[] {
  return [...document.querySelectorAll("#gantt rect")];
}

function usageTraces(): Element[] {
  return [...document.querySelectorAll("#usage polyline")];
}

describe("dashboard (live source)", () => {
  let source: FakeLiveSource;
  let app: App;

  beforeEach(async () => {
    mountMarkup();
    source = new FakeLiveSource(sixTaskRows());
    app = new App(document, source, initialState("live"),
                  { now: () => "2018-08-08T14:02:00.000Z" });
    await app.refresh();
  });

  it("renders six table rows and six timeline bars", () => {
    expect(tableRows()).toHaveLength(6);
    expect(ganttBars()).toHaveLength(6);
    expect(document.getElementById("experiment-id")?.textContent).toBe("exp-test");
    expect(document.getElementById("counts")?.textContent).toContain("failed 1");
  });

  it("toggling table mode shows invocation parameter columns", () => {
    const headers = () =>
      [...document.querySelectorAll("#task-table th")].map((th) => th.textContent);
    expect(headers()).toContain("duration_s");
    (document.getElementById("table-mode-toggle") as HTMLButtonElement).click();
    expect(headers()).toContain("participant_label");
    expect(headers()).toContain("analysis_level");
    expect(headers()).not.toContain("duration_s");
    expect(tableRows()[0]?.textContent).toContain("100206");
  });

  it("filtering to failed narrows table and timeline identically", async () => {
    await app.addFilter({ field: "status", op: "eq", value: "failed" });
    expect(tableRows()).toHaveLength(1);
    expect(tableRows()[0]?.dataset.taskId).toBe("task-00001");
    expect(ganttBars()).toHaveLength(1);
    expect(ganttBars()[0]?.getAttribute("data-task-id")).toBe("task-00001");
  });

  it("removing one of two filters equals applying the remaining one", async () => {
    await app.addFilter({ field: "status", op: "eq", value: "succeeded" });
    await app.addFilter({ field: "participant_label", op: "contains", value: "10020" });
    // succeeded tasks are 100206/100208/100209/100211; only three contain 10020
    expect(tableRows()).toHaveLength(3);
    await app.removeFilter(1);
    expect(tableRows()).toHaveLength(4);  // succeeded alone
  });

  it("selecting two tasks overlays exactly two usage trace pairs", async () => {
    app.toggleSelect("task-00000");
    app.toggleSelect("task-00002");
    await app.refresh();
    const traces = usageTraces();
    expect(traces).toHaveLength(4);  // rss+cpu per task
    const ids = new Set(traces.map((t) => t.getAttribute("data-task-id")));
    expect([...ids].sort()).toEqual(["task-00000", "task-00002"]);
    const selectedBars = ganttBars().filter(
      (bar) => bar.getAttribute("class")?.includes("selected"));
    expect(selectedBars).toHaveLength(2);
  });

  it("deselecting everything falls back to the capped all-tasks view", async () => {
    app.toggleSelect("task-00000");
    await app.refresh();
    app.toggleSelect("task-00000");
    await app.refresh();
    expect(usageTraces().length).toBe(12);  // all six tasks, two traces each
  });

  it("an unknown filter field is surfaced inline and withdrawn", async () => {
    await app.addFilter({ field: "bogus", op: "eq", value: "1" });
    expect(document.getElementById("filter-error")?.textContent)
      .toContain("bogus");
    expect(app.state.filters).toHaveLength(0);
    expect(tableRows()).toHaveLength(6);  // table recovered
  });

  it("an unreachable source shows a banner but keeps the last render", async () => {
    expect(tableRows()).toHaveLength(6);
    source.failNext = true;
    await app.refresh();
    const banner = document.getElementById("status-banner") as HTMLElement;
    expect(banner.hidden).toBe(false);
    expect(tableRows()).toHaveLength(6);  // degraded, never blank
    source.failNext = false;
    (document.getElementById("banner-retry") as HTMLButtonElement).click();
    await new Promise((resolve) => setTimeout(resolve, 0));
    expect(banner.hidden).toBe(true);
  });

  it("selection drops rows that disappear from the data", async () => {
    app.toggleSelect("task-00005");
    await app.refresh();
    source.setRows(sixTaskRows().slice(0, 5));
    await app.refresh();
    expect(app.state.selected.has("task-00005")).toBe(false);
  });

  it("checkbox clicks drive selection", async () => {
    const checkbox = tableRows()[3]?.querySelector("input") as HTMLInputElement;
    checkbox.click();
    await new Promise((resolve) => setTimeout(resolve, 0));
    expect(app.state.selected.has("task-00003")).toBe(true);
    expect(usageTraces()).toHaveLength(2);
  });
});

describe("dashboard (static bundle)", () => {
  it("renders the same table from the bundle with zero API requests", async () => {
    mountMarkup();
    const log: string[] = [];
    const source = new StaticSource(".", fakeFetch(staticBundle(sixTaskRows())), log);
    const app = new App(document, source, initialState("static"),
                        { now: () => "2018-08-08T14:02:00.000Z" });
    await app.refresh();
    expect(tableRows()).toHaveLength(6);

    await app.addFilter({ field: "status", op: "eq", value: "failed" });
    expect(tableRows()).toHaveLength(1);
    app.toggleSelect("task-00001");
    await app.refresh();

    expect(log.length).toBeGreaterThan(0);
    expect(log.every((url) => !url.includes("/api/"))).toBe(true);
  });
});
