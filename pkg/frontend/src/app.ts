/** Dashboard wiring: linked task table, Gantt timeline, and usage plot.
 *
 * All three views always render from the same filtered snapshot; selection
 * is a pure view concern (checkboxes and bar clicks only restyle and pick
 * usage traces, they never mutate fetched data or issue writes). In live
 * mode the page re-polls the portal; in static mode it reads the exported
 * bundle and never touches the API.
 */

import { makeSource, type DataSource } from "./datasource.js";
import { FilterError } from "./filters.js";
import { buildGantt } from "./gantt.js";
import { Generation, startPolling, type Poller } from "./poll.js";
import {
  decodeFragment,
  encodeFragment,
  pruneSelection,
  type ViewState,
} from "./state.js";
import { buildTable, parameterColumns } from "./table.js";
import { buildUsage, DEFAULT_TRACE_CAP } from "./usage.js";
import { FILTER_OPS, type ExperimentSummary, type FilterOp, type Predicate, type TaskRow, type UsageSeries } from "./types.js";

const SVG_NS = "http://www.w3.org/2000/svg";

const STATUS_COLORS: Record<string, string> = {
  succeeded: "#2e7d32",
  failed: "#c62828",
  running: "#1565c0",
  incomplete: "#9e9e9e",
};

export interface AppOptions {
  now?: () => string;
  traceCap?: number;
  onFragment?: (fragment: string) => void;
}

export class App {
  private summary: ExperimentSummary | null = null;
  private rows: TaskRow[] = [];
  private usageById = new Map<string, UsageSeries>();
  private generation = new Generation();
  private readonly now: () => string;
  private readonly traceCap: number;
  private readonly onFragment: (fragment: string) => void;
  usageCapped = false;

  constructor(
    private readonly doc: Document,
    private readonly source: DataSource,
    readonly state: ViewState,
    options: AppOptions = {},
  ) {
    this.now = options.now ?? (() => new Date().toISOString());
    this.traceCap = options.traceCap ?? DEFAULT_TRACE_CAP;
    this.onFragment = options.onFragment ?? (() => undefined);
    this.wireControls();
  }

  private el<T extends HTMLElement>(id: string): T {
    const found = this.doc.getElementById(id);
    if (!found) throw new Error(`missing #${id} container`);
    return found as T;
  }

  private wireControls(): void {
    this.el("table-mode-toggle").addEventListener("click", () => {
      this.state.tableMode = this.state.tableMode === "stats"
        ? "parameters" : "stats";
      this.syncFragment();
      this.renderAll();
    });
    this.el("filter-add").addEventListener("click", () => {
      const field = (this.el<HTMLSelectElement>("filter-field")).value;
      const op = (this.el<HTMLSelectElement>("filter-op")).value as FilterOp;
      const value = (this.el<HTMLInputElement>("filter-value")).value;
      if (field) void this.addFilter({ field, op, value });
    });
    const opSelect = this.el<HTMLSelectElement>("filter-op");
    if (opSelect.options.length === 0) {
      for (const op of FILTER_OPS) {
        const option = this.doc.createElement("option");
        option.value = op;
        option.textContent = op;
        opSelect.appendChild(option);
      }
    }
    this.el("banner-retry").addEventListener("click", () => {
      void this.refresh();
    });
    this.el("download-usage").addEventListener("click", () => this.downloadUsageSvg());
  }

  private syncFragment(): void {
    this.onFragment(encodeFragment(this.state));
  }

  async addFilter(predicate: Predicate): Promise<void> {
    this.state.filters.push(predicate);
    this.syncFragment();
    try {
      await this.refresh();
      this.el("filter-error").textContent = "";
    } catch (e) {
      // a rejected filter is withdrawn and surfaced inline
      this.state.filters.pop();
      this.syncFragment();
      this.el("filter-error").textContent = e instanceof FilterError
        ? `rejected: ${e.message}` : String(e);
      await this.refresh();
    }
  }

  async removeFilter(index: number): Promise<void> {
    this.state.filters.splice(index, 1);
    this.syncFragment();
    await this.refresh();
  }

  toggleSelect(taskId: string): void {
    if (this.state.selected.has(taskId)) {
      this.state.selected.delete(taskId);
    } else {
      this.state.selected.add(taskId);
    }
    this.syncFragment();
    void this.refreshUsage().then(() => this.renderAll());
  }

  /** Fetch experiment, filtered rows, and usage; then render. */
  async refresh(): Promise<void> {
    const generation = this.generation.next();
    try {
      const [envelope, rows] = await Promise.all([
        this.source.fetchExperiment(),
        this.source.fetchTasks(this.state.filters),
      ]);
      if (!this.generation.isCurrent(generation)) return;  // newest wins
      this.summary = envelope.data;
      this.rows = rows;
      pruneSelection(this.state, rows);
      await this.refreshUsage();
      if (!this.generation.isCurrent(generation)) return;
      this.setBanner(null);
      this.renderAll();
    } catch (e) {
      if (e instanceof FilterError) throw e;
      this.setBanner(`portal unreachable: ${String(e)}`);
      this.renderAll();  // degraded render of the previous snapshot
    }
  }

  private usageCandidates(): string[] {
    if (this.state.selected.size > 0) return [...this.state.selected].sort();
    return this.rows.map((r) => r.task_id).slice(0, this.traceCap);
  }

  private async refreshUsage(): Promise<void> {
    this.usageCapped = this.state.selected.size === 0
      && this.rows.length > this.traceCap;
    const wanted = this.usageCandidates();
    const fresh = new Map<string, UsageSeries>();
    await Promise.all(wanted.map(async (id) => {
      try {
        fresh.set(id, await this.source.fetchUsage(id));
      } catch {
        // tasks without a record yet simply have no trace
      }
    }));
    this.usageById = fresh;
  }

  private setBanner(message: string | null): void {
    const banner = this.el("status-banner");
    banner.hidden = message === null;
    this.el("banner-text").textContent = message ?? "";
  }

  renderAll(): void {
    this.renderHeader();
    this.renderFilters();
    this.renderTable();
    this.renderGantt();
    this.renderUsage();
  }

  private renderHeader(): void {
    if (!this.summary) return;
    this.el("experiment-id").textContent = this.summary.experiment_id;
    const counts = this.summary.counts;
    this.el("counts").textContent =
      `running ${counts.running} · succeeded ${counts.succeeded} · ` +
      `failed ${counts.failed} · incomplete ${counts.incomplete}`;
    const stale = this.doc.getElementById("stale-note");
    if (stale) stale.hidden = true;
  }

  private renderFilters(): void {
    const fieldSelect = this.el<HTMLSelectElement>("filter-field");
    const fields = ["task_id", "status", "duration_s", "exit_code",
                    "peak_rss_bytes", "mean_cpu_pct", "attempt",
                    ...parameterColumns(this.rows)];
    const current = fieldSelect.value;
    fieldSelect.textContent = "";
    for (const field of fields) {
      const option = this.doc.createElement("option");
      option.value = field;
      option.textContent = field;
      fieldSelect.appendChild(option);
    }
    if (fields.includes(current)) fieldSelect.value = current;

    const active = this.el("active-filters");
    active.textContent = "";
    this.state.filters.forEach((f, i) => {
      const item = this.doc.createElement("li");
      item.textContent = `${f.field} ${f.op} ${f.value} `;
      const remove = this.doc.createElement("button");
      remove.textContent = "×";
      remove.className = "remove-filter";
      remove.addEventListener("click", () => void this.removeFilter(i));
      item.appendChild(remove);
      active.appendChild(item);
    });
  }

  private renderTable(): void {
    const model = buildTable(this.rows, this.state.tableMode, this.state.selected);
    const table = this.el("task-table");
    table.textContent = "";

    const thead = this.doc.createElement("thead");
    const headRow = this.doc.createElement("tr");
    headRow.appendChild(this.doc.createElement("th"));  // checkbox column
    for (const column of model.columns) {
      const th = this.doc.createElement("th");
      th.textContent = column;
      headRow.appendChild(th);
    }
    thead.appendChild(headRow);
    table.appendChild(thead);

    const tbody = this.doc.createElement("tbody");
    for (const row of model.rows) {
      const tr = this.doc.createElement("tr");
      tr.dataset.taskId = row.taskId;
      tr.className = `status-${row.status}${row.selected ? " selected" : ""}`;
      const checkboxCell = this.doc.createElement("td");
      const checkbox = this.doc.createElement("input");
      checkbox.type = "checkbox";
      checkbox.checked = row.selected;
      checkbox.addEventListener("change", () => this.toggleSelect(row.taskId));
      checkboxCell.appendChild(checkbox);
      tr.appendChild(checkboxCell);
      for (const cell of row.cells) {
        const td = this.doc.createElement("td");
        td.textContent = cell;
        tr.appendChild(td);
      }
      tbody.appendChild(tr);
    }
    table.appendChild(tbody);
    this.el("table-mode-toggle").textContent =
      this.state.tableMode === "stats" ? "show parameters" : "show statistics";
  }

  private renderGantt(): void {
    const model = buildGantt(this.rows, this.state.selected, this.now());
    const svg = this.el("gantt");
    svg.textContent = "";
    const laneHeight = 18;
    const height = Math.max(model.bars.length * laneHeight + 8, 40);
    svg.setAttribute("viewBox", `0 0 1000 ${height}`);
    svg.setAttribute("preserveAspectRatio", "none");
    for (const bar of model.bars) {
      const rect = this.doc.createElementNS(SVG_NS, "rect");
      rect.setAttribute("x", String(bar.x0 * 1000));
      rect.setAttribute("width", String(Math.max((bar.x1 - bar.x0) * 1000, 2)));
      rect.setAttribute("y", String(bar.lane * laneHeight + 4));
      rect.setAttribute("height", String(laneHeight - 6));
      rect.setAttribute("fill", STATUS_COLORS[bar.status] ?? "#9e9e9e");
      rect.setAttribute("class",
        `gantt-bar${bar.selected ? " selected" : ""}${bar.openEnded ? " open" : ""}`);
      rect.setAttribute("data-task-id", bar.taskId);
      if (bar.openEnded) rect.setAttribute("fill-opacity", "0.6");
      rect.addEventListener("click", () => this.toggleSelect(bar.taskId));
      const title = this.doc.createElementNS(SVG_NS, "title");
      title.textContent = `${bar.taskId} (${bar.status})`;
      rect.appendChild(title);
      svg.appendChild(rect);
    }
  }

  private renderUsage(): void {
    const selectedIds = this.state.selected.size > 0
      ? [...this.state.selected].sort() : [];
    const model = buildUsage(selectedIds, this.usageById, this.traceCap);
    this.el("usage-notice").textContent = this.usageCapped
      ? `showing the first ${this.traceCap} tasks; select tasks to narrow`
      : "";
    const svg = this.el("usage");
    svg.textContent = "";
    svg.setAttribute("viewBox", "0 0 1000 300");
    svg.setAttribute("preserveAspectRatio", "none");
    for (const trace of model.traces) {
      if (trace.points.length === 0) continue;
      const polyline = this.doc.createElementNS(SVG_NS, "polyline");
      const points = trace.points
        .map(([x, y]) => `${(x * 990 + 5).toFixed(1)},${(295 - y * 290).toFixed(1)}`)
        .join(" ");
      polyline.setAttribute("points", points);
      polyline.setAttribute("fill", "none");
      polyline.setAttribute("class", `trace trace-${trace.kind}`);
      polyline.setAttribute("data-task-id", trace.taskId);
      polyline.setAttribute("stroke", trace.kind === "rss" ? "#6a1b9a" : "#ef6c00");
      polyline.setAttribute("stroke-dasharray", trace.kind === "cpu" ? "4 3" : "");
      svg.appendChild(polyline);
    }
    const legend = this.doc.getElementById("usage-legend");
    if (legend) {
      legend.textContent = model.shownIds.length
        ? `solid: RSS (max ${Math.round(model.rssMax / 1024 / 1024)} MiB) · ` +
          `dashed: CPU (max ${Math.round(model.cpuMax)} %) · ` +
          `tasks: ${model.shownIds.join(", ")}`
        : "no usage samples to plot";
    }
  }

  private downloadUsageSvg(): void {
    const svg = this.el("usage");
    const blobUrl = "data:image/svg+xml;charset=utf-8,"
      + encodeURIComponent(`<svg xmlns="${SVG_NS}" viewBox="0 0 1000 300">`
        + svg.innerHTML + "</svg>");
    const link = this.doc.createElement("a");
    link.href = blobUrl;
    link.download = "usage.svg";
    link.click();
  }
}

/** Browser entry point: config decides the data source, the URL fragment
 * restores the view, and live mode starts polling. */
export function bootstrap(win: Window): { app: App; poller: Poller | null } {
  const configured = win.MUSTER_DATA_SOURCE;
  const requestLog: string[] = [];
  const source = makeSource(
    (url) => win.fetch(url) as Promise<never>, configured, requestLog);
  const state = decodeFragment(win.location.hash, source.kind);
  const app = new App(win.document, source, state, {
    onFragment: (fragment) => {
      win.history.replaceState(null, "", fragment || "#");
    },
  });
  void app.refresh();
  let poller: Poller | null = null;
  if (source.kind === "live") {
    poller = startPolling(() => app.refresh(), state.pollIntervalS * 1000);
  }
  return { app, poller };
}
