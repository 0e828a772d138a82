import { describe, expect, it } from "vitest";

import { applyPredicates, FilterError, knownFields } from "../src/filters.js";
import { sixTaskRows } from "./fixtures.js";

describe("applyPredicates", () => {
  const rows = sixTaskRows();

  it("filters by status", () => {
    const failed = applyPredicates(rows, [{ field: "status", op: "eq", value: "failed" }]);
    expect(failed.map((r) => r.task_id)).toEqual(["task-00001"]);
  });

  it("filters by invocation parameter", () => {
    const got = applyPredicates(rows,
      [{ field: "participant_label", op: "eq", value: "100206" }]);
    expect(got.map((r) => r.task_id)).toEqual(["task-00000"]);
  });

  it("compares numbers numerically for lt/gt", () => {
    const big = applyPredicates(rows,
      [{ field: "peak_rss_bytes", op: "gt", value: String(400 * 1024 * 1024) }]);
    expect(big.map((r) => r.task_id)).toEqual(["task-00004", "task-00005"]);
  });

  it("missing values never match, even for ne", () => {
    const got = applyPredicates(rows,
      [{ field: "exit_code", op: "ne", value: "0" }]);
    // task-00004 is running (exit_code null) and must not appear
    expect(got.map((r) => r.task_id)).toEqual(["task-00001"]);
  });

  it("contains does substring matching", () => {
    const got = applyPredicates(rows,
      [{ field: "participant_label", op: "contains", value: "00211" }]);
    expect(got.map((r) => r.task_id)).toEqual(["task-00005"]);
  });

  it("conjunction composes and removing one filter equals applying the rest", () => {
    const both = applyPredicates(rows, [
      { field: "status", op: "eq", value: "succeeded" },
      { field: "peak_rss_bytes", op: "lt", value: String(350 * 1024 * 1024) },
    ]);
    expect(both.map((r) => r.task_id)).toEqual(["task-00000", "task-00002"]);
    const remaining = applyPredicates(rows,
      [{ field: "status", op: "eq", value: "succeeded" }]);
    expect(remaining.length).toBe(4);
  });

  it("rejects unknown fields loudly", () => {
    expect(() => applyPredicates(rows, [{ field: "nope", op: "eq", value: "1" }]))
      .toThrow(FilterError);
  });

  it("knows row columns plus parameter columns", () => {
    const fields = knownFields(rows);
    expect(fields).toContain("status");
    expect(fields).toContain("participant_label");
  });
});
