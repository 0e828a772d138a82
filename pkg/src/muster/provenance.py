"""Experiment manifest and consolidated provenance summaries.

Consolidation walks every planned task directory, tolerates absent or
partial records (an unparseable record demotes the task to incomplete with
a diagnostics note, never a fatal error), lets the highest attempt win,
and materializes the result to summary.json. It is read-only over task
directories and may run while supervisors are active: the sentinel's
atomic renames guarantee a record is either absent or complete-as-written.
"""

from __future__ import annotations

import logging
import socket
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import psutil

from .errors import BadOperator, NotAnExperimentDir, UnknownField
from .layout import (
    MANIFEST_NAME,
    SUMMARY_NAME,
    find_record_paths,
    parse_ordinal,
    spec_path,
    task_dir,
)
from .sentinel import ResourceSample, TaskRecord, read_record
from .taskgen import TaskSpec
from .util import atomic_write_json, from_rfc3339, read_json, to_rfc3339, utc_now

log = logging.getLogger(__name__)

STATUSES = ("running", "succeeded", "failed", "incomplete")

FILTER_OPS = ("eq", "ne", "lt", "gt", "contains")

# fixed TaskRow columns; invocation parameters extend these per experiment
_ROW_FIELDS = ("task_id", "status", "launched_at", "finished_at", "duration_s",
               "exit_code", "peak_rss_bytes", "mean_cpu_pct", "attempt")


@dataclass
class TaskRow:
    """One consolidated row per planned task."""

    task_id: str
    status: str
    launched_at: datetime | None = None
    finished_at: datetime | None = None
    duration_s: float | None = None
    exit_code: int | None = None
    peak_rss_bytes: int | None = None
    mean_cpu_pct: float | None = None
    attempt: int | None = None
    params: dict = field(default_factory=dict)
    note: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "status": self.status,
            "launched_at": to_rfc3339(self.launched_at) if self.launched_at else None,
            "finished_at": to_rfc3339(self.finished_at) if self.finished_at else None,
            "duration_s": self.duration_s,
            "exit_code": self.exit_code,
            "peak_rss_bytes": self.peak_rss_bytes,
            "mean_cpu_pct": self.mean_cpu_pct,
            "attempt": self.attempt,
            "params": self.params,
            "note": self.note,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "TaskRow":
        return cls(
            task_id=doc["task_id"],
            status=doc["status"],
            launched_at=from_rfc3339(doc["launched_at"]) if doc.get("launched_at") else None,
            finished_at=from_rfc3339(doc["finished_at"]) if doc.get("finished_at") else None,
            duration_s=doc.get("duration_s"),
            exit_code=doc.get("exit_code"),
            peak_rss_bytes=doc.get("peak_rss_bytes"),
            mean_cpu_pct=doc.get("mean_cpu_pct"),
            attempt=doc.get("attempt"),
            params=doc.get("params", {}),
            note=doc.get("note"),
        )


@dataclass
class ExperimentSummary:
    """Consolidated view over all task records of one experiment."""

    experiment_id: str
    descriptor_digest: str
    generated_at: datetime
    task_rows: list[TaskRow]
    counts: dict
    aggregate: dict | None

    def to_json_dict(self) -> dict:
        return {
            "experiment_id": self.experiment_id,
            "descriptor_digest": self.descriptor_digest,
            "generated_at": to_rfc3339(self.generated_at),
            "counts": self.counts,
            "aggregate": self.aggregate,
            "task_rows": [row.to_json_dict() for row in self.task_rows],
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ExperimentSummary":
        return cls(
            experiment_id=doc["experiment_id"],
            descriptor_digest=doc["descriptor_digest"],
            generated_at=from_rfc3339(doc["generated_at"]),
            task_rows=[TaskRow.from_json_dict(r) for r in doc.get("task_rows", [])],
            counts=doc.get("counts", {}),
            aggregate=doc.get("aggregate"),
        )


@dataclass(frozen=True)
class TimelineRow:
    """One bar of the experiment timeline; end is None while running."""

    task_id: str
    start: datetime
    end: datetime | None


# --- manifest -----------------------------------------------------------------

def manifest_path(clowdir: Path | str) -> Path:
    return Path(clowdir) / MANIFEST_NAME


def summary_path(clowdir: Path | str) -> Path:
    return Path(clowdir) / SUMMARY_NAME


def write_manifest(clowdir: Path | str, *, experiment_id: str,
                   descriptor_digest: str, tasks: list[TaskSpec],
                   expansion: dict, created_at: datetime | None = None) -> Path:
    doc = {
        "experiment_id": experiment_id,
        "descriptor_digest": descriptor_digest,
        "created_at": to_rfc3339(created_at or utc_now()),
        "expansion": expansion,
        "tasks": [{"task_id": t.task_id, "spec_path": f"{t.task_id}/spec.json"}
                  for t in tasks],
    }
    path = manifest_path(clowdir)
    atomic_write_json(path, doc)
    return path


def read_manifest(clowdir: Path | str) -> dict:
    path = manifest_path(clowdir)
    if not path.is_file():
        raise NotAnExperimentDir(f"{clowdir} has no {MANIFEST_NAME}")
    doc = read_json(path)
    if not isinstance(doc, dict) or "tasks" not in doc:
        raise NotAnExperimentDir(f"{path} is not an experiment manifest")
    return doc


def write_task_specs(clowdir: Path | str, tasks: list[TaskSpec]) -> None:
    for task in tasks:
        path = spec_path(clowdir, task.task_id)
        path.parent.mkdir(parents=True, exist_ok=True)
        atomic_write_json(path, task.to_json_dict())


def load_task_specs(clowdir: Path | str) -> list[TaskSpec]:
    """Load the planned TaskSpecs in manifest order."""
    manifest = read_manifest(clowdir)
    specs = []
    for entry in manifest["tasks"]:
        doc = read_json(Path(clowdir) / entry["spec_path"])
        specs.append(TaskSpec.from_json_dict(doc))
    return specs


def load_latest_records(clowdir: Path | str) -> dict[str, TaskRecord]:
    """Latest parseable record per task id; tasks without one are absent."""
    manifest = read_manifest(clowdir)
    records: dict[str, TaskRecord] = {}
    for entry in manifest["tasks"]:
        task_id = entry["task_id"]
        _, record, _ = _latest_record(task_dir(clowdir, task_id))
        if record is not None:
            records[task_id] = record
    return records


# --- consolidation ------------------------------------------------------------

def peak_and_mean(samples: list[ResourceSample]) -> tuple[int | None, float | None]:
    """Peak RSS and time-weighted (trapezoidal) mean CPU over a series.

    The trapezoid weighting is robust to irregular sampling gaps; an empty
    series yields (None, None) and a single sample is its own mean.
    """
    if not samples:
        return None, None
    peak = max(s.rss_bytes for s in samples)
    if len(samples) == 1 or samples[-1].t <= samples[0].t:
        return peak, round(samples[0].cpu_pct, 3)
    area = 0.0
    for a, b in zip(samples, samples[1:]):
        area += (a.cpu_pct + b.cpu_pct) / 2.0 * (b.t - a.t)
    return peak, round(area / (samples[-1].t - samples[0].t), 3)


def _latest_record(taskdir: Path) -> tuple[int | None, TaskRecord | None, str | None]:
    """Highest-attempt record in a task dir: (attempt, record, parse note)."""
    paths = find_record_paths(taskdir)
    if not paths:
        return None, None, None
    attempt = max(paths)
    try:
        return attempt, read_record(paths[attempt]), None
    except Exception as e:  # damaged record: demote, never fail consolidation
        return attempt, None, f"unparseable record (attempt {attempt}): {e}"


def _supervisor_alive(record: TaskRecord) -> bool:
    """Best-effort liveness of the supervisor that wrote a partial record.

    Only decidable on the host that ran it; records from other hosts are
    presumed live (network-filesystem case).
    """
    if record.supervisor_pid is None:
        return True
    if record.hostname != socket.gethostname():
        return True
    return psutil.pid_exists(record.supervisor_pid)


def _flatten(value: object) -> object:
    if isinstance(value, list):
        return " ".join(str(v) for v in value)
    return value


def _row_for(task_id: str, params: dict, attempt: int | None,
             record: TaskRecord | None, note: str | None) -> TaskRow:
    row = TaskRow(task_id=task_id, status="incomplete", params=params,
                  attempt=attempt, note=note)
    if record is None:
        return row
    row.launched_at = record.launched_at
    row.finished_at = record.finished_at
    row.exit_code = record.exit_code
    row.peak_rss_bytes, row.mean_cpu_pct = peak_and_mean(record.samples)
    if record.finished_at is not None:
        row.duration_s = round(
            (record.finished_at - record.launched_at).total_seconds(), 3)
        row.status = "failed" if record.exit_code != 0 else "succeeded"
    elif _supervisor_alive(record):
        row.status = "running"
    else:
        row.status = "incomplete"
        row.note = note or "supervisor died before finalizing the record"
    return row


def consolidate(clowdir: Path | str) -> ExperimentSummary:
    """Consolidate every task record into an ExperimentSummary.

    Rows are ordered by ordinal; the result is written to summary.json and
    returned. Idempotent: reruns with no new records differ only in
    generated_at.
    """
    clowdir = Path(clowdir)
    manifest = read_manifest(clowdir)
    rows = []
    for entry in sorted(manifest["tasks"], key=lambda e: parse_ordinal(e["task_id"])):
        task_id = entry["task_id"]
        params: dict = {}
        try:
            spec_doc = read_json(clowdir / entry["spec_path"])
            params = {k: _flatten(v)
                      for k, v in spec_doc.get("invocation", {}).items()}
        except Exception as e:
            log.warning("unreadable spec for %s: %s", task_id, e)
        attempt, record, note = _latest_record(task_dir(clowdir, task_id))
        rows.append(_row_for(task_id, params, attempt, record, note))

    counts = {status: 0 for status in STATUSES}
    for row in rows:
        counts[row.status] += 1

    finished = [r for r in rows if r.status in ("succeeded", "failed")]
    aggregate = None
    if finished:
        durations = [r.duration_s for r in finished if r.duration_s is not None]
        peaks = [r.peak_rss_bytes for r in finished if r.peak_rss_bytes is not None]
        aggregate = {
            "mean_duration_s": round(sum(durations) / len(durations), 3)
            if durations else None,
            "max_duration_s": max(durations) if durations else None,
            "mean_peak_rss_bytes": int(sum(peaks) / len(peaks)) if peaks else None,
            "max_peak_rss_bytes": max(peaks) if peaks else None,
        }

    summary = ExperimentSummary(
        experiment_id=manifest["experiment_id"],
        descriptor_digest=manifest["descriptor_digest"],
        generated_at=utc_now(),
        task_rows=rows,
        counts=counts,
        aggregate=aggregate,
    )
    atomic_write_json(summary_path(clowdir), summary.to_json_dict())
    return summary


def timeline(summary: ExperimentSummary) -> list[TimelineRow]:
    """Timeline rows for every launched task, sorted by start then ordinal."""
    rows = [TimelineRow(task_id=r.task_id, start=r.launched_at, end=r.finished_at)
            for r in summary.task_rows if r.launched_at is not None]
    rows.sort(key=lambda r: (r.start, parse_ordinal(r.task_id)))
    return rows


# --- filtering and sorting ----------------------------------------------------

def _field_value(row: TaskRow, fieldname: str) -> object:
    if fieldname in _ROW_FIELDS:
        value = getattr(row, fieldname)
        if isinstance(value, datetime):
            return to_rfc3339(value)
        return value
    return row.params.get(fieldname)


def _known_field(rows: list[TaskRow], fieldname: str) -> bool:
    if fieldname in _ROW_FIELDS:
        return True
    return any(fieldname in row.params for row in rows)


def _as_number(value: object) -> float | None:
    if isinstance(value, bool):
        return None
    if isinstance(value, (int, float)):
        return float(value)
    if isinstance(value, str):
        try:
            return float(value)
        except ValueError:
            return None
    return None


def _loose_eq(row_value: object, wanted: object) -> bool:
    if isinstance(row_value, bool) or isinstance(wanted, bool):
        truthy = {"true": True, "false": False}
        a = truthy.get(str(row_value).lower(), row_value)
        b = truthy.get(str(wanted).lower(), wanted)
        return a == b
    a_num, b_num = _as_number(row_value), _as_number(wanted)
    if a_num is not None and b_num is not None:
        return a_num == b_num
    return str(row_value) == str(wanted)


def _apply_op(row_value: object, op: str, wanted: object) -> bool:
    # a missing value never satisfies a predicate, whatever the operator
    if row_value is None:
        return False
    if op == "eq":
        return _loose_eq(row_value, wanted)
    if op == "ne":
        return not _loose_eq(row_value, wanted)
    if op == "contains":
        return str(wanted) in str(row_value)
    a_num, b_num = _as_number(row_value), _as_number(wanted)
    if a_num is not None and b_num is not None:
        return a_num < b_num if op == "lt" else a_num > b_num
    a_str, b_str = str(row_value), str(wanted)
    return a_str < b_str if op == "lt" else a_str > b_str


def filter_rows(rows: list[TaskRow],
                predicates: list[tuple[str, str, object]]) -> list[TaskRow]:
    """Keep rows matching the conjunction of (field, op, value) predicates.

    Fields are TaskRow columns or flattened invocation parameters; an
    unknown field is an error, never a silent empty result. Order is
    preserved and predicates commute.
    """
    for fieldname, op, _ in predicates:
        if op not in FILTER_OPS:
            raise BadOperator(f"operator {op!r} not in {FILTER_OPS}")
        if not _known_field(rows, fieldname):
            raise UnknownField(f"unknown field {fieldname!r}")
    kept = rows
    for fieldname, op, wanted in predicates:
        kept = [row for row in kept
                if _apply_op(_field_value(row, fieldname), op, wanted)]
    return kept


def sort_rows(rows: list[TaskRow], sort: str) -> list[TaskRow]:
    """Stable sort by one field; a leading '-' sorts descending.

    Rows missing the field sort to the end regardless of direction.
    """
    descending = sort.startswith("-")
    fieldname = sort[1:] if descending else sort
    if not _known_field(rows, fieldname):
        raise UnknownField(f"unknown sort field {fieldname!r}")

    present = [r for r in rows if _field_value(r, fieldname) is not None]
    absent = [r for r in rows if _field_value(r, fieldname) is None]

    def key(row: TaskRow):
        value = _field_value(row, fieldname)
        num = _as_number(value)
        return (0, num, "") if num is not None else (1, 0.0, str(value))

    present.sort(key=key, reverse=descending)
    return present + absent
