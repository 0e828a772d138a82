"""On-disk layout of an experiment provenance directory (the clowdir).

    <clowdir>/
      experiment.json          task plan manifest
      descriptor.json          verbatim copy of the tool descriptor
      summary.json             consolidated experiment summary
      .lock                    dispatcher lockfile
      task-00000/
        spec.json              the task's resolved TaskSpec
        record.json            attempt 1 provenance record
        record.2.json          attempt 2 record (reruns supersede, never overwrite)
        stdout.log stderr.log  raw captured streams (stdout.2.log ... per attempt)
        submit.sh              generated scheduler script (cluster backend)
"""

from __future__ import annotations

import re
from pathlib import Path

MANIFEST_NAME = "experiment.json"
SUMMARY_NAME = "summary.json"
DESCRIPTOR_NAME = "descriptor.json"
LOCK_NAME = ".lock"
SPEC_NAME = "spec.json"
SUBMIT_NAME = "submit.sh"

TASK_ID_RE = re.compile(r"^task-(\d{5,})$")
_RECORD_RE = re.compile(r"^record(?:\.(\d+))?\.json$")


def format_task_id(ordinal: int) -> str:
    return f"task-{ordinal:05d}"


def parse_ordinal(task_id: str) -> int:
    m = TASK_ID_RE.match(task_id)
    if not m:
        raise ValueError(f"not a task id: {task_id!r}")
    return int(m.group(1))


def task_dir(clowdir: Path | str, task_id: str) -> Path:
    return Path(clowdir) / task_id


def spec_path(clowdir: Path | str, task_id: str) -> Path:
    return task_dir(clowdir, task_id) / SPEC_NAME


def record_filename(attempt: int) -> str:
    return "record.json" if attempt == 1 else f"record.{attempt}.json"


def log_filename(stream: str, attempt: int) -> str:
    return f"{stream}.log" if attempt == 1 else f"{stream}.{attempt}.log"


def find_record_paths(taskdir: Path | str) -> dict[int, Path]:
    """Map attempt number to record path for every record file present."""
    taskdir = Path(taskdir)
    found: dict[int, Path] = {}
    if not taskdir.is_dir():
        return found
    for entry in taskdir.iterdir():
        m = _RECORD_RE.match(entry.name)
        if m:
            found[int(m.group(1) or 1)] = entry
    return found


def next_attempt(taskdir: Path | str) -> int:
    existing = find_record_paths(taskdir)
    return max(existing) + 1 if existing else 1
