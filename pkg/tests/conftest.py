"""Shared fixtures: descriptor builders, fabricated experiments, BIDS trees."""

from __future__ import annotations

import json
import sys
from datetime import timedelta
from pathlib import Path

import pytest

from muster.descriptor import parse_descriptor
from muster.provenance import write_manifest, write_task_specs
from muster.sentinel import ResourceSample, TaskRecord, write_record
from muster.taskgen import TaskSpec
from muster.util import utc_now

PY = sys.executable


def make_descriptor_doc(**overrides) -> dict:
    doc = {
        "name": "echoer",
        "tool-version": "1.0",
        "command-line": "echo [MSG]",
        "inputs": [
            {"id": "msg", "value-key": "[MSG]", "type": "String",
             "optional": False},
        ],
    }
    doc.update(overrides)
    return doc


def bids_app_doc() -> dict:
    """A BIDS-app style descriptor matching the usual parameter columns."""
    return {
        "name": "connectome-app",
        "tool-version": "0.1.0",
        "command-line": "app [BIDS_DIR] [OUTPUT_DIR] [LEVEL] [PARTICIPANT_LABEL] [SESSION_LABEL]",
        "inputs": [
            {"id": "bids_dir", "value-key": "[BIDS_DIR]", "type": "File",
             "optional": False},
            {"id": "output_dir", "value-key": "[OUTPUT_DIR]", "type": "File",
             "optional": False},
            {"id": "analysis_level", "value-key": "[LEVEL]", "type": "String",
             "optional": False,
             "value-choices": ["participant", "group"]},
            {"id": "participant_label", "value-key": "[PARTICIPANT_LABEL]",
             "type": "String", "optional": True, "list": True,
             "command-line-flag": "--participant_label"},
            {"id": "session_label", "value-key": "[SESSION_LABEL]",
             "type": "String", "optional": True, "list": True,
             "command-line-flag": "--session_label"},
        ],
    }


@pytest.fixture
def echo_descriptor():
    return parse_descriptor(json.dumps(make_descriptor_doc()))


@pytest.fixture
def bids_descriptor():
    return parse_descriptor(json.dumps(bids_app_doc()))


def make_task(ordinal: int, command: str, *, experiment_id: str = "exp-test",
              invocation: dict | None = None, now=None) -> TaskSpec:
    return TaskSpec(
        task_id=f"task-{ordinal:05d}",
        experiment_id=experiment_id,
        invocation=invocation or {},
        rendered_command=command,
        descriptor_digest="0" * 64,
        created_at=now or utc_now(),
    )


def make_experiment(clowdir: Path, commands: list[str],
                    invocations: list[dict] | None = None) -> list[TaskSpec]:
    """Fabricate a planned experiment (manifest + specs) from shell commands."""
    clowdir.mkdir(parents=True, exist_ok=True)
    now = utc_now()
    tasks = [make_task(i, cmd, invocation=(invocations[i] if invocations else None),
                       now=now)
             for i, cmd in enumerate(commands)]
    write_task_specs(clowdir, tasks)
    write_manifest(clowdir, experiment_id="exp-test",
                   descriptor_digest="0" * 64, tasks=tasks,
                   expansion={"mode": "list", "invocation_count": len(tasks)})
    return tasks


def fabricate_record(clowdir: Path, task_id: str, *, exit_code: int | None = 0,
                     attempt: int = 1, duration_s: float = 2.0,
                     start=None, samples: list[tuple] | None = None,
                     hostname: str = "testhost",
                     supervisor_pid: int | None = 1) -> TaskRecord:
    """Write a synthetic record; exit_code=None leaves it partial (running)."""
    start = start or utc_now()
    record = TaskRecord(
        task_id=task_id,
        attempt=attempt,
        hostname=hostname,
        launched_at=start,
        stdout_path=f"{task_id}/stdout.log",
        stderr_path=f"{task_id}/stderr.log",
        samples=[ResourceSample(t=s[0], cpu_pct=s[1], rss_bytes=s[2])
                 for s in (samples or [])],
        rendered_command="fabricated",
        supervisor_pid=supervisor_pid,
    )
    if exit_code is not None:
        record.exit_code = exit_code
        record.finished_at = start + timedelta(seconds=duration_s)
    write_record(record, clowdir)
    taskdir = clowdir / task_id
    (taskdir / "stdout.log").write_bytes(b"")
    (taskdir / "stderr.log").write_bytes(b"")
    return record


def make_bids_dataset(root: Path, layout: dict[str, list[str]]) -> Path:
    """Create sub-*/ses-* directories: {participant: [session, ...]}."""
    root.mkdir(parents=True, exist_ok=True)
    for participant, sessions in layout.items():
        pdir = root / f"sub-{participant}"
        pdir.mkdir()
        for session in sessions:
            (pdir / f"ses-{session}").mkdir()
    return root
