"""Backends: local pool semantics, submission generation, staging."""

from __future__ import annotations

import json
import os
import shutil
import stat

import pytest

from muster.errors import LockError, StageError, TemplateError
from muster.layout import find_record_paths
from muster.provenance import load_latest_records
from muster.runner import (
    Backend,
    BackendConfig,
    clowdir_lock,
    default_template,
    generate_submission,
    render_submission,
    run_local,
    run_staged,
    sentinel_command,
    stage_remote,
    submit_cluster,
)
from muster.sentinel import read_record, record_path

from .conftest import make_experiment, make_task


def overlap_never_exceeds(records, limit: int) -> bool:
    """Sweep-line oracle over (launched_at, finished_at) intervals."""
    events = []
    for record in records:
        events.append((record.launched_at, 1))
        events.append((record.finished_at, -1))
    events.sort(key=lambda e: (e[0], e[1]))
    live = peak = 0
    for _, delta in events:
        live += delta
        peak = max(peak, live)
    return peak <= limit


# --- run_local ------------------------------------------------------------------

def test_serial_order_strict(tmp_path):
    clowdir = tmp_path / "exp"
    tasks = make_experiment(clowdir, ["sleep 0.1"] * 3)
    report = run_local(tasks, clowdir, workers=1, interval=0.5)
    assert [t for t, _ in report.submitted] == [t.task_id for t in tasks]
    records = [read_record(record_path(clowdir, t.task_id, 1)) for t in tasks]
    starts = [r.launched_at for r in records]
    assert starts == sorted(starts) and len(set(starts)) == 3


def test_bounded_parallelism(tmp_path):
    clowdir = tmp_path / "exp"
    tasks = make_experiment(clowdir, ["sleep 0.4"] * 6)
    report = run_local(tasks, clowdir, workers=2, interval=0.2)
    assert len(report.submitted) == 6
    records = [read_record(record_path(clowdir, t.task_id, 1)) for t in tasks]
    assert overlap_never_exceeds(records, 2)


def test_failure_isolation(tmp_path):
    clowdir = tmp_path / "exp"
    tasks = make_experiment(clowdir, ["true", "exit 3", "true"])
    report = run_local(tasks, clowdir, workers=1, interval=0.5)
    assert report.ok
    records = load_latest_records(clowdir)
    assert [records[t.task_id].exit_code for t in tasks] == [0, 3, 0]


def test_dispatch_totality_with_blocked_task(tmp_path):
    clowdir = tmp_path / "exp"
    tasks = make_experiment(clowdir, ["true"] * 3)
    # a file squatting on task-00001's directory blocks that supervisor only
    shutil.rmtree(clowdir / "task-00001")
    (clowdir / "task-00001").write_text("squatter")
    report = run_local(tasks, clowdir, workers=1, interval=0.5)
    submitted = {t for t, _ in report.submitted}
    failed = {t for t, _ in report.failed_to_submit}
    assert submitted == {"task-00000", "task-00002"}
    assert failed == {"task-00001"}


def test_lockfile_excludes_concurrent_dispatch(tmp_path):
    clowdir = tmp_path / "exp"
    tasks = make_experiment(clowdir, ["true"])
    with clowdir_lock(clowdir):
        with pytest.raises(LockError):
            run_local(tasks, clowdir, workers=1)
    # released on exit: a later dispatch works
    assert run_local(tasks, clowdir, workers=1).ok


def test_stale_lock_is_stolen(tmp_path):
    clowdir = tmp_path / "exp"
    tasks = make_experiment(clowdir, ["true"])
    import socket
    (clowdir / ".lock").write_text(json.dumps(
        {"hostname": socket.gethostname(), "pid": 2 ** 22 + 1234}))
    assert run_local(tasks, clowdir, workers=1).ok


# --- submission scripts ---------------------------------------------------------

def test_render_substitution(tmp_path):
    task = make_task(0, "true")
    script = render_submission(task, "/exp", "#JOB {{TASK_ID}}\n{{SENTINEL_CMD}}\n")
    lines = script.splitlines()
    assert lines[0] == "#JOB task-00000"
    assert lines[1] == ("muster sentinel --task /exp/task-00000/spec.json "
                        "--clowdir /exp --interval 1.0")


def test_render_missing_sentinel_placeholder():
    with pytest.raises(TemplateError):
        render_submission(make_task(0, "true"), "/exp", "#JOB {{TASK_ID}}\n")


def test_render_unknown_placeholder():
    with pytest.raises(TemplateError):
        render_submission(make_task(0, "true"), "/exp",
                          "{{SENTINEL_CMD}} {{NODES}}")


def test_render_idempotent(tmp_path):
    task = make_task(2, "true")
    template = default_template()
    assert render_submission(task, "/exp", template) == \
        render_submission(task, "/exp", template)


def test_generate_writes_executable_script(tmp_path):
    clowdir = tmp_path / "exp"
    task = make_task(0, "true")
    path = generate_submission(task, clowdir, default_template())
    assert path == clowdir / "task-00000" / "submit.sh"
    assert path.stat().st_mode & stat.S_IXUSR
    assert "muster sentinel" in path.read_text()


def test_sentinel_command_quotes_paths():
    cmd = sentinel_command(make_task(0, "true"), "/tmp/with space", 0.5)
    assert "'/tmp/with space/task-00000/spec.json'" in cmd
    assert "--interval 0.5" in cmd


# --- submit_cluster -------------------------------------------------------------

def cluster_cfg(**kw) -> BackendConfig:
    return BackendConfig(kind=Backend.CLUSTER, **kw)


def test_dry_run_generates_without_submitting(tmp_path):
    clowdir = tmp_path / "exp"
    tasks = make_experiment(clowdir, ["true"] * 4)
    report = submit_cluster(tasks, clowdir, cluster_cfg(dry_run=True))
    assert len(report.submitted) == 4
    for task_id, handle in report.submitted:
        assert handle.endswith(f"{task_id}/submit.sh")
        assert os.path.isfile(handle)
    # nothing executed: no records
    assert not find_record_paths(clowdir / "task-00000")


def test_failing_submitter_reports_every_task(tmp_path):
    clowdir = tmp_path / "exp"
    tasks = make_experiment(clowdir, ["true"] * 3)
    report = submit_cluster(tasks, clowdir,
                            cluster_cfg(scheduler_submit_cmd="false"))
    assert not report.submitted
    assert [t for t, _ in report.failed_to_submit] == [t.task_id for t in tasks]


def test_stub_submitter_handles(tmp_path):
    stub = tmp_path / "fake-sbatch"
    stub.write_text("#!/bin/sh\necho \"JOBID-$(basename \"$(dirname \"$1\")\")\"\n")
    stub.chmod(0o755)
    clowdir = tmp_path / "exp"
    tasks = make_experiment(clowdir, ["true"] * 2)
    report = submit_cluster(tasks, clowdir,
                            cluster_cfg(scheduler_submit_cmd=str(stub)))
    assert report.submitted == [("task-00000", "JOBID-task-00000"),
                                ("task-00001", "JOBID-task-00001")]


def test_generation_error_aborts_before_submission(tmp_path):
    clowdir = tmp_path / "exp"
    tasks = make_experiment(clowdir, ["true"] * 2)
    bad_template = tmp_path / "bad.sh"
    bad_template.write_text("{{NOPE}}\n")
    with pytest.raises(TemplateError):
        submit_cluster(tasks, clowdir,
                       cluster_cfg(scheduler_template=bad_template,
                                   scheduler_submit_cmd="false"))


# --- staging --------------------------------------------------------------------

def test_stage_remote_layout(tmp_path):
    clowdir = tmp_path / "exp"
    tasks = make_experiment(clowdir, ["echo staged-a", "echo staged-b"])
    (clowdir / "descriptor.json").write_text("{}")
    stage = tmp_path / "stage"
    report = stage_remote(tasks, clowdir, stage)
    assert report.ok and len(report.submitted) == 2
    manifest = json.loads((stage / "manifest.json").read_text())
    assert [t["task_id"] for t in manifest["tasks"]] == \
        ["task-00000", "task-00001"]
    assert (stage / "task-00000" / "spec.json").is_file()
    assert (stage / "descriptor.json").is_file()
    assert manifest["descriptor_digest"] == "0" * 64


def test_stage_unwritable_dir(tmp_path):
    clowdir = tmp_path / "exp"
    tasks = make_experiment(clowdir, ["true"])
    blocker = tmp_path / "blocked"
    blocker.write_text("file, not dir")
    with pytest.raises(StageError):
        stage_remote(tasks, clowdir, blocker)


def test_staged_manifest_roundtrip_matches_local(tmp_path):
    # the same plan through stage+worker equals a direct local run
    clowdir_a = tmp_path / "exp-local"
    tasks = make_experiment(clowdir_a, ["echo one", "exit 5"])
    run_local(tasks, clowdir_a, workers=1, interval=0.5)

    clowdir_src = tmp_path / "exp-src"
    make_experiment(clowdir_src, ["echo one", "exit 5"])
    stage = tmp_path / "stage"
    stage_remote(tasks, clowdir_src, stage)
    clowdir_b = tmp_path / "exp-worker"
    report = run_staged(stage, clowdir_b, interval=0.5)
    assert report.ok

    for task in tasks:
        a = read_record(record_path(clowdir_a, task.task_id, 1))
        b = read_record(record_path(clowdir_b, task.task_id, 1))
        for field in ("task_id", "attempt", "exit_code", "signal",
                      "stdout_path", "stderr_path", "rendered_command",
                      "wrapper_version", "error"):
            assert getattr(a, field) == getattr(b, field), field
        assert (clowdir_a / a.stdout_path).read_bytes() == \
            (clowdir_b / b.stdout_path).read_bytes()
