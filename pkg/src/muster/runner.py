"""Execution backends: local pool, cluster-script generation, remote staging.

Every backend ultimately funnels tasks through the sentinel, so records are
identical across backends modulo timestamps, host, and sample series. A
lockfile in the clowdir keeps dispatchers single-flight per experiment;
read-only operations (status, share) never take it.
"""

from __future__ import annotations

import enum
import importlib.resources
import json
import logging
import os
import re
import shlex
import shutil
import socket
import subprocess
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path

import psutil

from .errors import LockError, StageError, SubmitError, TemplateError
from .layout import DESCRIPTOR_NAME, LOCK_NAME, SPEC_NAME, SUBMIT_NAME, task_dir
from .provenance import read_manifest, write_manifest, write_task_specs
from .sentinel import DEFAULT_INTERVAL, supervise
from .taskgen import TaskSpec
from .util import atomic_write_json, read_json

log = logging.getLogger(__name__)

SENTINEL_PROG = "muster"

_PLACEHOLDER_RE = re.compile(r"\{\{([A-Z_]+)\}\}")
_KNOWN_PLACEHOLDERS = ("TASK_ID", "SENTINEL_CMD", "CLOWDIR")


class Backend(enum.Enum):
    LOCAL_SERIAL = "local-serial"
    LOCAL_PARALLEL = "local-parallel"
    CLUSTER = "cluster"
    REMOTE_STAGE = "stage"


@dataclass(frozen=True)
class BackendConfig:
    kind: Backend
    workers: int = 1
    scheduler_template: Path | None = None
    scheduler_submit_cmd: str | None = None
    dry_run: bool = False
    stage_dir: Path | None = None

    def __post_init__(self):
        if self.workers < 1:
            raise ValueError("workers must be >= 1")


@dataclass
class DispatchReport:
    """What happened to each task handed to a backend, exactly once each."""

    submitted: list[tuple[str, str]] = field(default_factory=list)
    failed_to_submit: list[tuple[str, str]] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failed_to_submit


@contextmanager
def clowdir_lock(clowdir: Path | str):
    """Exclusive dispatcher lock: `<clowdir>/.lock` holding host and pid.

    A lock whose pid is dead on this host is stale and gets stolen with a
    warning; a live (or unverifiable remote) holder raises LockError.
    """
    lock = Path(clowdir) / LOCK_NAME
    me = {"hostname": socket.gethostname(), "pid": os.getpid()}
    for _ in range(2):
        try:
            fd = os.open(lock, os.O_CREAT | os.O_EXCL | os.O_WRONLY)
            with os.fdopen(fd, "w") as fh:
                json.dump(me, fh)
            break
        except FileExistsError:
            holder = _lock_holder(lock)
            if holder and holder.get("hostname") == me["hostname"] \
                    and not psutil.pid_exists(holder.get("pid", -1)):
                log.warning("stealing stale lock from dead pid %s", holder.get("pid"))
                lock.unlink(missing_ok=True)
                continue
            raise LockError(f"{lock} held by {holder or 'unknown dispatcher'}")
    else:
        raise LockError(f"could not acquire {lock}")
    try:
        yield
    finally:
        lock.unlink(missing_ok=True)


def _lock_holder(lock: Path) -> dict | None:
    try:
        holder = read_json(lock)
        return holder if isinstance(holder, dict) else None
    except (OSError, json.JSONDecodeError):
        return None


def run_local(tasks: list[TaskSpec], clowdir: Path | str, workers: int = 1,
              interval: float = DEFAULT_INTERVAL) -> DispatchReport:
    """Run tasks under in-process supervisors, at most `workers` at once.

    workers=1 runs strictly in task order. One task failing (nonzero exit,
    spawn error) lands in its record, not in the report; only tasks whose
    supervisor could not start at all count as failed_to_submit.
    """
    report = DispatchReport()

    def _one(task: TaskSpec) -> tuple[str, str | None, str | None]:
        try:
            supervise(task, clowdir, interval=interval)
            return task.task_id, str(task_dir(clowdir, task.task_id)), None
        except Exception as e:
            log.error("supervisor for %s failed: %s", task.task_id, e)
            return task.task_id, None, str(e)

    with clowdir_lock(clowdir):
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for task_id, handle, failure in pool.map(_one, tasks):
                if failure is None:
                    report.submitted.append((task_id, handle))
                else:
                    report.failed_to_submit.append((task_id, failure))
    return report


def default_template() -> str:
    """The bundled SLURM-style submission template."""
    return (importlib.resources.files("muster") / "templates" / "slurm.sh") \
        .read_text(encoding="utf-8")


def sentinel_command(task: TaskSpec, clowdir: Path | str,
                     interval: float = DEFAULT_INTERVAL) -> str:
    """The exact sentinel CLI invocation a scheduler job must execute."""
    spec = f"{clowdir}/{task.task_id}/{SPEC_NAME}"
    return (f"{SENTINEL_PROG} sentinel --task {shlex.quote(spec)} "
            f"--clowdir {shlex.quote(str(clowdir))} --interval {interval}")


def render_submission(task: TaskSpec, clowdir: Path | str, template: str,
                      interval: float = DEFAULT_INTERVAL) -> str:
    """Substitute template placeholders; pure text, no filesystem access.

    {{SENTINEL_CMD}} is mandatory (a job that never runs the sentinel is
    meaningless); {{TASK_ID}} and {{CLOWDIR}} are optional decorations.
    Anything else in {{...}} form is an error. Regeneration is
    byte-identical.
    """
    names = set(_PLACEHOLDER_RE.findall(template))
    unknown = names - set(_KNOWN_PLACEHOLDERS)
    if unknown:
        raise TemplateError(f"unknown placeholder(s): {sorted(unknown)}")
    if "SENTINEL_CMD" not in names:
        raise TemplateError("template lacks the {{SENTINEL_CMD}} placeholder")
    values = {
        "TASK_ID": task.task_id,
        "SENTINEL_CMD": sentinel_command(task, clowdir, interval),
        "CLOWDIR": str(clowdir),
    }
    return _PLACEHOLDER_RE.sub(lambda m: values[m.group(1)], template)


def generate_submission(task: TaskSpec, clowdir: Path | str, template: str,
                        interval: float = DEFAULT_INTERVAL) -> Path:
    """Render and write `<clowdir>/<task_id>/submit.sh`, mode executable."""
    script = render_submission(task, clowdir, template, interval)
    taskdir = task_dir(clowdir, task.task_id)
    taskdir.mkdir(parents=True, exist_ok=True)
    path = taskdir / SUBMIT_NAME
    path.write_text(script, encoding="utf-8")
    path.chmod(0o755)
    return path


def submit_cluster(tasks: list[TaskSpec], clowdir: Path | str,
                   cfg: BackendConfig,
                   interval: float = DEFAULT_INTERVAL) -> DispatchReport:
    """Generate one submission script per task and hand each to the scheduler.

    Generation errors abort before anything is submitted. With dry_run the
    handles are the script paths and nothing executes; otherwise each
    script is passed to the submit command and its captured stdout becomes
    the backend handle.
    """
    if cfg.scheduler_template is not None:
        template = Path(cfg.scheduler_template).read_text(encoding="utf-8")
    else:
        template = default_template()
    report = DispatchReport()
    with clowdir_lock(clowdir):
        scripts = [generate_submission(t, clowdir, template, interval)
                   for t in tasks]
        if cfg.dry_run:
            report.submitted = [(t.task_id, str(s))
                                for t, s in zip(tasks, scripts)]
            return report
        submit_argv = shlex.split(cfg.scheduler_submit_cmd or "sbatch")
        for task, script in zip(tasks, scripts):
            proc = subprocess.run(submit_argv + [str(script)],
                                  capture_output=True, text=True)
            if proc.returncode == 0:
                report.submitted.append((task.task_id, proc.stdout.strip()))
            else:
                excerpt = (proc.stderr or proc.stdout).strip()[:500]
                log.error("submission failed for %s: %s", task.task_id, excerpt)
                report.failed_to_submit.append(
                    (task.task_id, f"exit {proc.returncode}: {excerpt}"))
    return report


def stage_remote(tasks: list[TaskSpec], clowdir: Path | str,
                 stage_dir: Path | str,
                 interval: float = DEFAULT_INTERVAL) -> DispatchReport:
    """Copy each task's spec plus the descriptor into a staging directory.

    Writes `<stage_dir>/manifest.json` enumerating what a remote worker
    must run; performs no execution itself (see run_staged).
    """
    clowdir = Path(clowdir)
    stage_dir = Path(stage_dir)
    manifest = read_manifest(clowdir)
    try:
        stage_dir.mkdir(parents=True, exist_ok=True)
        probe = stage_dir / ".writable"
        probe.touch()
        probe.unlink()
    except OSError as e:
        raise StageError(f"stage dir {stage_dir} is not writable: {e}") from e

    report = DispatchReport()
    with clowdir_lock(clowdir):
        descriptor_src = clowdir / DESCRIPTOR_NAME
        if descriptor_src.is_file():
            shutil.copyfile(descriptor_src, stage_dir / DESCRIPTOR_NAME)
        staged = []
        for task in tasks:
            dest = stage_dir / task.task_id
            try:
                dest.mkdir(parents=True, exist_ok=True)
                shutil.copyfile(task_dir(clowdir, task.task_id) / SPEC_NAME,
                                dest / SPEC_NAME)
            except OSError as e:
                log.error("staging failed for %s: %s", task.task_id, e)
                report.failed_to_submit.append((task.task_id, str(e)))
                continue
            staged.append(task)
            report.submitted.append((task.task_id, str(dest)))
        atomic_write_json(stage_dir / "manifest.json", {
            "experiment_id": manifest["experiment_id"],
            "descriptor_digest": manifest["descriptor_digest"],
            "descriptor": DESCRIPTOR_NAME,
            "interval": interval,
            "tasks": [{"task_id": t.task_id,
                       "spec_path": f"{t.task_id}/{SPEC_NAME}"} for t in staged],
        })
    return report


def run_staged(stage_dir: Path | str, clowdir: Path | str,
               interval: float | None = None) -> DispatchReport:
    """Worker-side counterpart of stage_remote: execute a staged manifest.

    Builds an experiment manifest in the target clowdir (so consolidation
    works there) and supervises each staged task serially.
    """
    stage_dir = Path(stage_dir)
    clowdir = Path(clowdir)
    staged = read_json(stage_dir / "manifest.json")
    if not isinstance(staged, dict):
        raise StageError(f"{stage_dir}/manifest.json is not a staging manifest")
    tasks = [TaskSpec.from_json_dict(read_json(stage_dir / entry["spec_path"]))
             for entry in staged["tasks"]]
    clowdir.mkdir(parents=True, exist_ok=True)
    descriptor_src = stage_dir / staged.get("descriptor", DESCRIPTOR_NAME)
    if descriptor_src.is_file():
        shutil.copyfile(descriptor_src, clowdir / DESCRIPTOR_NAME)
    write_task_specs(clowdir, tasks)
    write_manifest(clowdir, experiment_id=staged["experiment_id"],
                   descriptor_digest=staged["descriptor_digest"], tasks=tasks,
                   expansion={"mode": "staged", "stage_dir": str(stage_dir)})
    return run_local(tasks, clowdir, workers=1,
                     interval=interval or staged.get("interval", DEFAULT_INTERVAL))
