"""Per-task supervisor: launch, sample, capture, record.

The sentinel launches a task's rendered command through the shell, streams
stdout/stderr straight to files, samples CPU and memory over the whole
process tree on a fixed interval, and writes the task's provenance record.
A partial record (launch time, no finish) is written immediately so
monitors can see running tasks; the final record replaces it atomically.

CPU percent is the delta of cumulative process-tree CPU time divided by
the wall-clock delta, times 100, so it can exceed 100 on multicore hosts.
Descendants are discovered each tick by walking parent linkage; children
that live and die entirely between two ticks are missed (their CPU time is
still captured once the parent reaps them, but their memory is not).
"""

from __future__ import annotations

import logging
import os
import socket
import subprocess
import time
from dataclasses import dataclass, field, replace
from datetime import datetime
from pathlib import Path

import psutil

from . import __version__
from .errors import AlreadyFinalized, OutputDirError, ProcessGone
from .layout import log_filename, next_attempt, record_filename, task_dir
from .taskgen import TaskSpec
from .util import atomic_write_json, from_rfc3339, read_json, to_rfc3339, utc_now

log = logging.getLogger(__name__)

DEFAULT_INTERVAL = 1.0
SIGNAL_EXIT_BASE = 128
SPAWN_FAILURE_EXIT = 127


@dataclass(frozen=True)
class ResourceSample:
    """One point of the per-task usage series.

    t is seconds since task launch; cpu_pct sums over the supervised
    process tree (may exceed 100 on multicore); rss_bytes sums resident
    set sizes over the tree.
    """

    t: float
    cpu_pct: float
    rss_bytes: int


@dataclass
class TaskRecord:
    """Per-task provenance: timing, exit status, logs, resource series."""

    task_id: str
    attempt: int
    hostname: str
    launched_at: datetime
    finished_at: datetime | None = None
    exit_code: int | None = None
    signal: int | None = None
    stdout_path: str = ""
    stderr_path: str = ""
    samples: list[ResourceSample] = field(default_factory=list)
    rendered_command: str = ""
    wrapper_version: str = __version__
    supervisor_pid: int | None = None
    error: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "attempt": self.attempt,
            "hostname": self.hostname,
            "launched_at": to_rfc3339(self.launched_at),
            "finished_at": to_rfc3339(self.finished_at) if self.finished_at else None,
            "exit_code": self.exit_code,
            "signal": self.signal,
            "stdout_path": self.stdout_path,
            "stderr_path": self.stderr_path,
            "samples": [[s.t, s.cpu_pct, s.rss_bytes] for s in self.samples],
            "rendered_command": self.rendered_command,
            "wrapper_version": self.wrapper_version,
            "supervisor_pid": self.supervisor_pid,
            "error": self.error,
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "TaskRecord":
        return cls(
            task_id=doc["task_id"],
            attempt=doc["attempt"],
            hostname=doc["hostname"],
            launched_at=from_rfc3339(doc["launched_at"]),
            finished_at=from_rfc3339(doc["finished_at"]) if doc.get("finished_at") else None,
            exit_code=doc.get("exit_code"),
            signal=doc.get("signal"),
            stdout_path=doc.get("stdout_path", ""),
            stderr_path=doc.get("stderr_path", ""),
            samples=[ResourceSample(t=s[0], cpu_pct=s[1], rss_bytes=s[2])
                     for s in doc.get("samples", [])],
            rendered_command=doc.get("rendered_command", ""),
            wrapper_version=doc.get("wrapper_version", ""),
            supervisor_pid=doc.get("supervisor_pid"),
            error=doc.get("error"),
        )


def record_path(clowdir: Path | str, task_id: str, attempt: int) -> Path:
    return task_dir(clowdir, task_id) / record_filename(attempt)


def write_record(record: TaskRecord, clowdir: Path | str) -> Path:
    """Atomically persist a record (temp file + rename); safe for readers."""
    path = record_path(clowdir, record.task_id, record.attempt)
    path.parent.mkdir(parents=True, exist_ok=True)
    atomic_write_json(path, record.to_json_dict())
    return path


def read_record(path: Path | str) -> TaskRecord:
    doc = read_json(path)
    if not isinstance(doc, dict):
        raise ValueError(f"{path} is not a record object")
    return TaskRecord.from_json_dict(doc)


def _tree_totals(root: psutil.Process) -> tuple[float, int, bool]:
    """Cumulative CPU seconds, summed RSS, and liveness over root + descendants.

    A process that vanishes between discovery and read contributes zero.
    children_user/children_system capture descendants already reaped by
    their parent, so their CPU time is not lost.
    """
    procs = [root]
    try:
        procs += root.children(recursive=True)
    except psutil.NoSuchProcess:
        pass
    cpu = 0.0
    rss = 0
    alive = False
    for proc in procs:
        try:
            with proc.oneshot():
                times = proc.cpu_times()
                cpu += times.user + times.system
                cpu += getattr(times, "children_user", 0.0)
                cpu += getattr(times, "children_system", 0.0)
                rss += proc.memory_info().rss
                alive = True
        except (psutil.NoSuchProcess, psutil.ZombieProcess, psutil.AccessDenied):
            continue
    return cpu, rss, alive


class TreeSampler:
    """Incremental CPU/RSS sampler over a process tree.

    Keeps the previous cumulative CPU total so each tick yields a percent
    over the interval since the last tick. Negative deltas (a child died
    and its time briefly vanished from the sum) clamp to zero.
    """

    def __init__(self, root_pid: int):
        try:
            self._root = psutil.Process(root_pid)
        except psutil.NoSuchProcess as e:
            raise ProcessGone(f"pid {root_pid} gone before first sample") from e
        self._prev_cpu, _, _ = _tree_totals(self._root)
        self._prev_wall = time.monotonic()

    def tick(self, t: float) -> ResourceSample | None:
        """Sample now, tagged with series time t; None once the tree is gone."""
        cpu, rss, alive = _tree_totals(self._root)
        wall = time.monotonic()
        delta = wall - self._prev_wall
        if delta <= 0:
            return None
        pct = max(0.0, (cpu - self._prev_cpu) / delta * 100.0)
        self._prev_cpu, self._prev_wall = cpu, wall
        if not alive:
            return None
        return ResourceSample(t=t, cpu_pct=round(pct, 2), rss_bytes=rss)


def sample_tree(root_pid: int, window: float = 0.1) -> ResourceSample:
    """One-shot sample of a process tree over a short measurement window.

    Raises ProcessGone if the root was reaped before the first read; a
    process vanishing mid-window contributes zero instead of raising.
    """
    try:
        root = psutil.Process(root_pid)
    except psutil.NoSuchProcess as e:
        raise ProcessGone(f"pid {root_pid} gone before first sample") from e
    cpu0, _, alive = _tree_totals(root)
    if not alive:
        raise ProcessGone(f"pid {root_pid} gone before first sample")
    time.sleep(window)
    cpu1, rss, _ = _tree_totals(root)
    pct = max(0.0, (cpu1 - cpu0) / window * 100.0)
    return ResourceSample(t=window, cpu_pct=round(pct, 2), rss_bytes=rss)


def finalize_record(partial: TaskRecord, *, exit_code: int | None = None,
                    signal: int | None = None,
                    end: datetime | None = None) -> TaskRecord:
    """Complete a partial record with exit status and finish time.

    Signal deaths are recorded both ways: the signal field plus the shell
    convention exit code 128+signal.
    """
    if partial.finished_at is not None:
        raise AlreadyFinalized(f"{partial.task_id} attempt {partial.attempt} "
                               "is already finalized")
    if signal is not None:
        exit_code = SIGNAL_EXIT_BASE + signal
    if exit_code is None:
        raise ValueError("finalize_record needs an exit code or a signal")
    end = end or utc_now()
    if end < partial.launched_at:
        end = partial.launched_at
    return replace(partial, exit_code=exit_code, signal=signal, finished_at=end)


def supervise(task: TaskSpec, clowdir: Path | str,
              interval: float = DEFAULT_INTERVAL,
              attempt: int | None = None) -> TaskRecord:
    """Run one task under supervision and write its provenance record.

    The child is launched via shell interpretation of the rendered command
    with the task directory as its working directory. stdout/stderr go
    straight to files through inherited descriptors, so arbitrarily large
    outputs never pass through this process. When attempt is None the next
    free attempt number is used, superseding (not overwriting) earlier
    records.
    """
    if interval <= 0:
        raise ValueError("sampling interval must be positive")
    clowdir = Path(clowdir)
    taskdir = task_dir(clowdir, task.task_id)
    try:
        taskdir.mkdir(parents=True, exist_ok=True)
        probe = taskdir / ".writable"
        probe.touch()
        probe.unlink()
    except OSError as e:
        raise OutputDirError(f"cannot write task directory {taskdir}: {e}") from e

    if attempt is None:
        attempt = next_attempt(taskdir)
    stdout_name = log_filename("stdout", attempt)
    stderr_name = log_filename("stderr", attempt)

    partial = TaskRecord(
        task_id=task.task_id,
        attempt=attempt,
        hostname=socket.gethostname(),
        launched_at=utc_now(),
        stdout_path=f"{task.task_id}/{stdout_name}",
        stderr_path=f"{task.task_id}/{stderr_name}",
        rendered_command=task.rendered_command,
        supervisor_pid=os.getpid(),
    )

    with open(taskdir / stdout_name, "wb") as out_fh, \
            open(taskdir / stderr_name, "wb") as err_fh:
        try:
            proc = subprocess.Popen(task.rendered_command, shell=True,
                                    stdout=out_fh, stderr=err_fh,
                                    cwd=str(taskdir))
        except OSError as e:
            log.error("spawn failed for %s: %s", task.task_id, e)
            record = replace(partial, finished_at=utc_now(),
                             exit_code=SPAWN_FAILURE_EXIT,
                             error=f"spawn failed: {e}")
            write_record(record, clowdir)
            return record

        write_record(partial, clowdir)  # running tasks are visible immediately
        start = time.monotonic()
        try:
            sampler: TreeSampler | None = TreeSampler(proc.pid)
        except ProcessGone:
            sampler = None

        next_tick = interval
        while True:
            remaining = next_tick - (time.monotonic() - start)
            try:
                proc.wait(timeout=max(0.0, remaining))
                break
            except subprocess.TimeoutExpired:
                t = round(time.monotonic() - start, 3)
                if sampler is not None and (not partial.samples
                                            or t > partial.samples[-1].t):
                    sample = sampler.tick(t)
                    if sample is not None:
                        partial.samples.append(sample)
                next_tick += interval

    returncode = proc.returncode
    if returncode is not None and returncode < 0:
        record = finalize_record(partial, signal=-returncode)
    else:
        record = finalize_record(partial, exit_code=returncode)
    write_record(record, clowdir)
    log.info("%s attempt %d finished with exit code %s",
             task.task_id, attempt, record.exit_code)
    return record
