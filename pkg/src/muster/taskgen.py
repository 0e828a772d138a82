"""Task-list expansion and re-execution planning.

A descriptor plus invocation input expands into a deterministic,
explicitly-enumerated task list in one of three ways: a one-to-one mapping
from a list of invocations, a cartesian sweep over parameter value lists,
or iteration over the participants (and sessions) of a BIDS dataset.
Expansion is all-or-nothing: one invalid invocation aborts the whole list.
"""

from __future__ import annotations

import enum
import itertools
import logging
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

from .descriptor import (
    ToolDescriptor,
    containerize_command,
    descriptor_digest,
    render_command,
    validate_invocation,
)
from .errors import (
    NotABidsDir,
    SchemaError,
    TypeMismatch,
    UnknownInput,
    UnknownParticipant,
    ValidationError,
)
from .layout import format_task_id
from .util import from_rfc3339, to_rfc3339, utc_now

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TaskSpec:
    """One fully-resolved unit of execution."""

    task_id: str
    experiment_id: str
    invocation: dict
    rendered_command: str
    descriptor_digest: str
    created_at: datetime

    def to_json_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "experiment_id": self.experiment_id,
            "invocation": self.invocation,
            "rendered_command": self.rendered_command,
            "descriptor_digest": self.descriptor_digest,
            "created_at": to_rfc3339(self.created_at),
        }

    @classmethod
    def from_json_dict(cls, doc: dict) -> "TaskSpec":
        return cls(
            task_id=doc["task_id"],
            experiment_id=doc["experiment_id"],
            invocation=doc["invocation"],
            rendered_command=doc["rendered_command"],
            descriptor_digest=doc["descriptor_digest"],
            created_at=from_rfc3339(doc["created_at"]),
        )


class ExpansionMode(enum.Enum):
    INVOCATION_LIST = "list"
    SWEEP = "sweep"
    BIDS = "bids"


@dataclass(frozen=True)
class ExpansionRequest:
    """How to turn a descriptor plus invocation input into a task list."""

    mode: ExpansionMode
    invocations: tuple[dict, ...] = ()
    sweep_params: dict = field(default_factory=dict)
    bids_dir: Path | None = None
    participant_labels: tuple[str, ...] | None = None
    session_labels: tuple[str, ...] | None = None

    def echo(self) -> dict:
        """JSON-safe echo of the request for the experiment manifest."""
        doc: dict = {"mode": self.mode.value}
        if self.mode is ExpansionMode.INVOCATION_LIST:
            doc["invocation_count"] = len(self.invocations)
        elif self.mode is ExpansionMode.SWEEP:
            doc["sweep_params"] = self.sweep_params
        else:
            doc["bids_dir"] = str(self.bids_dir)
            if self.participant_labels is not None:
                doc["participant_labels"] = list(self.participant_labels)
            if self.session_labels is not None:
                doc["session_labels"] = list(self.session_labels)
        return doc


class RerunMode(enum.Enum):
    FULL = "full"
    FAILURES_ONLY = "failures"
    INCOMPLETE_ONLY = "incomplete"


def _container_workdir(d: ToolDescriptor) -> str:
    # Must be derivable from the descriptor alone so rendered commands are
    # reproducible from (descriptor, invocation) regardless of clowdir.
    if d.container and d.container.bind_mounts:
        return d.container.bind_mounts[0][1]
    return "/"


def _build_task(d: ToolDescriptor, digest: str, experiment_id: str,
                ordinal: int, normalized: dict, now: datetime) -> TaskSpec:
    cmd = render_command(d, normalized)
    if d.container is not None:
        cmd = containerize_command(d.container, cmd, _container_workdir(d))
    return TaskSpec(
        task_id=format_task_id(ordinal),
        experiment_id=experiment_id,
        invocation=normalized,
        rendered_command=cmd,
        descriptor_digest=digest,
        created_at=now,
    )


def expand_invocation_list(d: ToolDescriptor, invs: list[dict], *,
                           experiment_id: str,
                           now: datetime | None = None) -> list[TaskSpec]:
    """Expand a list of invocations one-to-one into tasks, in input order.

    All-or-nothing: a validation error on any invocation aborts the whole
    expansion, annotated with the invocation's list index.
    """
    now = now or utc_now()
    digest = descriptor_digest(d)
    normalized = []
    for i, inv in enumerate(invs):
        try:
            normalized.append(validate_invocation(d, inv))
        except ValidationError as e:
            e.index = i
            e.args = (f"invocation {i}: {e.args[0]}",)
            raise
    if not normalized:
        log.warning("invocation list is empty; expanding to zero tasks")
    return [_build_task(d, digest, experiment_id, i, inv, now)
            for i, inv in enumerate(normalized)]


def expand_sweep(d: ToolDescriptor, base: dict, sweep: dict, *,
                 experiment_id: str,
                 now: datetime | None = None) -> list[TaskSpec]:
    """Expand the cartesian product of sweep value lists over a base invocation.

    Tasks are ordered lexicographically: sweep keys sorted, then value-list
    index, so re-expansion yields identical ids.
    """
    now = now or utc_now()
    digest = descriptor_digest(d)
    keys = sorted(sweep)
    for key in keys:
        spec = d.input_by_id(key)
        if spec is None:
            raise UnknownInput(key, f"sweep key {key!r} is not a descriptor input")
        if spec.kind == "Flag":
            raise TypeMismatch(key, f"Flag input {key!r} cannot be swept")
        values = sweep[key]
        if not isinstance(values, list) or not values:
            raise SchemaError(f"sweep values for {key!r} must be a non-empty list",
                              field=key)

    normalized = []
    for assignment in itertools.product(*(sweep[k] for k in keys)):
        merged = dict(base)
        merged.update(dict(zip(keys, assignment)))
        normalized.append(validate_invocation(d, merged))
    return [_build_task(d, digest, experiment_id, i, inv, now)
            for i, inv in enumerate(normalized)]


def _bids_participants(bids_dir: Path) -> list[str]:
    labels = sorted(p.name[len("sub-"):] for p in bids_dir.iterdir()
                    if p.is_dir() and p.name.startswith("sub-"))
    if not labels:
        raise NotABidsDir(f"{bids_dir} contains no sub-* directories")
    return labels


def _bids_sessions(bids_dir: Path, participant: str) -> list[str]:
    pdir = bids_dir / f"sub-{participant}"
    return sorted(p.name[len("ses-"):] for p in pdir.iterdir()
                  if p.is_dir() and p.name.startswith("ses-"))


def expand_bids(d: ToolDescriptor, base: dict, bids_dir: Path | str, *,
                participants: list[str] | None = None,
                sessions: list[str] | None = None,
                experiment_id: str,
                now: datetime | None = None) -> list[TaskSpec]:
    """Expand one task per participant (or per participant/session pair).

    With no explicit participant list, participants are discovered as the
    sorted sub-* directory suffixes and sessions are discovered per
    participant; a participant without ses-* directories yields a single
    participant-level task. An explicit participant list runs exactly those
    labels, pairing with sessions only when those are explicit too.
    """
    now = now or utc_now()
    digest = descriptor_digest(d)
    bids_dir = Path(bids_dir)
    if not bids_dir.is_dir():
        raise NotABidsDir(f"{bids_dir} is not a directory")
    if d.input_by_id("participant_label") is None:
        raise SchemaError("descriptor lacks a participant_label input",
                          field="participant_label")

    available = _bids_participants(bids_dir)
    explicit_participants = participants is not None
    if explicit_participants:
        for label in participants:
            if label not in available:
                raise UnknownParticipant(
                    f"participant {label!r} not in dataset (has: {available})")
        chosen = list(participants)
    else:
        chosen = available

    pairs: list[tuple[str, str | None]] = []
    for participant in sorted(chosen):
        if sessions is not None:
            pairs.extend((participant, s) for s in sorted(sessions))
        elif not explicit_participants:
            discovered = _bids_sessions(bids_dir, participant)
            if discovered:
                pairs.extend((participant, s) for s in discovered)
            else:
                pairs.append((participant, None))
        else:
            pairs.append((participant, None))

    uses_sessions = any(s is not None for _, s in pairs)
    if uses_sessions and d.input_by_id("session_label") is None:
        raise SchemaError("descriptor lacks a session_label input",
                          field="session_label")

    normalized = []
    for participant, session in pairs:
        merged = dict(base)
        merged["participant_label"] = participant
        if session is not None:
            merged["session_label"] = session
        normalized.append(validate_invocation(d, merged))
    return [_build_task(d, digest, experiment_id, i, inv, now)
            for i, inv in enumerate(normalized)]


def expand(d: ToolDescriptor, request: ExpansionRequest, *,
           experiment_id: str, now: datetime | None = None) -> list[TaskSpec]:
    """Dispatch an ExpansionRequest to the matching expansion operation."""
    if request.mode is ExpansionMode.INVOCATION_LIST:
        return expand_invocation_list(d, list(request.invocations),
                                      experiment_id=experiment_id, now=now)
    if request.mode is ExpansionMode.SWEEP:
        base = request.invocations[0] if request.invocations else {}
        return expand_sweep(d, base, request.sweep_params,
                            experiment_id=experiment_id, now=now)
    base = request.invocations[0] if request.invocations else {}
    return expand_bids(
        d, base, request.bids_dir,
        participants=list(request.participant_labels)
        if request.participant_labels is not None else None,
        sessions=list(request.session_labels)
        if request.session_labels is not None else None,
        experiment_id=experiment_id, now=now)


def plan_rerun(tasks: list[TaskSpec], records: dict, mode: RerunMode) -> list[TaskSpec]:
    """Select the tasks to re-execute, preserving original ids and order.

    records maps task_id to its latest TaskRecord; absent keys (or None)
    mean the task never produced a record. "Incomplete" covers both
    never-started tasks and tasks whose record lacks a finish timestamp
    (crashed mid-run).
    """
    if mode is RerunMode.FULL:
        planned = list(tasks)
    elif mode is RerunMode.FAILURES_ONLY:
        planned = []
        for task in tasks:
            record = records.get(task.task_id)
            if record is not None and record.exit_code is not None \
                    and record.exit_code != 0:
                planned.append(task)
    else:
        planned = []
        for task in tasks:
            record = records.get(task.task_id)
            if record is None or record.finished_at is None:
                planned.append(task)
    if not planned:
        log.warning("re-execution plan is empty; nothing to do")
    return planned
