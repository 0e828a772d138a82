"""Boutiques-subset tool descriptors.

A descriptor declares a command-line template whose value-keys (``[LABEL]``)
are bound to typed inputs; an invocation assigns concrete values to those
inputs. This module parses and validates both, renders concrete command
lines, and wraps them in Docker or Singularity prefixes.

Descriptor files are UTF-8 JSON with hyphenated keys (``command-line``,
``value-key``, ``default-value`` ...). Unknown top-level keys are preserved
in an opaque extras map and round-trip on re-serialization; recognized but
unimplemented features (input groups, inter-input dependencies) are
rejected loudly instead of being silently dropped.
"""

from __future__ import annotations

import hashlib
import json
import re
import shlex
from dataclasses import dataclass, field

from .errors import (
    ChoiceViolation,
    DescriptorSyntaxError,
    MissingRequired,
    SchemaError,
    TypeMismatch,
    UnknownInput,
    UnresolvedKey,
    UnsupportedFeature,
)

INPUT_ID_RE = re.compile(r"^[A-Za-z0-9_]+$")
VALUE_KEY_RE = re.compile(r"^\[[A-Z0-9_]+\]$")
VALUE_KEY_SCAN_RE = re.compile(r"\[[A-Z0-9_]+\]")

KINDS = ("String", "Number", "Flag", "File")
RUNTIMES = ("docker", "singularity")

# Recognized Boutiques features outside the implemented subset. Their
# presence changes execution semantics, so they fail loudly.
_UNSUPPORTED_TOP_KEYS = ("groups",)
_UNSUPPORTED_INPUT_KEYS = (
    "requires-inputs",
    "disables-inputs",
    "value-requires",
    "value-disables",
)

_INPUT_KEYS = (
    "id",
    "value-key",
    "type",
    "optional",
    "default-value",
    "command-line-flag",
    "value-choices",
    "list",
)


@dataclass(frozen=True)
class InputSpec:
    """One typed input of a tool: a value-key binding plus constraints."""

    id: str
    value_key: str
    kind: str
    optional: bool = False
    default: object | None = None
    command_line_flag: str | None = None
    value_choices: tuple | None = None
    is_list: bool = False
    extras: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ContainerSpec:
    """Container runtime, image reference, and host:container bind mounts."""

    runtime: str  # "docker" | "singularity"
    image: str
    bind_mounts: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class ToolDescriptor:
    """Machine-readable tool definition sufficient to render command lines."""

    name: str
    tool_version: str
    command_line: str
    inputs: tuple[InputSpec, ...]
    container: ContainerSpec | None = None
    output_globs: tuple[str, ...] = ()
    extras: dict = field(default_factory=dict)

    def input_by_id(self, input_id: str) -> InputSpec | None:
        for spec in self.inputs:
            if spec.id == input_id:
                return spec
        return None


def _matches_kind(value: object, kind: str) -> bool:
    if kind == "Flag":
        return isinstance(value, bool)
    if kind == "Number":
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    # String and File are both JSON strings
    return isinstance(value, str)


def _expect(cond: bool, message: str, fieldname: str) -> None:
    if not cond:
        raise SchemaError(message, field=fieldname)


def _parse_input(raw: object, pos: int) -> InputSpec:
    where = f"inputs[{pos}]"
    _expect(isinstance(raw, dict), f"{where} must be an object", where)
    for key in _UNSUPPORTED_INPUT_KEYS:
        if key in raw:
            raise UnsupportedFeature(
                f"{where}.{key} is not supported by this descriptor subset",
                field=f"{where}.{key}",
            )

    input_id = raw.get("id")
    _expect(isinstance(input_id, str) and bool(INPUT_ID_RE.match(input_id)),
            f"{where}.id must match [A-Za-z0-9_]+, got {input_id!r}", f"{where}.id")
    value_key = raw.get("value-key")
    _expect(isinstance(value_key, str) and bool(VALUE_KEY_RE.match(value_key)),
            f"{where}.value-key must match \\[[A-Z0-9_]+\\], got {value_key!r}",
            f"{where}.value-key")
    kind = raw.get("type")
    _expect(kind in KINDS, f"{where}.type must be one of {KINDS}, got {kind!r}",
            f"{where}.type")

    optional = raw.get("optional", False)
    _expect(isinstance(optional, bool), f"{where}.optional must be a boolean",
            f"{where}.optional")
    is_list = raw.get("list", False)
    _expect(isinstance(is_list, bool), f"{where}.list must be a boolean",
            f"{where}.list")
    flag = raw.get("command-line-flag")
    _expect(flag is None or (isinstance(flag, str) and flag != ""),
            f"{where}.command-line-flag must be a non-empty string",
            f"{where}.command-line-flag")

    default = raw.get("default-value")
    choices = raw.get("value-choices")
    if choices is not None:
        _expect(isinstance(choices, list) and len(choices) > 0,
                f"{where}.value-choices must be a non-empty array",
                f"{where}.value-choices")
        for c in choices:
            _expect(_matches_kind(c, kind),
                    f"{where}.value-choices contains {c!r}, not a {kind}",
                    f"{where}.value-choices")

    if kind == "Flag":
        _expect(choices is None, f"{where}: Flag inputs take no value-choices",
                f"{where}.value-choices")
        _expect(default in (None, False),
                f"{where}: Flag inputs may only default to false",
                f"{where}.default-value")
        _expect(not is_list, f"{where}: Flag inputs cannot be lists",
                f"{where}.list")
        _expect(flag is not None,
                f"{where}: Flag inputs require a command-line-flag",
                f"{where}.command-line-flag")
    elif default is not None:
        default_elems = default if (is_list and isinstance(default, list)) else [default]
        for elem in default_elems:
            _expect(_matches_kind(elem, kind),
                    f"{where}.default-value {elem!r} is not a {kind}",
                    f"{where}.default-value")
        if choices is not None:
            for elem in default_elems:
                _expect(elem in choices,
                        f"{where}.default-value {elem!r} not in value-choices",
                        f"{where}.default-value")

    extras = {k: v for k, v in raw.items() if k not in _INPUT_KEYS}
    return InputSpec(
        id=input_id,
        value_key=value_key,
        kind=kind,
        optional=optional,
        default=default,
        command_line_flag=flag,
        value_choices=tuple(choices) if choices is not None else None,
        is_list=is_list,
        extras=extras,
    )


def _parse_container(raw: object) -> ContainerSpec:
    _expect(isinstance(raw, dict), "container-image must be an object",
            "container-image")
    runtime = raw.get("type")
    _expect(isinstance(runtime, str) and runtime.lower() in RUNTIMES,
            f"container-image.type must be one of {RUNTIMES}, got {runtime!r}",
            "container-image.type")
    image = raw.get("image")
    _expect(isinstance(image, str) and image != "",
            "container-image.image must be a non-empty string",
            "container-image.image")
    binds = raw.get("binds", [])
    _expect(isinstance(binds, list), "container-image.binds must be an array",
            "container-image.binds")
    mounts = []
    for i, b in enumerate(binds):
        if isinstance(b, str) and b.count(":") == 1:
            host, cont = b.split(":")
        elif isinstance(b, list) and len(b) == 2:
            host, cont = b
        else:
            raise SchemaError(
                f"container-image.binds[{i}] must be 'host:container' or a pair",
                field=f"container-image.binds[{i}]",
            )
        _expect(isinstance(host, str) and host.startswith("/")
                and isinstance(cont, str) and cont.startswith("/"),
                f"container-image.binds[{i}] paths must be absolute",
                f"container-image.binds[{i}]")
        mounts.append((host, cont))
    return ContainerSpec(runtime=runtime.lower(), image=image,
                         bind_mounts=tuple(mounts))


_TOP_KEYS = ("name", "tool-version", "command-line", "inputs",
             "container-image", "output-files")


def parse_descriptor(raw: str) -> ToolDescriptor:
    """Parse and validate a descriptor from JSON text.

    Raises DescriptorSyntaxError for malformed JSON and SchemaError (naming
    the offending field) for schema violations: unbound or duplicated
    value-keys, bad id patterns, kind/default mismatches.
    """
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as e:
        raise DescriptorSyntaxError(f"descriptor is not valid JSON: {e}") from e
    _expect(isinstance(doc, dict), "descriptor must be a JSON object", "<root>")

    for key in _UNSUPPORTED_TOP_KEYS:
        if key in doc:
            raise UnsupportedFeature(
                f"descriptor key {key!r} is not supported by this subset",
                field=key,
            )

    name = doc.get("name")
    _expect(isinstance(name, str) and name != "", "name must be a non-empty string",
            "name")
    tool_version = doc.get("tool-version", "")
    _expect(isinstance(tool_version, str), "tool-version must be a string",
            "tool-version")
    command_line = doc.get("command-line")
    _expect(isinstance(command_line, str) and command_line.strip() != "",
            "command-line must be a non-empty string", "command-line")

    raw_inputs = doc.get("inputs", [])
    _expect(isinstance(raw_inputs, list), "inputs must be an array", "inputs")
    inputs = tuple(_parse_input(r, i) for i, r in enumerate(raw_inputs))

    seen_ids: set[str] = set()
    for spec in inputs:
        _expect(spec.id not in seen_ids, f"duplicate input id {spec.id!r}",
                "inputs")
        seen_ids.add(spec.id)

    # every template key must bind to exactly one input, and each input's
    # key may appear at most once in the template
    keys_in_template = VALUE_KEY_SCAN_RE.findall(command_line)
    key_owners: dict[str, str] = {}
    for spec in inputs:
        if spec.value_key in key_owners:
            raise SchemaError(
                f"value-key {spec.value_key} bound by both "
                f"{key_owners[spec.value_key]!r} and {spec.id!r}",
                field="inputs",
            )
        key_owners[spec.value_key] = spec.id
    for key in keys_in_template:
        if key not in key_owners:
            raise SchemaError(f"{key} unbound", field="command-line")
    for key in set(keys_in_template):
        _expect(keys_in_template.count(key) <= 1,
                f"value-key {key} appears more than once in command-line",
                "command-line")

    container = None
    if doc.get("container-image") is not None:
        container = _parse_container(doc["container-image"])

    raw_outputs = doc.get("output-files", [])
    _expect(isinstance(raw_outputs, list), "output-files must be an array",
            "output-files")
    globs = []
    for i, out in enumerate(raw_outputs):
        _expect(isinstance(out, dict) and isinstance(out.get("path-template"), str),
                f"output-files[{i}].path-template must be a string",
                f"output-files[{i}]")
        globs.append(out["path-template"])

    extras = {k: v for k, v in doc.items() if k not in _TOP_KEYS}
    return ToolDescriptor(
        name=name,
        tool_version=tool_version,
        command_line=command_line,
        inputs=inputs,
        container=container,
        output_globs=tuple(globs),
        extras=extras,
    )


def serialize_descriptor(d: ToolDescriptor) -> dict:
    """Re-serialize a descriptor to its JSON document form (round-trips)."""
    doc: dict = {
        "name": d.name,
        "tool-version": d.tool_version,
        "command-line": d.command_line,
        "inputs": [],
    }
    for spec in d.inputs:
        entry: dict = {
            "id": spec.id,
            "value-key": spec.value_key,
            "type": spec.kind,
            "optional": spec.optional,
            "list": spec.is_list,
        }
        if spec.default is not None:
            entry["default-value"] = spec.default
        if spec.command_line_flag is not None:
            entry["command-line-flag"] = spec.command_line_flag
        if spec.value_choices is not None:
            entry["value-choices"] = list(spec.value_choices)
        entry.update(spec.extras)
        doc["inputs"].append(entry)
    if d.container is not None:
        doc["container-image"] = {
            "type": d.container.runtime,
            "image": d.container.image,
            "binds": [f"{h}:{c}" for h, c in d.container.bind_mounts],
        }
    if d.output_globs:
        doc["output-files"] = [{"path-template": g} for g in d.output_globs]
    doc.update(d.extras)
    return doc


def descriptor_digest(d: ToolDescriptor) -> str:
    """Content hash of the descriptor, stable across JSON formatting."""
    canonical = json.dumps(serialize_descriptor(d), sort_keys=True,
                           separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def parse_invocation(raw: str) -> dict:
    """Parse an invocation file: a JSON object mapping input id to value."""
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as e:
        raise DescriptorSyntaxError(f"invocation is not valid JSON: {e}") from e
    if not isinstance(doc, dict):
        raise SchemaError("invocation must be a JSON object", field="<root>")
    return doc


def validate_invocation(d: ToolDescriptor, inv: dict) -> dict:
    """Validate values against the descriptor and return a normalized copy.

    Normalization fills defaults for absent optional inputs (Flags default
    to false), wraps scalars given for list inputs, and orders keys by
    descriptor input order. Validating an already-normalized invocation
    returns it unchanged.
    """
    known = {spec.id for spec in d.inputs}
    for input_id in inv:
        if input_id not in known:
            raise UnknownInput(input_id, f"unknown input {input_id!r}")

    normalized: dict = {}
    for spec in d.inputs:
        if spec.id in inv:
            value = inv[spec.id]
        elif spec.kind == "Flag":
            value = False
        elif spec.default is not None:
            value = spec.default
        elif not spec.optional:
            raise MissingRequired(spec.id, f"missing required input {spec.id!r}")
        else:
            continue  # absent optional input renders as empty

        if spec.is_list:
            elems = value if isinstance(value, list) else [value]
            if not elems:
                raise TypeMismatch(spec.id,
                                   f"input {spec.id!r} requires at least one value")
            for elem in elems:
                if not _matches_kind(elem, spec.kind):
                    raise TypeMismatch(
                        spec.id, f"input {spec.id!r} expects {spec.kind} values, "
                                 f"got {elem!r}")
            value = list(elems)
        else:
            if isinstance(value, list):
                raise TypeMismatch(spec.id, f"input {spec.id!r} is not a list input")
            if not _matches_kind(value, spec.kind):
                raise TypeMismatch(
                    spec.id,
                    f"input {spec.id!r} expects a {spec.kind}, got {value!r}")

        if spec.value_choices is not None:
            elems = value if isinstance(value, list) else [value]
            for elem in elems:
                if elem not in spec.value_choices:
                    raise ChoiceViolation(
                        spec.id,
                        f"input {spec.id!r} value {elem!r} not in "
                        f"{list(spec.value_choices)}")

        normalized[spec.id] = value
    return normalized


def _format_scalar(value: object) -> str:
    if isinstance(value, bool):  # only reachable for Flag, handled separately
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    return str(value)


def _render_value(spec: InputSpec, value: object) -> str:
    if spec.kind == "Flag":
        return spec.command_line_flag if value else ""
    if isinstance(value, list):
        rendered = " ".join(shlex.quote(_format_scalar(v)) for v in value)
    else:
        rendered = shlex.quote(_format_scalar(value))
    if spec.command_line_flag is not None and rendered:
        return f"{spec.command_line_flag} {rendered}"
    return rendered


def _collapse_whitespace(s: str) -> str:
    """Collapse runs of spaces/tabs outside quotes to single spaces."""
    out: list[str] = []
    quote: str | None = None
    pending = False
    for ch in s:
        if quote is not None:
            out.append(ch)
            if ch == quote:
                quote = None
        elif ch in " \t":
            pending = True
        else:
            if pending and out:
                out.append(" ")
            pending = False
            if ch in "'\"":
                quote = ch
            out.append(ch)
    return "".join(out)


def render_command(d: ToolDescriptor, inv: dict) -> str:
    """Render the concrete command line for a validated invocation.

    Pure function of (descriptor, invocation): identical inputs give
    byte-identical output. Values containing whitespace are quoted so the
    result splits back into the intended argument vector.
    """
    rendered = d.command_line
    for spec in d.inputs:
        if spec.id in inv:
            replacement = _render_value(spec, inv[spec.id])
        else:
            replacement = ""
        rendered = rendered.replace(spec.value_key, replacement, 1)
    for spec in d.inputs:
        if spec.value_key in rendered:
            raise UnresolvedKey(
                f"value-key {spec.value_key} survived rendering of {d.name!r}")
    return _collapse_whitespace(rendered).strip()


def _single_quote(cmd: str) -> str:
    """POSIX single-quote escaping: embed cmd so a shell sees it verbatim."""
    return "'" + cmd.replace("'", "'\\''") + "'"


def containerize_command(c: ContainerSpec, cmd: str, workdir: str) -> str:
    """Wrap a rendered command in a Docker or Singularity run prefix.

    Bind mounts are emitted in descriptor order; the command is embedded
    with single-quote escaping so the container shell sees it verbatim.
    """
    if not cmd:
        raise ValueError("cannot containerize an empty command")
    parts: list[str]
    if c.runtime == "docker":
        parts = ["docker", "run", "--rm"]
        for host, cont in c.bind_mounts:
            parts += ["-v", f"{host}:{cont}"]
        parts += ["-w", workdir, c.image, "sh", "-c", _single_quote(cmd)]
    else:
        parts = ["singularity", "exec"]
        for host, cont in c.bind_mounts:
            parts += ["-B", f"{host}:{cont}"]
        parts += ["--pwd", workdir, c.image, "sh", "-c", _single_quote(cmd)]
    return " ".join(parts)
