"""Read-only HTTP interface over a provenance directory.

Serves the consolidated summary, filterable task rows, per-task usage
series, raw logs, and the dashboard's static assets. The only write is the
summary.json refresh: when any record is newer than the served summary,
one consolidation pass runs (serialized by a lock) before responding. A
static export writes the same payloads as plain files so the bundle opens
without any server.

HTTP surface:
    GET /healthz
    GET /api/experiment
    GET /api/tasks?status=...&<field>=...&<field>__<op>=...&sort=...&limit=&offset=
    GET /api/tasks/{id}/usage
    GET /api/tasks/{id}/logs/{stream}?tail=<bytes>
    GET /            (dashboard assets; config.js declares the live data source)
"""

from __future__ import annotations

import json
import logging
import mimetypes
import shutil
import threading
import urllib.parse
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path

from .errors import (
    BadOperator,
    MusterError,
    NotAnExperimentDir,
    PortInUse,
    UnknownField,
)
from .layout import find_record_paths, task_dir
from .provenance import (
    ExperimentSummary,
    consolidate,
    filter_rows,
    manifest_path,
    read_manifest,
    sort_rows,
    summary_path,
)
from .sentinel import read_record
from .util import read_json, to_rfc3339, utc_now

log = logging.getLogger(__name__)

_FALLBACK_INDEX = """<!doctype html>
<html><head><meta charset="utf-8"><title>muster portal</title></head>
<body>
<h1>muster portal</h1>
<p>No dashboard assets are installed. The JSON API is live:</p>
<ul>
<li><a href="/api/experiment">/api/experiment</a></li>
<li><a href="/api/tasks">/api/tasks</a></li>
<li>/api/tasks/{id}/usage</li>
<li>/api/tasks/{id}/logs/{stdout|stderr}</li>
</ul>
</body></html>
"""

LIVE_CONFIG_JS = 'window.MUSTER_DATA_SOURCE = "live";\n'
STATIC_CONFIG_JS = 'window.MUSTER_DATA_SOURCE = "static";\n'


class PortalState:
    """Freshness-aware access to one experiment directory."""

    def __init__(self, clowdir: Path | str, assets_dir: Path | str | None = None):
        self.clowdir = Path(clowdir)
        self.assets_dir = Path(assets_dir) if assets_dir else None
        self._lock = threading.Lock()

    def _summary_is_fresh(self) -> bool:
        spath = summary_path(self.clowdir)
        if not spath.is_file():
            return False
        summary_mtime = spath.stat().st_mtime
        inputs = [manifest_path(self.clowdir)]
        inputs += self.clowdir.glob("task-*/record*.json")
        for path in inputs:
            try:
                if path.stat().st_mtime > summary_mtime:
                    return False
            except OSError:
                continue
        return True

    def freshest_summary(self) -> tuple[dict, bool, str | None]:
        """(summary document, stale flag, diagnostics).

        Reuses summary.json when nothing is newer; otherwise recomputes
        under the lock. A failed recompute serves the previous summary
        with stale=true rather than an error, if one exists.
        """
        if not manifest_path(self.clowdir).is_file():
            raise NotAnExperimentDir(f"{self.clowdir} has no experiment manifest")
        with self._lock:
            if self._summary_is_fresh():
                doc = read_json(summary_path(self.clowdir))
                if isinstance(doc, dict):
                    return doc, False, None
            try:
                return consolidate(self.clowdir).to_json_dict(), False, None
            except NotAnExperimentDir:
                raise
            except Exception as e:
                spath = summary_path(self.clowdir)
                if spath.is_file():
                    doc = read_json(spath)
                    if isinstance(doc, dict):
                        log.warning("serving stale summary: %s", e)
                        return doc, True, str(e)
                raise

    def summary(self) -> ExperimentSummary:
        doc, _, _ = self.freshest_summary()
        return ExperimentSummary.from_json_dict(doc)

    def task_ids(self) -> list[str]:
        return [entry["task_id"] for entry in read_manifest(self.clowdir)["tasks"]]

    def latest_record(self, task_id: str):
        paths = find_record_paths(task_dir(self.clowdir, task_id))
        if not paths:
            return None
        return read_record(paths[max(paths)])


def envelope(data: object, stale: bool = False,
             diagnostics: str | None = None) -> dict:
    doc: dict = {"data": data, "generated_at": to_rfc3339(utc_now())}
    if stale:
        doc["stale"] = True
        doc["diagnostics"] = diagnostics or ""
    else:
        doc["stale"] = False
    return doc


_RESERVED_QUERY_KEYS = ("sort", "limit", "offset")


def parse_task_query(query: str) -> tuple[list[tuple[str, str, str]], str | None,
                                          int | None, int]:
    """Parse /api/tasks query into (predicates, sort, limit, offset).

    `field=value` means eq; `field__op=value` selects the operator.
    """
    parsed = urllib.parse.parse_qs(query, keep_blank_values=True)
    predicates: list[tuple[str, str, str]] = []
    sort = None
    limit = None
    offset = 0
    for key, values in parsed.items():
        value = values[0]
        if key == "sort":
            sort = value
        elif key == "limit":
            limit = int(value)
        elif key == "offset":
            offset = int(value)
        elif "__" in key:
            fieldname, op = key.rsplit("__", 1)
            predicates.append((fieldname, op, value))
        else:
            predicates.append((key, "eq", value))
    return predicates, sort, limit, offset


def query_rows(summary: ExperimentSummary, query: str) -> list[dict]:
    """Filter, sort, and paginate task rows exactly like filter_rows/sort_rows."""
    predicates, sort, limit, offset = parse_task_query(query)
    rows = filter_rows(summary.task_rows, predicates)
    if sort:
        rows = sort_rows(rows, sort)
    rows = rows[offset:]
    if limit is not None:
        rows = rows[:limit]
    return [row.to_json_dict() for row in rows]


class PortalHandler(BaseHTTPRequestHandler):
    server_version = "muster-portal"

    @property
    def state(self) -> PortalState:
        return self.server.state  # type: ignore[attr-defined]

    def log_message(self, fmt, *args):  # route access noise to debug logging
        log.debug("%s " + fmt, self.address_string(), *args)

    def _send_json(self, obj: object, status: int = 200) -> None:
        body = json.dumps(obj).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _send_error_json(self, status: int, message: str) -> None:
        self._send_json({"error": message}, status=status)

    def _send_bytes(self, data: bytes, content_type: str,
                    status: int = 200) -> None:
        self.send_response(status)
        self.send_header("Content-Type", content_type)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def do_GET(self):  # noqa: N802  (http.server API)
        try:
            self._route()
        except BrokenPipeError:
            pass
        except NotAnExperimentDir as e:
            self._send_error_json(404, str(e))
        except (UnknownField, BadOperator) as e:
            self._send_error_json(400, str(e))
        except MusterError as e:
            self._send_error_json(500, str(e))
        except Exception as e:
            log.exception("portal request failed")
            self._send_error_json(500, f"internal error: {e}")

    def _route(self) -> None:
        parsed = urllib.parse.urlsplit(self.path)
        parts = [p for p in parsed.path.split("/") if p]

        if parsed.path == "/healthz":
            self._send_json({"status": "ok"})
        elif parsed.path == "/api/experiment":
            doc, stale, diagnostics = self.state.freshest_summary()
            self._send_json(envelope(doc, stale, diagnostics))
        elif parsed.path == "/api/tasks":
            summary = self.state.summary()
            self._send_json(envelope(query_rows(summary, parsed.query)))
        elif len(parts) == 4 and parts[:2] == ["api", "tasks"] and parts[3] == "usage":
            self._usage(parts[2])
        elif len(parts) == 5 and parts[:2] == ["api", "tasks"] and parts[3] == "logs":
            self._logs(parts[2], parts[4], parsed.query)
        elif parsed.path == "/config.js":
            self._send_bytes(LIVE_CONFIG_JS.encode(), "application/javascript")
        else:
            self._static(parsed.path)

    def _usage(self, task_id: str) -> None:
        if task_id not in self.state.task_ids():
            self._send_error_json(404, f"unknown task {task_id!r}")
            return
        record = self.state.latest_record(task_id)
        samples = [] if record is None else \
            [[s.t, s.cpu_pct, s.rss_bytes] for s in record.samples]
        attempt = None if record is None else record.attempt
        self._send_json(envelope(
            {"task_id": task_id, "attempt": attempt, "samples": samples}))

    def _logs(self, task_id: str, stream: str, query: str) -> None:
        if stream not in ("stdout", "stderr"):
            self._send_error_json(404, f"unknown stream {stream!r}")
            return
        if task_id not in self.state.task_ids():
            self._send_error_json(404, f"unknown task {task_id!r}")
            return
        record = self.state.latest_record(task_id)
        if record is None:
            self._send_error_json(404, f"no record yet for {task_id}")
            return
        rel = record.stdout_path if stream == "stdout" else record.stderr_path
        path = self.state.clowdir / rel
        if not path.is_file():
            self._send_error_json(404, f"log file {rel} missing")
            return
        data = path.read_bytes()
        params = urllib.parse.parse_qs(query)
        if "tail" in params:
            data = data[-int(params["tail"][0]):]
        self._send_bytes(data, "text/plain; charset=utf-8")

    def _static(self, path: str) -> None:
        if path in ("", "/"):
            path = "/index.html"
        assets = self.state.assets_dir
        if assets is None:
            if path == "/index.html":
                self._send_bytes(_FALLBACK_INDEX.encode(), "text/html; charset=utf-8")
            else:
                self._send_error_json(404, f"no asset {path!r}")
            return
        target = (assets / path.lstrip("/")).resolve()
        if not str(target).startswith(str(assets.resolve())) or not target.is_file():
            self._send_error_json(404, f"no asset {path!r}")
            return
        ctype = mimetypes.guess_type(target.name)[0] or "application/octet-stream"
        self._send_bytes(target.read_bytes(), ctype)


def make_server(clowdir: Path | str, host: str = "127.0.0.1", port: int = 8383,
                assets_dir: Path | str | None = None) -> ThreadingHTTPServer:
    """Bind the portal; raises PortInUse when the address is taken."""
    state = PortalState(clowdir, assets_dir)
    try:
        server = ThreadingHTTPServer((host, port), PortalHandler)
    except OSError as e:
        raise PortInUse(f"cannot bind {host}:{port}: {e}") from e
    server.state = state  # type: ignore[attr-defined]
    server.daemon_threads = True
    return server


def export_static(clowdir: Path | str, outdir: Path | str,
                  assets_dir: Path | str | None = None) -> dict:
    """Write a server-free snapshot: data files plus dashboard assets.

    Layout mirrors the live API: data/experiment.json, data/tasks.json,
    data/usage/<task_id>.json, data/logs/<task_id>/<stream>.log. Payload
    envelopes match the live responses except the stale flag is absent,
    and their generated_at is the summary's, so re-exporting an unchanged
    directory is byte-identical. Per-file I/O errors are collected, not
    fatal; the returned manifest lists written files and errors, and is
    also saved as data/manifest.json.
    """
    state = PortalState(clowdir, assets_dir)
    outdir = Path(outdir)
    files: list[str] = []
    errors: list[str] = []

    def _put(relpath: str, payload: bytes) -> None:
        target = outdir / relpath
        try:
            target.parent.mkdir(parents=True, exist_ok=True)
            target.write_bytes(payload)
            files.append(relpath)
        except OSError as e:
            errors.append(f"{relpath}: {e}")

    doc, _, _ = state.freshest_summary()
    summary = ExperimentSummary.from_json_dict(doc)
    as_of = doc.get("generated_at", to_rfc3339(utc_now()))

    def _put_json(relpath: str, data: object) -> None:
        _put(relpath, (json.dumps({"data": data, "generated_at": as_of},
                                  indent=2) + "\n").encode("utf-8"))

    _put_json("data/experiment.json", doc)
    _put_json("data/tasks.json", [r.to_json_dict() for r in summary.task_rows])

    for task_id in state.task_ids():
        record = None
        try:
            record = state.latest_record(task_id)
        except Exception as e:
            errors.append(f"data/usage/{task_id}.json: {e}")
        samples = [] if record is None else \
            [[s.t, s.cpu_pct, s.rss_bytes] for s in record.samples]
        attempt = None if record is None else record.attempt
        _put_json(f"data/usage/{task_id}.json",
                  {"task_id": task_id, "attempt": attempt, "samples": samples})
        if record is not None:
            for stream, rel in (("stdout", record.stdout_path),
                                ("stderr", record.stderr_path)):
                src = Path(clowdir) / rel
                if src.is_file():
                    _put(f"data/logs/{task_id}/{stream}.log", src.read_bytes())

    if assets_dir is not None and Path(assets_dir).is_dir():
        for src in sorted(Path(assets_dir).rglob("*")):
            if src.is_file() and src.name != "config.js":
                rel = src.relative_to(assets_dir)
                try:
                    dest = outdir / rel
                    dest.parent.mkdir(parents=True, exist_ok=True)
                    shutil.copyfile(src, dest)
                    files.append(str(rel))
                except OSError as e:
                    errors.append(f"{rel}: {e}")
    else:
        _put("index.html", _FALLBACK_INDEX.encode())
    _put("config.js", STATIC_CONFIG_JS.encode())

    manifest = {"files": sorted(files), "errors": errors}
    _put_json("data/manifest.json", manifest)
    return manifest
