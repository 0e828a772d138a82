"""Small shared helpers: UTC timestamps, RFC 3339, atomic file writes."""

from __future__ import annotations

import json
import os
import tempfile
from datetime import datetime, timezone
from pathlib import Path


def utc_now() -> datetime:
    return datetime.now(timezone.utc)


def to_rfc3339(dt: datetime) -> str:
    """Render a timestamp as RFC 3339 UTC (e.g. 2018-08-08T14:03:07.100000+00:00)."""
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).isoformat()


def from_rfc3339(s: str) -> datetime:
    return datetime.fromisoformat(s)


def atomic_write_bytes(path: Path | str, data: bytes) -> None:
    """Write via a temp file in the same directory plus rename.

    Readers only ever observe the pre-rename or post-rename file, never a
    truncated intermediate, including on shared filesystems.
    """
    path = Path(path)
    fd, tmp = tempfile.mkstemp(prefix=path.name + ".", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def atomic_write_text(path: Path | str, text: str) -> None:
    atomic_write_bytes(path, text.encode("utf-8"))


def atomic_write_json(path: Path | str, obj: object) -> None:
    atomic_write_bytes(path, (json.dumps(obj, indent=2) + "\n").encode("utf-8"))


def read_json(path: Path | str) -> object:
    with open(path, "r", encoding="utf-8") as fh:
        return json.load(fh)
