"""HTTP portal endpoints and the static export path."""

from __future__ import annotations

import json
import threading
import time
import urllib.error
import urllib.request

import pytest

from muster.portal import export_static, make_server
from muster.provenance import consolidate, filter_rows
from muster.errors import PortInUse

from .conftest import fabricate_record, make_experiment


@pytest.fixture
def experiment(tmp_path):
    clowdir = tmp_path / "exp"
    make_experiment(clowdir, ["true"] * 5,
                    invocations=[{"participant_label": [f"10020{6 + i}"],
                                  "analysis_level": "participant"}
                                 for i in range(5)])
    peaks = [500, 100, 900, 300, 700]
    for i in range(4):  # task 4 stays incomplete
        fabricate_record(clowdir, f"task-{i:05d}",
                         exit_code=1 if i == 1 else 0,
                         samples=[(0.5, 10.0, peaks[i] // 2),
                                  (1.0, 30.0, peaks[i])])
        (clowdir / f"task-{i:05d}" / "stdout.log").write_bytes(
            f"out-{i}\n".encode())
    return clowdir


@pytest.fixture
def portal(experiment):
    server = make_server(experiment, port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{server.server_address[1]}"
    yield base, experiment
    server.shutdown()
    server.server_close()


def get(url: str):
    with urllib.request.urlopen(url) as resp:
        return resp.status, resp.read(), resp.headers.get("Content-Type", "")


def get_json(url: str):
    status, body, _ = get(url)
    return status, json.loads(body)


def test_healthz(portal):
    base, _ = portal
    status, doc = get_json(f"{base}/healthz")
    assert status == 200 and doc == {"status": "ok"}


def test_experiment_endpoint_matches_disk(portal):
    base, clowdir = portal
    status, doc = get_json(f"{base}/api/experiment")
    assert status == 200
    assert doc["stale"] is False
    counts = doc["data"]["counts"]
    assert counts == {"running": 0, "succeeded": 3, "failed": 1,
                      "incomplete": 1}


def test_experiment_recomputes_when_record_newer(portal):
    base, clowdir = portal
    get_json(f"{base}/api/experiment")  # populate summary.json
    time.sleep(0.05)
    fabricate_record(clowdir, "task-00004", exit_code=0)
    _, doc = get_json(f"{base}/api/experiment")
    assert doc["data"]["counts"]["succeeded"] == 4
    assert doc["data"]["counts"]["incomplete"] == 0


def test_missing_experiment_404(tmp_path):
    server = make_server(tmp_path, port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        with pytest.raises(urllib.error.HTTPError) as err:
            get(f"http://127.0.0.1:{server.server_address[1]}/api/experiment")
        assert err.value.code == 404
    finally:
        server.shutdown()
        server.server_close()


def test_tasks_status_filter(portal):
    base, clowdir = portal
    _, doc = get_json(f"{base}/api/tasks?status=failed")
    assert [r["task_id"] for r in doc["data"]] == ["task-00001"]
    # agrees with filter_rows on the same summary
    rows = consolidate(clowdir).task_rows
    expected = filter_rows(rows, [("status", "eq", "failed")])
    assert [r.task_id for r in expected] == ["task-00001"]


def test_tasks_param_filter(portal):
    base, _ = portal
    _, doc = get_json(f"{base}/api/tasks?participant_label=100206")
    assert [r["task_id"] for r in doc["data"]] == ["task-00000"]


def test_tasks_sort_and_limit(portal):
    base, clowdir = portal
    _, doc = get_json(f"{base}/api/tasks?sort=-peak_rss_bytes&limit=2")
    got = [r["task_id"] for r in doc["data"]]
    rows = consolidate(clowdir).task_rows
    oracle = sorted((r for r in rows if r.peak_rss_bytes is not None),
                    key=lambda r: r.peak_rss_bytes, reverse=True)[:2]
    assert got == [r.task_id for r in oracle]


def test_tasks_operator_suffix(portal):
    base, _ = portal
    _, doc = get_json(f"{base}/api/tasks?exit_code__ne=0")
    assert [r["task_id"] for r in doc["data"]] == ["task-00001"]


def test_tasks_unknown_field_400(portal):
    base, _ = portal
    with pytest.raises(urllib.error.HTTPError) as err:
        get(f"{base}/api/tasks?nope=1")
    assert err.value.code == 400
    assert "nope" in json.loads(err.value.read())["error"]


def test_tasks_bad_operator_400(portal):
    base, _ = portal
    with pytest.raises(urllib.error.HTTPError) as err:
        get(f"{base}/api/tasks?status__like=x")
    assert err.value.code == 400


def test_usage_series(portal):
    base, _ = portal
    _, doc = get_json(f"{base}/api/tasks/task-00000/usage")
    ts = [s[0] for s in doc["data"]["samples"]]
    assert ts == sorted(ts) and len(ts) == 2
    assert doc["data"]["attempt"] == 1


def test_usage_unknown_task_404(portal):
    base, _ = portal
    with pytest.raises(urllib.error.HTTPError) as err:
        get(f"{base}/api/tasks/task-99999/usage")
    assert err.value.code == 404


def test_logs_exact_and_tail(portal):
    base, _ = portal
    status, body, ctype = get(f"{base}/api/tasks/task-00002/logs/stdout")
    assert status == 200 and body == b"out-2\n"
    assert ctype.startswith("text/plain")
    _, tail, _ = get(f"{base}/api/tasks/task-00002/logs/stdout?tail=3")
    assert tail == b"-2\n"
    status, empty, _ = get(f"{base}/api/tasks/task-00000/logs/stderr")
    assert status == 200 and empty == b""


def test_logs_unknown_stream_404(portal):
    base, _ = portal
    with pytest.raises(urllib.error.HTTPError) as err:
        get(f"{base}/api/tasks/task-00000/logs/stdlog")
    assert err.value.code == 404


def test_fallback_index_and_config(portal):
    base, _ = portal
    status, body, ctype = get(f"{base}/")
    assert status == 200 and b"muster portal" in body
    status, body, _ = get(f"{base}/config.js")
    assert b'"live"' in body


def test_consolidation_failure_without_summary_is_500(tmp_path):
    clowdir = tmp_path / "broken"
    clowdir.mkdir()
    # manifest parses but its task list is malformed, so consolidation blows up
    (clowdir / "experiment.json").write_text(json.dumps(
        {"experiment_id": "e", "descriptor_digest": "0", "tasks": {"oops": 1}}))
    server = make_server(clowdir, port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        with pytest.raises(urllib.error.HTTPError) as err:
            get(f"http://127.0.0.1:{server.server_address[1]}/api/experiment")
        assert err.value.code == 500
        assert "error" in json.loads(err.value.read())
    finally:
        server.shutdown()
        server.server_close()


def test_stale_summary_served_when_recompute_fails(tmp_path, experiment):
    # a good summary exists; then the manifest becomes unreadable and a new
    # record marks it stale: the portal serves the old summary flagged stale
    server = make_server(experiment, port=0)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    base = f"http://127.0.0.1:{server.server_address[1]}"
    try:
        first = get_json(f"{base}/api/experiment")[1]
        assert first["stale"] is False
        time.sleep(0.05)
        fabricate_record(experiment, "task-00004", exit_code=0)
        (experiment / "experiment.json").write_text('{"tasks": {"bad": 1}, '
                                                    '"experiment_id": "e", '
                                                    '"descriptor_digest": "0"}')
        status, doc = get_json(f"{base}/api/experiment")
        assert status == 200
        assert doc["stale"] is True
        assert doc["diagnostics"]
    finally:
        server.shutdown()
        server.server_close()


def test_port_in_use(tmp_path, experiment):
    server = make_server(experiment, port=0)
    try:
        with pytest.raises(PortInUse):
            make_server(experiment, port=server.server_address[1])
    finally:
        server.server_close()


# --- static export --------------------------------------------------------------

def test_export_layout_and_manifest(experiment, tmp_path):
    out = tmp_path / "bundle"
    manifest = export_static(experiment, out)
    assert not manifest["errors"]
    usage_files = [f for f in manifest["files"] if f.startswith("data/usage/")]
    assert len(usage_files) == 5
    assert (out / "data" / "experiment.json").is_file()
    assert (out / "data" / "tasks.json").is_file()
    assert (out / "config.js").read_text().strip() == \
        'window.MUSTER_DATA_SOURCE = "static";'
    doc = json.loads((out / "data" / "experiment.json").read_text())
    assert "stale" not in doc
    assert doc["data"]["counts"]["succeeded"] == 3


def test_export_reexport_byte_identical(experiment, tmp_path):
    consolidate(experiment)  # quiesce: summary fresh before both exports
    out1 = tmp_path / "b1"
    out2 = tmp_path / "b2"
    export_static(experiment, out1)
    export_static(experiment, out2)
    for rel in ("data/experiment.json", "data/tasks.json",
                "data/usage/task-00000.json", "data/manifest.json"):
        assert (out1 / rel).read_bytes() == (out2 / rel).read_bytes(), rel


def test_export_logs_copied(experiment, tmp_path):
    out = tmp_path / "bundle"
    export_static(experiment, out)
    assert (out / "data" / "logs" / "task-00002" / "stdout.log").read_bytes() \
        == b"out-2\n"


def test_export_includes_assets_when_given(experiment, tmp_path):
    assets = tmp_path / "assets"
    assets.mkdir()
    (assets / "index.html").write_text("<html>dash</html>")
    (assets / "app.js").write_text("console.log(1)")
    (assets / "config.js").write_text("window.MUSTER_DATA_SOURCE = 'live';")
    out = tmp_path / "bundle"
    export_static(experiment, out, assets_dir=assets)
    assert (out / "index.html").read_text() == "<html>dash</html>"
    assert (out / "app.js").is_file()
    # live config never leaks into a static bundle
    assert "static" in (out / "config.js").read_text()
