"""Command-line entry point: run, rerun, status, share, sentinel.

Human-readable output goes to stderr; stdout carries only machine output
(the clowdir path after a run, --json dumps). Exit codes are stable:
0 success, 2 usage, 3 schema/validation, 4 dispatch, 5 I/O. Dispatch
success is not task success: a run whose tasks failed still exits 0, and
`status` is the truth source for task outcomes.

Every flag can also come from an environment variable (MUSTER_<FLAG>) or
from a `muster.json` config file in the clowdir root; precedence is
flag > environment > config file > built-in default.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import secrets
import sys
import time
from pathlib import Path

from . import __version__
from .descriptor import descriptor_digest, parse_descriptor, parse_invocation
from .errors import (
    DescriptorSyntaxError,
    LockError,
    MusterError,
    NotABidsDir,
    NotAnExperimentDir,
    OutputDirError,
    PortInUse,
    SchemaError,
    StageError,
    SubmitError,
    TemplateError,
    UnknownParticipant,
    ValidationError,
)
from .layout import DESCRIPTOR_NAME
from .portal import export_static, make_server
from .provenance import (
    consolidate,
    load_latest_records,
    load_task_specs,
    read_manifest,
    write_manifest,
    write_task_specs,
)
from .runner import (
    Backend,
    BackendConfig,
    run_local,
    run_staged,
    stage_remote,
    submit_cluster,
)
from .sentinel import DEFAULT_INTERVAL, supervise
from .taskgen import (
    ExpansionMode,
    ExpansionRequest,
    RerunMode,
    TaskSpec,
    expand,
    plan_rerun,
)
from .util import read_json, utc_now

log = logging.getLogger("muster")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_SCHEMA = 3
EXIT_DISPATCH = 4
EXIT_IO = 5

CONFIG_NAME = "muster.json"
ENV_PREFIX = "MUSTER_"


def _load_config(clowdir: Path | None) -> dict:
    if clowdir is None:
        return {}
    path = Path(clowdir) / CONFIG_NAME
    if not path.is_file():
        return {}
    try:
        doc = read_json(path)
        return doc if isinstance(doc, dict) else {}
    except (OSError, json.JSONDecodeError) as e:
        log.warning("ignoring unreadable config %s: %s", path, e)
        return {}


def _resolve(name: str, flag_value, config: dict, default, cast=None):
    """flag > MUSTER_<NAME> env > config-file key > default."""
    if flag_value is not None:
        return flag_value
    env = os.environ.get(ENV_PREFIX + name.upper().replace("-", "_"))
    if env is not None:
        return cast(env) if cast else env
    if name in config:
        value = config[name]
        return cast(value) if cast else value
    return default


def _configure_logging(verbosity: str) -> None:
    level = {"quiet": logging.ERROR, "normal": logging.INFO,
             "debug": logging.DEBUG}[verbosity]
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(levelname)s %(name)s: %(message)s")


def _new_experiment_id() -> str:
    return f"exp-{time.strftime('%Y%m%d-%H%M%S')}-{secrets.token_hex(3)}"


def _read_text(path: str) -> str:
    return Path(path).read_text(encoding="utf-8")


def _build_request(args, base_invocations: list[dict]) -> ExpansionRequest:
    if args.sweep:
        sweep_doc = json.loads(_read_text(args.sweep))
        if not isinstance(sweep_doc, dict):
            raise SchemaError("sweep file must be a JSON object of id -> values",
                              field="<root>")
        return ExpansionRequest(mode=ExpansionMode.SWEEP,
                                invocations=tuple(base_invocations[:1]),
                                sweep_params=sweep_doc)
    if args.bids:
        return ExpansionRequest(
            mode=ExpansionMode.BIDS,
            invocations=tuple(base_invocations[:1]),
            bids_dir=Path(args.bids),
            participant_labels=tuple(args.participant_label)
            if args.participant_label else None,
            session_labels=tuple(args.session_label)
            if args.session_label else None,
        )
    return ExpansionRequest(mode=ExpansionMode.INVOCATION_LIST,
                            invocations=tuple(base_invocations))


def _dispatch(args, tasks: list[TaskSpec], clowdir: Path, config: dict) -> int:
    backend = _resolve("backend", args.backend, config, "local")
    workers = _resolve("workers", args.workers, config, 1, int)
    interval = _resolve("interval", args.interval, config, DEFAULT_INTERVAL, float)

    if backend == "local":
        report = run_local(tasks, clowdir, workers=workers, interval=interval)
    elif backend == "cluster":
        template = _resolve("template", args.template, config, None)
        submit_cmd = _resolve("submit-cmd", args.submit_cmd, config, "sbatch")
        cfg = BackendConfig(kind=Backend.CLUSTER,
                            scheduler_template=Path(template) if template else None,
                            scheduler_submit_cmd=submit_cmd,
                            dry_run=bool(args.dry_run))
        report = submit_cluster(tasks, clowdir, cfg, interval=interval)
    elif backend == "stage":
        stage_dir = _resolve("stage-dir", args.stage_dir, config, None)
        if not stage_dir:
            log.error("--stage-dir is required with --backend stage")
            return EXIT_USAGE
        report = stage_remote(tasks, clowdir, Path(stage_dir), interval=interval)
    else:
        log.error("unknown backend %r", backend)
        return EXIT_USAGE

    for task_id, handle in report.submitted:
        log.info("dispatched %s -> %s", task_id, handle)
    for task_id, reason in report.failed_to_submit:
        log.error("failed to dispatch %s: %s", task_id, reason)
    return EXIT_OK if report.ok else EXIT_DISPATCH


def cmd_run(args) -> int:
    descriptor_text = _read_text(args.descriptor)
    d = parse_descriptor(descriptor_text)
    digest = descriptor_digest(d)

    inv_doc = json.loads(_read_text(args.invocation)) if args.invocation else {}
    if isinstance(inv_doc, list):
        if args.sweep or args.bids:
            log.error("sweep/bids modes need a single base invocation object")
            return EXIT_USAGE
        base_invocations = inv_doc
    elif isinstance(inv_doc, dict):
        base_invocations = [inv_doc]
    else:
        raise SchemaError("invocation file must be an object or an array",
                          field="<root>")

    experiment_id = _new_experiment_id()
    clowdir = Path(args.clowdir) if args.clowdir else Path.cwd() / experiment_id
    if (clowdir / "experiment.json").exists():
        raise OutputDirError(
            f"{clowdir} already holds an experiment; use `muster rerun`")
    clowdir.mkdir(parents=True, exist_ok=True)
    config = _load_config(clowdir)

    request = _build_request(args, base_invocations)
    tasks = expand(d, request, experiment_id=experiment_id, now=utc_now())

    (clowdir / DESCRIPTOR_NAME).write_text(descriptor_text, encoding="utf-8")
    write_task_specs(clowdir, tasks)
    write_manifest(clowdir, experiment_id=experiment_id, descriptor_digest=digest,
                   tasks=tasks, expansion=request.echo())
    log.info("experiment %s: %d task(s) planned", experiment_id, len(tasks))

    status = _dispatch(args, tasks, clowdir, config) if tasks else EXIT_OK
    print(clowdir)
    return status


def cmd_rerun(args) -> int:
    clowdir = Path(args.clowdir)
    config = _load_config(clowdir)
    tasks = load_task_specs(clowdir)
    records = load_latest_records(clowdir)
    mode = RerunMode(args.mode)
    planned = plan_rerun(tasks, records, mode)
    if not planned:
        log.info("nothing to do: no tasks match mode %r", args.mode)
        return EXIT_OK
    print("planned:", " ".join(t.task_id for t in planned), file=sys.stderr)
    return _dispatch(args, planned, clowdir, config)


def cmd_status(args) -> int:
    summary = consolidate(Path(args.clowdir))
    if args.json:
        print(json.dumps(summary.to_json_dict(), indent=2))
        return EXIT_OK
    counts = summary.counts
    print(f"experiment {summary.experiment_id}", file=sys.stderr)
    print("  " + "  ".join(f"{k}: {counts[k]}" for k in
                           ("running", "succeeded", "failed", "incomplete")),
          file=sys.stderr)
    if summary.aggregate:
        agg = summary.aggregate
        print(f"  mean duration: {agg['mean_duration_s']} s  "
              f"max duration: {agg['max_duration_s']} s", file=sys.stderr)
        if agg.get("max_peak_rss_bytes") is not None:
            print(f"  mean peak rss: {agg['mean_peak_rss_bytes']} B  "
                  f"max peak rss: {agg['max_peak_rss_bytes']} B", file=sys.stderr)
    return EXIT_OK


def _default_assets_dir() -> Path | None:
    # the dashboard build, when present next to an installed source tree
    candidate = Path(__file__).resolve().parents[2] / "frontend" / "dist"
    return candidate if candidate.is_dir() else None


def cmd_share(args) -> int:
    clowdir = Path(args.clowdir)
    read_manifest(clowdir)  # fail fast with NotAnExperimentDir
    config = _load_config(clowdir)
    assets = _resolve("assets", args.assets, config, None)
    assets_dir = Path(assets) if assets else _default_assets_dir()

    if args.export:
        manifest = export_static(clowdir, Path(args.export), assets_dir)
        log.info("exported %d file(s) to %s", len(manifest["files"]), args.export)
        if manifest["errors"]:
            for err in manifest["errors"]:
                log.error("export error: %s", err)
            return EXIT_IO
        return EXIT_OK

    port = _resolve("port", args.port, config, 8383, int)
    host = _resolve("host", args.host, config, "127.0.0.1")
    server = make_server(clowdir, host=host, port=port, assets_dir=assets_dir)
    log.info("portal on http://%s:%d/ (Ctrl-C to stop)", host, port)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
    return EXIT_OK


def cmd_sentinel(args) -> int:
    doc = read_json(args.task)
    if not isinstance(doc, dict):
        raise SchemaError(f"{args.task} is not a task spec", field="<root>")
    task = TaskSpec.from_json_dict(doc)
    interval = args.interval if args.interval is not None else DEFAULT_INTERVAL
    supervise(task, Path(args.clowdir), interval=interval)
    return EXIT_OK


def cmd_worker(args) -> int:
    report = run_staged(Path(args.stage_dir), Path(args.clowdir),
                        interval=args.interval)
    return EXIT_OK if report.ok else EXIT_DISPATCH


def _add_backend_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--backend", choices=("local", "cluster", "stage"),
                     default=None, help="execution backend (default local)")
    sub.add_argument("--workers", type=int, default=None,
                     help="local pool size (default 1)")
    sub.add_argument("--interval", type=float, default=None,
                     help="resource sampling interval in seconds (default 1.0)")
    sub.add_argument("--template", default=None,
                     help="submission script template (default: bundled SLURM-style)")
    sub.add_argument("--submit-cmd", default=None,
                     help="scheduler submit command (default sbatch)")
    sub.add_argument("--dry-run", action="store_true",
                     help="cluster: generate scripts without submitting")
    sub.add_argument("--stage-dir", default=None,
                     help="staging directory for --backend stage")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="muster",
        description="Batch experiment orchestration with per-task provenance.")
    parser.add_argument("--version", action="version",
                        version=f"muster {__version__}")
    parser.add_argument("--quiet", action="store_true",
                        help="errors only on stderr")
    parser.add_argument("--debug", action="store_true",
                        help="debug logging on stderr")
    subs = parser.add_subparsers(dest="command", required=True)

    run = subs.add_parser("run", help="expand tasks and dispatch them")
    run.add_argument("--descriptor", required=True, help="tool descriptor JSON")
    run.add_argument("--invocation", default=None,
                     help="invocation JSON: object (single/base) or array (list mode)")
    run.add_argument("--sweep", default=None,
                     help="sweep JSON file mapping input id -> value list")
    run.add_argument("--bids", default=None, help="BIDS dataset directory")
    run.add_argument("--participant-label", action="append", default=None,
                     help="explicit BIDS participant (repeatable)")
    run.add_argument("--session-label", action="append", default=None,
                     help="explicit BIDS session (repeatable)")
    run.add_argument("--clowdir", default=None,
                     help="experiment directory (default: ./<experiment-id>)")
    _add_backend_flags(run)
    run.set_defaults(func=cmd_run)

    rerun = subs.add_parser("rerun", help="re-execute tasks of an experiment")
    rerun.add_argument("--clowdir", required=True)
    rerun.add_argument("--mode", choices=("full", "failures", "incomplete"),
                       default="full")
    _add_backend_flags(rerun)
    rerun.set_defaults(func=cmd_rerun)

    status = subs.add_parser("status", help="consolidate and print the summary")
    status.add_argument("--clowdir", required=True)
    status.add_argument("--json", action="store_true",
                        help="dump the full summary JSON to stdout")
    status.set_defaults(func=cmd_status)

    share = subs.add_parser("share",
                            help="serve the monitoring portal or export a bundle")
    share.add_argument("--clowdir", required=True)
    share.add_argument("--port", type=int, default=None)
    share.add_argument("--host", default=None)
    share.add_argument("--export", default=None, metavar="DIR",
                       help="write a static bundle instead of serving")
    share.add_argument("--assets", default=None,
                       help="dashboard assets directory override")
    share.set_defaults(func=cmd_share)

    sentinel = subs.add_parser("sentinel",
                               help="supervise one task (scheduler entry point)")
    sentinel.add_argument("--task", required=True, help="task spec JSON path")
    sentinel.add_argument("--clowdir", required=True)
    sentinel.add_argument("--interval", type=float, default=None)
    sentinel.set_defaults(func=cmd_sentinel)

    worker = subs.add_parser("worker",
                             help="execute a staged bundle (remote worker stub)")
    worker.add_argument("--stage-dir", required=True)
    worker.add_argument("--clowdir", required=True)
    worker.add_argument("--interval", type=float, default=None)
    worker.set_defaults(func=cmd_worker)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    verbosity = "debug" if args.debug else ("quiet" if args.quiet else "normal")
    verbosity = os.environ.get(ENV_PREFIX + "VERBOSITY", verbosity) \
        if not (args.debug or args.quiet) else verbosity
    _configure_logging(verbosity)
    try:
        return args.func(args)
    except (DescriptorSyntaxError, SchemaError, ValidationError, NotABidsDir,
            UnknownParticipant) as e:
        log.error("%s", e)
        return EXIT_SCHEMA
    except (TemplateError, LockError, PortInUse, SubmitError) as e:
        log.error("%s", e)
        return EXIT_DISPATCH
    except (OutputDirError, NotAnExperimentDir, StageError) as e:
        log.error("%s", e)
        return EXIT_IO
    except FileNotFoundError as e:
        log.error("%s", e)
        return EXIT_IO
    except OSError as e:
        log.error("%s", e)
        return EXIT_IO
    except json.JSONDecodeError as e:
        log.error("invalid JSON input: %s", e)
        return EXIT_SCHEMA
    except MusterError as e:
        log.error("%s", e)
        return EXIT_IO


def entrypoint() -> None:
    sys.exit(main())


if __name__ == "__main__":
    entrypoint()
