"""muster: batch experiment orchestration with per-task provenance.

Expands machine-readable tool descriptors plus invocations into explicit
task lists, executes each task under a supervisor that samples process-tree
CPU and memory, records rich per-task JSON provenance in an experiment
directory (the "clowdir"), and serves the consolidated records to an
interactive monitoring dashboard. Supports local serial/parallel runs,
generated cluster-scheduler submissions, and a remote staging stub, with
full, failure-only, or incomplete-only re-execution.
"""

__version__ = "0.1.0"

from .descriptor import (
    ContainerSpec,
    InputSpec,
    ToolDescriptor,
    containerize_command,
    descriptor_digest,
    parse_descriptor,
    render_command,
    serialize_descriptor,
    validate_invocation,
)
from .taskgen import (
    ExpansionRequest,
    RerunMode,
    TaskSpec,
    expand_bids,
    expand_invocation_list,
    expand_sweep,
    plan_rerun,
)
from .sentinel import ResourceSample, TaskRecord, finalize_record, sample_tree, supervise
from .runner import (
    Backend,
    BackendConfig,
    DispatchReport,
    generate_submission,
    render_submission,
    run_local,
    stage_remote,
    submit_cluster,
)
from .provenance import (
    ExperimentSummary,
    TaskRow,
    TimelineRow,
    consolidate,
    filter_rows,
    peak_and_mean,
    sort_rows,
    timeline,
)

__all__ = [
    "__version__",
    "ToolDescriptor",
    "InputSpec",
    "ContainerSpec",
    "parse_descriptor",
    "serialize_descriptor",
    "descriptor_digest",
    "validate_invocation",
    "render_command",
    "containerize_command",
    "TaskSpec",
    "ExpansionRequest",
    "RerunMode",
    "expand_invocation_list",
    "expand_sweep",
    "expand_bids",
    "plan_rerun",
    "ResourceSample",
    "TaskRecord",
    "supervise",
    "sample_tree",
    "finalize_record",
    "Backend",
    "BackendConfig",
    "DispatchReport",
    "run_local",
    "render_submission",
    "generate_submission",
    "submit_cluster",
    "stage_remote",
    "ExperimentSummary",
    "TaskRow",
    "TimelineRow",
    "consolidate",
    "peak_and_mean",
    "timeline",
    "filter_rows",
    "sort_rows",
]
