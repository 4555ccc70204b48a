"""Hybrid workflow management: DAGs of jobs on local, ssh, and Slurm resources.

Workflows are declared in YAML, executed as detached jobs that append
protocol lines to per-job logs, and monitored by stateless clients (CLI,
REST service, browser) that reconstruct all state from those logs.
"""

from .engine import WorkflowRun, list_workflows, load_workflow, state_root
from .errors import WorkflowError
from .executors import StatusRecord, executor_for, write_progress
from .labels import TimerContext, VariableStore, render_label
from .model import (
    JobKind,
    NodeSpec,
    Status,
    WorkflowGraph,
    add_dependency_chain,
    detect_cycle,
    ready_set,
    topological_order,
)
from .render import RenderOptions, render_svg, to_dot, write_graph
from .restclient import WorkflowServiceClient
from .specfile import (
    WorkflowDocument,
    load_archive,
    load_workflow_file,
    parse_workflow_yaml,
    serialize_workflow,
)

__version__ = "1.0.0"

__all__ = [
    "JobKind",
    "NodeSpec",
    "RenderOptions",
    "Status",
    "StatusRecord",
    "TimerContext",
    "VariableStore",
    "WorkflowDocument",
    "WorkflowError",
    "WorkflowGraph",
    "WorkflowRun",
    "WorkflowServiceClient",
    "add_dependency_chain",
    "detect_cycle",
    "executor_for",
    "list_workflows",
    "load_archive",
    "load_workflow",
    "load_workflow_file",
    "parse_workflow_yaml",
    "ready_set",
    "render_label",
    "render_svg",
    "serialize_workflow",
    "state_root",
    "to_dot",
    "topological_order",
    "write_graph",
    "write_progress",
]
