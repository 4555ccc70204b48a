"""Exception types shared across the package."""


class WorkflowError(Exception):
    """Base class for all dagline errors."""


class SchemaError(WorkflowError):
    """Workflow document does not have the expected structure."""


class NameMismatch(SchemaError):
    """A node's `name` field differs from its mapping key."""


class UnknownKind(WorkflowError):
    """Job kind is not one of local, ssh, slurm, wsl."""


class UnknownNode(WorkflowError):
    """A dependency chain references an undeclared node."""

    def __init__(self, name: str):
        super().__init__(f"unknown node: {name!r}")
        self.name = name


class MalformedChain(WorkflowError):
    """Dependency chain has fewer than two names or empty tokens."""


class CycleDetected(WorkflowError):
    """The workflow graph contains a cycle."""

    def __init__(self, cycle: list[str]):
        super().__init__("cycle detected: " + " -> ".join(cycle + cycle[:1]))
        self.cycle = cycle


class DuplicateName(WorkflowError):
    """A node with this name already exists."""


class NotFound(WorkflowError):
    """Workflow or job does not exist."""


class ActiveRun(WorkflowError):
    """Operation refused because the workflow is currently running."""


class InvalidStatus(WorkflowError):
    """Status word is not a recognized job status."""


class ArchiveError(WorkflowError):
    """Workflow archive is unreadable or ambiguous."""


class UnsupportedKind(WorkflowError):
    """Kind is recognized by the schema but has no executor (wsl)."""


class HostUnreachable(WorkflowError):
    """ssh could not reach the compute resource."""


class CopyFailed(WorkflowError):
    """Script transfer to the compute resource failed."""


class MissingLocalScript(WorkflowError):
    """The job's script is absent from the workflow source directory."""


class LaunchFailed(WorkflowError):
    """Job submission returned a nonzero exit or unparseable output."""


class RendererMissing(WorkflowError):
    """No DOT renderer found on the search path."""


class RenderFailed(WorkflowError):
    """The external DOT renderer reported an error."""
