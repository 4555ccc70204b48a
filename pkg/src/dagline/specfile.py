"""Parse and serialize workflow YAML documents, and ingest tar archives.

The document layout is fixed: a top-level `workflow` mapping with `nodes`
(an ordered mapping of name -> attributes) and `dependencies` (a list of
comma-separated name chains)::

    workflow:
      nodes:
        start:
          name: start
        fetch-data:
          name: fetch-data
          kind: local
          status: ready
          script: test-fetch-data.sh
      dependencies:
        - start,fetch-data

Parsing applies defaults (status ready for script-bearing nodes, progress 0,
label defaults to the node name) and validates the dependency graph,
rejecting unknown nodes and cycles up front.
"""

from __future__ import annotations

import logging
import tarfile
from dataclasses import dataclass, field
from pathlib import Path

import yaml

from .errors import ArchiveError, NameMismatch, SchemaError
from .model import (
    JobKind,
    NodeSpec,
    Status,
    WorkflowGraph,
    add_dependency_chain,
    validate_graph,
)

logger = logging.getLogger(__name__)

_NODE_FIELDS = (
    "name", "user", "host", "kind", "status", "progress",
    "label", "script", "exec", "shape", "style", "venv",
)


@dataclass
class WorkflowDocument:
    """A parsed workflow: named nodes, dependency chains, script location."""

    name: str
    nodes: dict[str, NodeSpec] = field(default_factory=dict)
    dependencies: list[str] = field(default_factory=list)
    source_directory: Path = field(default_factory=Path.cwd)
    warnings: list[str] = field(default_factory=list)

    def build_graph(self) -> WorkflowGraph:
        """Expand dependency chains into a validated graph."""
        graph = WorkflowGraph()
        for spec in self.nodes.values():
            graph.add_node(spec)
        for chain in self.dependencies:
            add_dependency_chain(graph, chain)
        validate_graph(graph)
        return graph


def _parse_node(key: str, attrs: dict | None) -> NodeSpec:
    attrs = attrs or {}
    if not isinstance(attrs, dict):
        raise SchemaError(f"node {key!r} must be a mapping, got {type(attrs).__name__}")
    unknown = set(attrs) - set(_NODE_FIELDS)
    if unknown:
        raise SchemaError(f"node {key!r} has unknown attributes: {sorted(unknown)}")

    name = attrs.get("name", key)
    if name != key:
        raise NameMismatch(f"node key {key!r} does not match name field {name!r}")

    script = attrs.get("script")
    exec_ = attrs.get("exec")
    kind = JobKind.parse(str(attrs["kind"])) if "kind" in attrs else None
    if kind is None and (script is not None or exec_ is not None):
        raise SchemaError(f"node {key!r} declares a script or exec but no kind")

    if "status" in attrs:
        status = Status.parse(str(attrs["status"]))
    elif script is not None or exec_ is not None:
        status = Status.READY
    else:
        status = Status.UNDEFINED

    return NodeSpec(
        name=name,
        user=attrs.get("user"),
        host=attrs.get("host"),
        kind=kind,
        status=status,
        progress=int(attrs.get("progress", 0)),
        label=attrs.get("label"),
        script=script,
        exec=exec_,
        shape=attrs.get("shape"),
        style=attrs.get("style"),
        venv=attrs.get("venv"),
    )


def parse_workflow_yaml(
    text: str,
    source_directory: Path | str | None = None,
    name: str = "workflow",
) -> WorkflowDocument:
    """Parse workflow YAML text into a validated document.

    Raises SchemaError for structural problems, NameMismatch when a node key
    and its name field disagree, UnknownKind / InvalidStatus for bad
    enumeration values, and CycleDetected when the dependencies loop.
    """
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise SchemaError(f"invalid YAML: {exc}") from exc
    if not isinstance(data, dict) or "workflow" not in data:
        raise SchemaError("document must have a top-level 'workflow' mapping")
    body = data["workflow"]
    if not isinstance(body, dict) or "nodes" not in body:
        raise SchemaError("'workflow' must contain a 'nodes' mapping")
    raw_nodes = body["nodes"]
    if not isinstance(raw_nodes, dict):
        raise SchemaError("'nodes' must be a mapping of name -> attributes")
    raw_deps = body.get("dependencies") or []
    if not isinstance(raw_deps, list):
        raise SchemaError("'dependencies' must be a list of chain strings")

    document = WorkflowDocument(
        name=name,
        nodes={key: _parse_node(key, attrs) for key, attrs in raw_nodes.items()},
        dependencies=[str(chain) for chain in raw_deps],
        source_directory=Path(source_directory) if source_directory else Path.cwd(),
    )
    document.build_graph()  # validates chains and acyclicity
    return document


def _node_to_mapping(spec: NodeSpec, with_state: bool) -> dict:
    mapping: dict = {"name": spec.name}
    for attr in ("user", "host"):
        value = getattr(spec, attr)
        if value is not None:
            mapping[attr] = value
    if spec.kind is not None:
        mapping["kind"] = spec.kind.value
    if with_state:
        mapping["status"] = spec.status.value
        mapping["progress"] = spec.progress
    elif not spec.is_structural:
        mapping["status"] = Status.READY.value
    for attr in ("label", "script", "exec", "shape", "style", "venv"):
        value = getattr(spec, attr)
        if value is not None:
            mapping[attr] = value
    return mapping


def serialize_workflow(document: WorkflowDocument, with_state: bool = False) -> str:
    """Serialize a document back to YAML text.

    with_state=False emits the declaration only: statuses reset to their
    defaults and progress omitted, so parse -> serialize -> parse is the
    identity. with_state=True embeds each node's current status and progress
    so a later load resumes monitoring where it left off.
    """
    payload = {
        "workflow": {
            "nodes": {
                key: _node_to_mapping(spec, with_state)
                for key, spec in document.nodes.items()
            },
            "dependencies": list(document.dependencies),
        }
    }
    return yaml.safe_dump(payload, sort_keys=False, default_flow_style=False)


def load_workflow_file(path: Path | str, name: str | None = None) -> WorkflowDocument:
    """Parse a workflow YAML file; the document name defaults to the file stem."""
    path = Path(path)
    return parse_workflow_yaml(
        path.read_text(),
        source_directory=path.parent,
        name=name or path.stem,
    )


def _safe_extract(archive: tarfile.TarFile, destination: Path) -> list[str]:
    """Extract a flat tar, refusing members that would escape the destination."""
    names = []
    for member in archive.getmembers():
        target = (destination / member.name).resolve()
        if not str(target).startswith(str(destination.resolve())):
            raise ArchiveError(f"archive member escapes destination: {member.name}")
        names.append(member.name)
    archive.extractall(destination)
    return names


def load_archive(archive: Path | str, destination: Path | str) -> WorkflowDocument:
    """Ingest a tar bundling one workflow YAML plus its scripts.

    The archive is extracted under destination/<name>/ where <name> is the
    YAML file's basename; the document's source directory is the extraction
    directory. A referenced script missing from the archive is recorded as a
    warning on the document (scripts may legitimately be generated later),
    never a fatal error. Raises ArchiveError for unreadable archives or when
    the archive does not contain exactly one YAML file.
    """
    archive = Path(archive)
    destination = Path(destination)
    try:
        with tarfile.open(archive) as tar:
            members = [m.name for m in tar.getmembers() if m.isfile()]
            yaml_names = [
                n for n in members
                if n.endswith(".yaml") or n.endswith(".yml")
            ]
            if len(yaml_names) != 1:
                raise ArchiveError(
                    f"archive must contain exactly one workflow YAML, found {len(yaml_names)}"
                )
            workflow_name = Path(yaml_names[0]).stem
            target = destination / workflow_name
            target.mkdir(parents=True, exist_ok=True)
            _safe_extract(tar, target)
    except tarfile.TarError as exc:
        raise ArchiveError(f"cannot read archive {archive}: {exc}") from exc

    yaml_path = target / yaml_names[0]
    document = load_workflow_file(yaml_path, name=workflow_name)
    for spec in document.nodes.values():
        if spec.script and not (document.source_directory / spec.script).exists():
            message = f"script {spec.script!r} for node {spec.name!r} not in archive"
            document.warnings.append(message)
            logger.warning("%s: %s", workflow_name, message)
    return document
