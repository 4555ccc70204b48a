"""Graph data model for workflows.

Nodes, directed dependency edges, topological ordering, parallel ready-set
computation, and cycle detection. Everything here is pure and in-memory;
mutation during a run is funneled through the engine.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from enum import Enum

from .errors import (
    CycleDetected,
    DuplicateName,
    InvalidStatus,
    MalformedChain,
    UnknownKind,
    UnknownNode,
)


# names end up in file names and shell commands, so keep them boring
_NAME_PATTERN = re.compile(r"^[A-Za-z0-9][A-Za-z0-9_.-]*$")


class JobKind(str, Enum):
    LOCAL = "local"
    SSH = "ssh"
    SLURM = "slurm"
    WSL = "wsl"

    @classmethod
    def parse(cls, value: str) -> "JobKind":
        try:
            return cls(value)
        except ValueError:
            raise UnknownKind(f"unknown kind {value!r}; expected one of "
                              + ", ".join(k.value for k in cls)) from None


class Status(str, Enum):
    UNDEFINED = "undefined"
    READY = "ready"
    SUBMITTED = "submitted"
    RUNNING = "running"
    DONE = "done"
    FAILED = "failed"
    KILLED = "killed"

    @property
    def terminal(self) -> bool:
        return self in (Status.DONE, Status.FAILED, Status.KILLED)

    @classmethod
    def parse(cls, value: str) -> "Status":
        try:
            return cls(value)
        except ValueError:
            raise InvalidStatus(f"unknown status {value!r}") from None


@dataclass
class NodeSpec:
    """One job's declaration.

    `script` and `exec` are mutually complementary: a node with neither is a
    structural no-op (like start/end markers) that completes instantly.
    """

    name: str
    user: str | None = None
    host: str | None = None
    kind: JobKind | None = None
    status: Status = Status.UNDEFINED
    progress: int = 0
    label: str | None = None
    script: str | None = None
    exec: str | None = None
    shape: str | None = None
    style: str | None = None
    venv: str | None = None

    def __post_init__(self):
        if not _NAME_PATTERN.match(self.name):
            raise ValueError(
                f"node name {self.name!r} must be non-empty and use only "
                "letters, digits, dot, dash, underscore"
            )
        if not 0 <= self.progress <= 100:
            raise ValueError(f"progress must be in 0..100, got {self.progress}")

    @property
    def is_structural(self) -> bool:
        return self.script is None and self.exec is None

    @property
    def effective_label(self) -> str:
        return self.label if self.label is not None else self.name

    @property
    def command(self) -> str | None:
        """The script name or inline command, whichever the node declares."""
        return self.script if self.script is not None else self.exec


@dataclass
class WorkflowGraph:
    """Named nodes plus a deduplicated, ordered set of directed edges."""

    nodes: dict[str, NodeSpec] = field(default_factory=dict)
    edges: list[tuple[str, str]] = field(default_factory=list)

    def add_node(self, spec: NodeSpec) -> None:
        if spec.name in self.nodes:
            raise DuplicateName(f"node {spec.name!r} already exists")
        self.nodes[spec.name] = spec

    def add_edge(self, source: str, destination: str) -> None:
        for name in (source, destination):
            if name not in self.nodes:
                raise UnknownNode(name)
        edge = (source, destination)
        if edge not in self.edges:
            self.edges.append(edge)

    def remove_node(self, name: str) -> None:
        if name not in self.nodes:
            raise UnknownNode(name)
        del self.nodes[name]
        self.edges = [(a, b) for a, b in self.edges if name not in (a, b)]

    def predecessors(self, name: str) -> list[str]:
        return [a for a, b in self.edges if b == name]

    def successors(self, name: str) -> list[str]:
        return [b for a, b in self.edges if a == name]


def add_dependency_chain(graph: WorkflowGraph, chain: str) -> WorkflowGraph:
    """Expand a comma-separated name sequence into consecutive edges.

    "start,a,end" adds (start,a) and (a,end). Re-adding an existing edge is
    a no-op. Raises MalformedChain for fewer than two names or empty tokens,
    UnknownNode for undeclared names.
    """
    names = [token.strip() for token in chain.split(",")]
    if len(names) < 2 or any(not n for n in names):
        raise MalformedChain(f"chain needs >= 2 comma-separated names: {chain!r}")
    for name in names:
        if name not in graph.nodes:
            raise UnknownNode(name)
    for source, destination in zip(names, names[1:]):
        graph.add_edge(source, destination)
    return graph


def topological_order(graph: WorkflowGraph) -> list[str]:
    """Return node names so every edge's source precedes its destination.

    Ties are broken by declaration order, which makes runs reproducible.
    Raises CycleDetected (with a witness cycle) for cyclic graphs.
    """
    names = list(graph.nodes)
    in_degree = {n: 0 for n in names}
    for _, b in graph.edges:
        in_degree[b] += 1

    order: list[str] = []
    emitted: set[str] = set()
    while len(order) < len(names):
        candidate = next(
            (n for n in names if n not in emitted and in_degree[n] == 0), None
        )
        if candidate is None:
            cycle = detect_cycle(graph)
            assert cycle is not None
            raise CycleDetected(cycle)
        order.append(candidate)
        emitted.add(candidate)
        for successor in graph.successors(candidate):
            in_degree[successor] -= 1
    return order


def ready_set(
    graph: WorkflowGraph, completed: set[str], active: set[str]
) -> set[str]:
    """Nodes eligible to start: not completed or active, all predecessors completed."""
    busy = completed | active
    return {
        name
        for name in graph.nodes
        if name not in busy
        and all(p in completed for p in graph.predecessors(name))
    }


def detect_cycle(graph: WorkflowGraph) -> list[str] | None:
    """Return one witness cycle as a node list, or None if the graph is a DAG."""
    WHITE, GRAY, BLACK = 0, 1, 2
    color = {n: WHITE for n in graph.nodes}
    parent: dict[str, str | None] = {}

    for root in graph.nodes:
        if color[root] != WHITE:
            continue
        stack: list[tuple[str, list[str]]] = [(root, graph.successors(root))]
        color[root] = GRAY
        parent[root] = None
        while stack:
            node, succs = stack[-1]
            advanced = False
            while succs:
                nxt = succs.pop(0)
                if color[nxt] == GRAY:
                    # walk parents back from node to nxt to extract the cycle
                    cycle = [node]
                    cursor = node
                    while cursor != nxt:
                        cursor = parent[cursor]  # type: ignore[assignment]
                        cycle.append(cursor)
                    cycle.reverse()
                    return cycle
                if color[nxt] == WHITE:
                    color[nxt] = GRAY
                    parent[nxt] = node
                    stack.append((nxt, graph.successors(nxt)))
                    advanced = True
                    break
            if not advanced:
                color[node] = BLACK
                stack.pop()
    return None


def validate_graph(graph: WorkflowGraph) -> None:
    """Raise CycleDetected if the graph is not a DAG."""
    cycle = detect_cycle(graph)
    if cycle is not None:
        raise CycleDetected(cycle)
