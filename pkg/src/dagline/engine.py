"""Workflow orchestration over a file-backed state store.

A workflow lives in its own directory under the state root::

    <root>/<name>/<name>.yaml     declaration plus current status/progress
    <root>/<name>/runtime/        staged scripts, local logs, clocks, metadata

That directory is the complete truth: a fresh process can load it, probe
the per-job logs, and carry on monitoring or running, which is what makes
the client disposable. All mutation of one workflow happens through a
single WorkflowRun owner; probes are read-only and may happen anywhere.
"""

from __future__ import annotations

import json
import logging
import os
import shutil
import tarfile
import threading
import time
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import yaml

from .errors import (
    ActiveRun,
    ArchiveError,
    DuplicateName,
    NotFound,
    UnknownNode,
    WorkflowError,
)
from .executors import JobHandle, executor_for, make_handle
from .labels import TimerContext, VariableStore
from .model import (
    JobKind,
    NodeSpec,
    Status,
    add_dependency_chain,
    ready_set,
    topological_order,
    validate_graph,
)
from .render import to_dot, write_graph
from .specfile import (
    WorkflowDocument,
    load_archive,
    load_workflow_file,
    serialize_workflow,
)

logger = logging.getLogger(__name__)

DEFAULT_ROOT = "~/.dagline/workflows"
ENGINE_PERIOD = 1.0

_RESUMABLE = (Status.SUBMITTED, Status.RUNNING)


def _write_atomic(path: Path, text: str) -> None:
    """Replace path with text in one step, safe against concurrent savers.

    The temporary name carries the pid and thread id so two writers never
    share it; whichever replaces last wins.
    """
    tmp = path.with_name(f".{path.name}.{os.getpid()}.{threading.get_ident()}.tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def state_root(root: Path | str | None = None) -> Path:
    """The directory holding all workflow state; created on first use."""
    if root is None:
        root = os.environ.get("DAGLINE_ROOT", DEFAULT_ROOT)
    path = Path(root).expanduser()
    path.mkdir(parents=True, exist_ok=True)
    return path


def list_workflows(root: Path | str | None = None) -> list[str]:
    """Names of installed workflows, sorted."""
    base = state_root(root)
    return sorted(
        entry.name
        for entry in base.iterdir()
        if entry.is_dir() and (entry / f"{entry.name}.yaml").exists()
    )


@dataclass
class RunClocks:
    """Wall-clock milestones for one workflow, persisted beside the logs."""

    created: datetime | None = None
    t0: datetime | None = None        # current run start
    t1: datetime | None = None        # current run end
    modified: datetime | None = None  # last state save
    job_start: dict[str, datetime] = field(default_factory=dict)
    job_end: dict[str, datetime] = field(default_factory=dict)

    def context_for(self, name: str) -> TimerContext:
        return TimerContext(
            created=self.created,
            t0=self.t0,
            t1=self.t1,
            now=datetime.now(),
            tstart=self.job_start.get(name),
            tend=self.job_end.get(name),
            modified=self.modified,
        )

    def start_run(self) -> None:
        self.t0 = None
        self.t1 = None

    def to_mapping(self) -> dict:
        stamp = lambda value: value.isoformat() if value else None  # noqa: E731
        return {
            "created": stamp(self.created),
            "t0": stamp(self.t0),
            "t1": stamp(self.t1),
            "modified": stamp(self.modified),
            "job_start": {k: v.isoformat() for k, v in self.job_start.items()},
            "job_end": {k: v.isoformat() for k, v in self.job_end.items()},
        }

    @classmethod
    def from_mapping(cls, data: dict) -> "RunClocks":
        parse = lambda value: datetime.fromisoformat(value) if value else None  # noqa: E731
        return cls(
            created=parse(data.get("created")),
            t0=parse(data.get("t0")),
            t1=parse(data.get("t1")),
            modified=parse(data.get("modified")),
            job_start={k: datetime.fromisoformat(v) for k, v in data.get("job_start", {}).items()},
            job_end={k: datetime.fromisoformat(v) for k, v in data.get("job_end", {}).items()},
        )


class WorkflowRun:
    """One workflow bound to its state directory.

    Construction rebuilds the graph and derives a JobHandle for every
    script- or exec-bearing node; structural nodes get none. Previously
    recorded pids and batch job ids are picked up from the runtime
    directory so kill and liveness checks survive a client restart.
    """

    def __init__(self, document: WorkflowDocument, root: Path | str | None = None):
        self.document = document
        self.root = state_root(root)
        self.graph = document.build_graph()
        self.clocks = RunClocks()
        self.run_id: str | None = None
        self.node_errors: dict[str, str] = {}
        self.variables = VariableStore.from_file(self.root / "variables.conf")
        self._active = False
        self.handles: dict[str, JobHandle] = {}
        self._build_handles()
        self._load_clocks()

    # -- locations -----------------------------------------------------------

    @property
    def name(self) -> str:
        return self.document.name

    @property
    def directory(self) -> Path:
        return self.root / self.name

    @property
    def state_path(self) -> Path:
        return self.directory / f"{self.name}.yaml"

    @property
    def runtime(self) -> Path:
        return self.directory / "runtime"

    # -- construction --------------------------------------------------------

    @classmethod
    def load(cls, name: str, root: Path | str | None = None) -> "WorkflowRun":
        """Load an installed workflow from the state store."""
        base = state_root(root)
        path = base / name / f"{name}.yaml"
        if not path.exists():
            raise NotFound(f"no workflow named {name!r} in {base}")
        document = load_workflow_file(path, name=name)
        return cls(document, root=base)

    @classmethod
    def install(
        cls,
        source: Path | str,
        name: str | None = None,
        root: Path | str | None = None,
    ) -> "WorkflowRun":
        """Copy a workflow YAML or tar archive into the state store.

        The store directory becomes self-contained: referenced scripts that
        exist beside the source YAML are copied along. Installing over an
        existing name is refused.
        """
        base = state_root(root)
        source = Path(source).expanduser()
        if not source.exists():
            raise NotFound(f"no such workflow source: {source}")

        if source.suffix in (".yaml", ".yml"):
            document = load_workflow_file(source, name=name)
            target = base / document.name
            if target.exists():
                raise DuplicateName(f"workflow {document.name!r} already installed")
            target.mkdir(parents=True)
            shutil.copy(source, target / f"{document.name}.yaml")
            for spec in document.nodes.values():
                if spec.script and (source.parent / spec.script).exists():
                    shutil.copy(source.parent / spec.script, target / spec.script)
            document = load_workflow_file(target / f"{document.name}.yaml", name=document.name)
        else:
            wanted = _archive_workflow_name(source)
            if name and name != wanted:
                raise ArchiveError(
                    f"archive contains workflow {wanted!r}, not {name!r}"
                )
            if (base / wanted).exists():
                raise DuplicateName(f"workflow {wanted!r} already installed")
            document = load_archive(source, base)

        run = cls(document, root=base)
        run.runtime.mkdir(parents=True, exist_ok=True)
        run.clocks.created = datetime.now()
        run.save()
        return run

    def _build_handles(self) -> None:
        self.handles = {}
        for node in self.graph.nodes.values():
            if node.is_structural:
                continue
            handle = make_handle(
                node, self.name, self.runtime, self.document.source_directory
            )
            meta = self._meta_path(node.name)
            if meta.exists():
                try:
                    data = json.loads(meta.read_text())
                except (json.JSONDecodeError, OSError):
                    data = {}
                handle.pid = data.get("pid")
                handle.slurm_job_id = data.get("slurm_job_id")
            self.handles[node.name] = handle

    # -- persistence ---------------------------------------------------------

    def save(self) -> None:
        """Write the declaration-with-state file atomically, plus the clocks."""
        self.directory.mkdir(parents=True, exist_ok=True)
        self.runtime.mkdir(parents=True, exist_ok=True)
        self.clocks.modified = datetime.now()
        _write_atomic(self.state_path, serialize_workflow(self.document, with_state=True))
        clocks_path = self.runtime / "clocks.json"
        _write_atomic(clocks_path, json.dumps(self.clocks.to_mapping(), indent=2))

    def _load_clocks(self) -> None:
        path = self.runtime / "clocks.json"
        if path.exists():
            try:
                self.clocks = RunClocks.from_mapping(json.loads(path.read_text()))
            except (json.JSONDecodeError, ValueError, OSError):
                logger.warning("unreadable clocks file %s; starting fresh", path)

    def _meta_path(self, name: str) -> Path:
        return self.runtime / f"{name}.meta"

    def _save_meta(self, name: str) -> None:
        handle = self.handles[name]
        self.runtime.mkdir(parents=True, exist_ok=True)
        self._meta_path(name).write_text(
            json.dumps({"pid": handle.pid, "slurm_job_id": handle.slurm_job_id})
        )

    # -- queries ---------------------------------------------------------------

    def ordered_names(self) -> list[str]:
        return topological_order(self.graph)

    def node(self, name: str) -> NodeSpec:
        if name not in self.graph.nodes:
            raise NotFound(f"no job named {name!r} in workflow {self.name!r}")
        return self.graph.nodes[name]

    def label_context(self, name: str) -> TimerContext:
        return self.clocks.context_for(name)

    def table_rows(self) -> list[dict]:
        """One record per node, in topological order."""
        rows = []
        for name in self.ordered_names():
            node = self.graph.nodes[name]
            rows.append(
                {
                    "name": node.name,
                    "status": node.status.value,
                    "progress": node.progress,
                    "host": node.host,
                    "user": node.user,
                    "kind": node.kind.value if node.kind else None,
                    "command": node.command,
                }
            )
        return rows

    def to_mapping(self) -> dict:
        """The full document with current state, as plain data."""
        data = yaml.safe_load(serialize_workflow(self.document, with_state=True))
        body = data["workflow"]
        body["name"] = self.name
        if self.node_errors:
            body["errors"] = dict(self.node_errors)
        return body

    @property
    def busy(self) -> bool:
        """True while this process runs the workflow or any job is in flight."""
        return self._active or any(
            node.status in _RESUMABLE for node in self.graph.nodes.values()
        )

    # -- state synchronization -------------------------------------------------

    def refresh(self) -> "WorkflowRun":
        """Probe every job's log and adopt the reported status/progress.

        Per-node probe failures (say, an unreachable host) are recorded in
        node_errors and leave that node untouched; the refresh itself never
        fails on them. Progress never moves backward.
        """
        self.node_errors = {}
        for name, handle in self.handles.items():
            try:
                record, _ = executor_for(handle.node.kind).probe(handle)
            except WorkflowError as exc:
                self.node_errors[name] = str(exc)
                continue
            node = handle.node
            node.status = record.status
            node.progress = max(node.progress, record.progress)
        self.save()
        return self

    def update_status(self, name: str, status: Status | str) -> "WorkflowRun":
        node = self.node(name)
        node.status = Status.parse(status) if isinstance(status, str) else status
        self.save()
        return self

    def update_progress(self, name: str) -> "WorkflowRun":
        """Re-read one job's log and adopt its reported progress."""
        node = self.node(name)
        if name in self.handles:
            handle = self.handles[name]
            record, _ = executor_for(handle.node.kind).probe(handle)
            node.progress = max(node.progress, record.progress)
        self.save()
        return self

    # -- mutation ---------------------------------------------------------------

    def add_job(self, name: str, **attributes) -> "WorkflowRun":
        """Declare one more node; no edges are implied."""
        if name in self.graph.nodes:
            raise DuplicateName(f"node {name!r} already exists")
        kind = attributes.pop("kind", None)
        status = attributes.pop("status", None)
        spec = NodeSpec(
            name=name,
            kind=JobKind.parse(str(kind)) if kind is not None else None,
            status=Status.parse(str(status)) if status is not None else Status.READY,
            **attributes,
        )
        self.graph.add_node(spec)
        self.document.nodes[name] = spec
        self._build_handles()
        self.save()
        return self

    def add_dependencies(self, chain: str) -> "WorkflowRun":
        """Append one comma-chain of dependencies, keeping the graph acyclic."""
        add_dependency_chain(self.graph, chain)
        try:
            validate_graph(self.graph)
        except WorkflowError:
            self.graph = self.document.build_graph()
            raise
        self.document.dependencies.append(chain)
        self.save()
        return self

    def remove_job(self, name: str) -> str:
        node = self.node(name)
        if self._active or node.status in _RESUMABLE:
            raise ActiveRun(f"job {name!r} is running; kill it first")
        self.graph.remove_node(name)
        del self.document.nodes[name]
        self.handles.pop(name, None)
        self._meta_path(name).unlink(missing_ok=True)
        # chains may mention the removed node, so re-emit the surviving edges
        self.document.dependencies = [f"{a},{b}" for a, b in self.graph.edges]
        self.save()
        return f"removed job {name!r} from workflow {self.name!r}"

    def remove_workflow(self) -> str:
        if self.busy:
            raise ActiveRun(f"workflow {self.name!r} is running")
        shutil.rmtree(self.directory, ignore_errors=True)
        return f"removed workflow {self.name!r}"

    def kill_job(self, name: str) -> str:
        """Best-effort kill of one job; persists the resulting status."""
        if name not in self.handles:
            raise NotFound(f"no runnable job named {name!r}")
        handle = self.handles[name]
        message = executor_for(handle.node.kind).kill(handle)
        self.save()
        return message

    # -- execution ---------------------------------------------------------------

    def run_topo(
        self,
        order: list[str] | None = None,
        dryrun: bool = False,
        show: bool = True,
        filename: Path | str | None = None,
        period: float = ENGINE_PERIOD,
    ) -> "WorkflowRun | list[str]":
        """Execute jobs strictly one at a time in topological order.

        Each job goes through clear, sync, run, watch-to-terminal. A failed
        or killed job stops the schedule; the jobs after it stay ready. A
        job found submitted or running (for instance after a client crash)
        is watched without being launched again. dryrun returns the planned
        order without side effects.
        """
        schedule = self._schedule(order)
        if dryrun:
            return schedule
        trail = self._start_run(show, filename)

        try:
            for name in schedule:
                node = self.graph.nodes[name]
                if node.status is Status.DONE:
                    continue
                if node.status.terminal:
                    break
                if node.is_structural:
                    self._complete_structural(name, trail)
                    continue
                final = self._execute(name, trail, period)
                if final is not Status.DONE:
                    break
        finally:
            self._finish_run(trail)
        return self

    def run_parallel(
        self,
        max_parallel: int = 0,
        period: float = ENGINE_PERIOD,
        show: bool = False,
        filename: Path | str | None = None,
    ) -> "WorkflowRun":
        """Repeatedly launch every ready node and poll the in-flight ones.

        max_parallel caps concurrently running jobs (0 means no cap). A
        failure blocks only the nodes downstream of it; independent branches
        keep going. Returns when no node is active and none can start.
        """
        self._schedule(None)  # validates acyclicity
        trail = self._start_run(show, filename)
        declared = self.ordered_names()

        active: dict[str, JobHandle] = {
            name: handle
            for name, handle in self.handles.items()
            if handle.node.status in _RESUMABLE
        }

        try:
            while True:
                completed = {
                    n for n, node in self.graph.nodes.items() if node.status is Status.DONE
                }
                candidates = ready_set(self.graph, completed, set(active))
                launchable = [
                    n for n in declared
                    if n in candidates
                    and not self.graph.nodes[n].status.terminal
                ]
                for name in launchable:
                    node = self.graph.nodes[name]
                    if node.is_structural:
                        self._complete_structural(name, trail)
                        continue
                    if max_parallel and len(active) >= max_parallel:
                        break
                    self._launch(name, trail)
                    active[name] = self.handles[name]
                if any(self.graph.nodes[n].is_structural for n in launchable):
                    continue  # structural completion may unlock successors now

                if not active:
                    break
                self._poll_active(active, trail)
                if active:
                    time.sleep(period)
        finally:
            self._finish_run(trail)
        return self

    # -- execution internals -----------------------------------------------------

    def _schedule(self, order: list[str] | None) -> list[str]:
        if order is None:
            return self.ordered_names()
        for name in order:
            if name not in self.graph.nodes:
                raise UnknownNode(name)
        return list(order)

    def _start_run(self, show: bool, filename: Path | str | None) -> "_SnapshotTrail":
        if self._active:
            raise ActiveRun(f"workflow {self.name!r} is already running here")
        self._active = True
        self.run_id = datetime.now().strftime("%Y%m%d-%H%M%S.%f")
        self.node_errors = {}
        trail = _SnapshotTrail(self, enabled=show, filename=filename)
        trail.record()
        return trail

    def _finish_run(self, trail: "_SnapshotTrail") -> None:
        self.clocks.t1 = datetime.now()
        self._active = False
        self.save()
        trail.record()
        trail.finish()

    def _complete_structural(self, name: str, trail: "_SnapshotTrail") -> None:
        node = self.graph.nodes[name]
        now = datetime.now()
        self.clocks.job_start.setdefault(name, now)
        node.status = Status.DONE
        node.progress = 100
        self.clocks.job_end[name] = now
        self.save()
        trail.record()

    def _launch(self, name: str, trail: "_SnapshotTrail") -> None:
        handle = self.handles[name]
        executor = executor_for(handle.node.kind)
        self._materialize_exec(handle)
        executor.clear(handle)
        executor.sync(handle)
        if self.clocks.t0 is None:
            self.clocks.t0 = datetime.now()
        self.clocks.job_start[name] = datetime.now()
        self.clocks.job_end.pop(name, None)
        executor.run(handle)
        self._save_meta(name)
        self.save()
        trail.record()

    def _execute(self, name: str, trail: "_SnapshotTrail", period: float) -> Status:
        """Run (or resume) one job to a terminal status."""
        handle = self.handles[name]
        executor = executor_for(handle.node.kind)
        if handle.node.status not in _RESUMABLE:
            self._launch(name, trail)

        def on_record(record):
            changed = (
                record.status is not handle.node.status
                or record.progress > handle.node.progress
            )
            handle.node.status = record.status
            handle.node.progress = max(handle.node.progress, record.progress)
            if changed:
                self.save()
                trail.record()

        final = executor.watch(handle, period=period, on_record=on_record)
        handle.node.status = final.status
        handle.node.progress = max(handle.node.progress, final.progress)
        self.clocks.job_end[name] = datetime.now()
        self.save()
        trail.record()
        return final.status

    def _poll_active(self, active: dict[str, JobHandle], trail: "_SnapshotTrail") -> None:
        for name in list(active):
            handle = active[name]
            executor = executor_for(handle.node.kind)
            try:
                record, _ = executor.probe(handle)
            except WorkflowError as exc:
                self.node_errors[name] = str(exc)
                continue
            if not record.status.terminal and executor.alive(handle) is False:
                record, _ = executor.probe(handle)
                if not record.status.terminal:
                    record.status = Status.FAILED
            changed = (
                record.status is not handle.node.status
                or record.progress > handle.node.progress
            )
            handle.node.status = record.status
            handle.node.progress = max(handle.node.progress, record.progress)
            if record.status.terminal:
                self.clocks.job_end[name] = datetime.now()
                del active[name]
            if changed:
                self.save()
                trail.record()

    def _materialize_exec(self, handle: JobHandle) -> None:
        """Write the generated wrapper for inline `exec` commands.

        Nodes with a script file are the user's responsibility and are
        never rewritten; exec one-liners get a generated script with the
        progress lines wrapped around them.
        """
        node = handle.node
        if node.script or not node.exec:
            return
        from .executors import create_script

        self.runtime.mkdir(parents=True, exist_ok=True)
        handle.source_script.write_text(create_script(handle, node.exec))


class _SnapshotTrail:
    """Numbered DOT snapshots of the run, one per state change."""

    def __init__(self, run: WorkflowRun, enabled: bool, filename: Path | str | None):
        self.run = run
        self.enabled = enabled
        self.filename = Path(filename) if filename else None
        self.counter = 0
        self.last: str | None = None
        if enabled:
            self.directory = run.runtime / "snapshots"
            if self.directory.exists():
                for old in self.directory.glob("*.dot"):
                    old.unlink()
            self.directory.mkdir(parents=True, exist_ok=True)

    def record(self) -> None:
        if not self.enabled:
            return
        dot = to_dot(self.run)
        if dot == self.last:
            return
        (self.directory / f"{self.counter:03d}.dot").write_text(dot)
        self.counter += 1
        self.last = dot

    def finish(self) -> None:
        if self.filename is not None:
            write_graph(self.run, self.filename)


def load_workflow(name_or_file: Path | str, root: Path | str | None = None) -> WorkflowRun:
    """Open a workflow by installed name, YAML file, or archive path.

    A file path that is not yet installed is installed first; an installed
    name (or the stem of an installed file) loads the stored state.
    """
    text = str(name_or_file)
    path = Path(text).expanduser()
    if path.suffix in (".yaml", ".yml", ".tar", ".tgz") or path.exists():
        if not path.exists():
            raise NotFound(f"no such workflow file: {path}")
        stem = _archive_workflow_name(path) if path.suffix in (".tar", ".tgz") else path.stem
        base = state_root(root)
        if (base / stem / f"{stem}.yaml").exists():
            return WorkflowRun.load(stem, root=base)
        return WorkflowRun.install(path, root=base)
    return WorkflowRun.load(text, root=root)


def _archive_workflow_name(archive: Path) -> str:
    try:
        with tarfile.open(archive) as tar:
            names = [
                m.name for m in tar.getmembers()
                if m.isfile() and (m.name.endswith(".yaml") or m.name.endswith(".yml"))
            ]
    except tarfile.TarError as exc:
        raise ArchiveError(f"cannot read archive {archive}: {exc}") from exc
    if len(names) != 1:
        raise ArchiveError(
            f"archive must contain exactly one workflow YAML, found {len(names)}"
        )
    return Path(names[0]).stem
