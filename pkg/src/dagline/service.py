"""REST facade over the engine.

Every request works against the state store on disk, so the service can be
stopped and restarted at any time without losing track of running jobs; a
GET after restart probes the job logs and reports the recovered state.
Mutations are serialized per workflow name, and at most one run per
workflow is active in this process at a time.
"""

from __future__ import annotations

import logging
import os
import shutil
import tempfile
import threading
from pathlib import Path

from fastapi import FastAPI, File, HTTPException, UploadFile
from fastapi.responses import FileResponse
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from . import example
from .engine import WorkflowRun, list_workflows, state_root
from .errors import (
    ActiveRun,
    ArchiveError,
    DuplicateName,
    NotFound,
    SchemaError,
    UnknownKind,
    WorkflowError,
)
from .render import write_graph

logger = logging.getLogger(__name__)

DEFAULT_HOST = "127.0.0.1"
DEFAULT_PORT = 8000


def _status_for(exc: WorkflowError) -> int:
    if isinstance(exc, NotFound):
        return 404
    if isinstance(exc, (DuplicateName, ActiveRun)):
        return 409
    if isinstance(exc, UnknownKind):
        return 422
    if isinstance(exc, (ArchiveError, SchemaError)):
        return 400
    return 400


class JobBody(BaseModel):
    name: str
    user: str | None = None
    host: str | None = None
    kind: str | None = None
    status: str | None = None
    progress: int | None = None
    label: str | None = None
    script: str | None = None
    exec: str | None = None
    shape: str | None = None
    style: str | None = None
    venv: str | None = None


def create_app(root: Path | str | None = None) -> FastAPI:
    """Build the service application bound to one state root."""
    app = FastAPI(
        title="dagline",
        description="Workflow management over local, ssh, and Slurm resources.",
        version="1.0.0",
    )

    registry: dict[str, threading.Thread] = {}
    registry_lock = threading.Lock()
    name_locks: dict[str, threading.Lock] = {}
    name_locks_guard = threading.Lock()

    def lock_for(name: str) -> threading.Lock:
        with name_locks_guard:
            return name_locks.setdefault(name, threading.Lock())

    def fail(exc: WorkflowError):
        raise HTTPException(status_code=_status_for(exc), detail=str(exc)) from exc

    def load(name: str) -> WorkflowRun:
        try:
            return WorkflowRun.load(name, root=root)
        except WorkflowError as exc:
            fail(exc)

    def running_here(name: str) -> bool:
        with registry_lock:
            thread = registry.get(name)
            return thread is not None and thread.is_alive()

    @app.get("/workflows")
    def get_workflows() -> list[str]:
        return list_workflows(root)

    @app.post("/workflow")
    def post_workflow(
        archive: str | None = None,
        name: str | None = None,
        file: UploadFile | None = File(None),
    ) -> dict:
        """Install a workflow from a server-local path or an uploaded archive."""
        if archive is None and file is None:
            raise HTTPException(
                status_code=400,
                detail="provide ?archive=<server-local path> or upload a file",
            )
        try:
            if archive is not None:
                run = WorkflowRun.install(archive, name=name, root=root)
            else:
                filename = Path(file.filename or "workflow.tar").name
                with tempfile.TemporaryDirectory() as scratch:
                    staged = Path(scratch) / filename
                    with staged.open("wb") as sink:
                        shutil.copyfileobj(file.file, sink)
                    run = WorkflowRun.install(staged, name=name, root=root)
        except WorkflowError as exc:
            fail(exc)
        return {
            "name": run.name,
            "nodes": len(run.graph.nodes),
            "warnings": run.document.warnings,
        }

    @app.post("/workflow/example")
    def post_example() -> dict:
        """Install the bundled five-node example workflow (idempotent)."""
        if "workflow-example" in list_workflows(root):
            return {"name": "workflow-example", "installed": False}
        try:
            run = example.install_example(root=root)
        except WorkflowError as exc:
            fail(exc)
        return {"name": run.name, "installed": True, "nodes": len(run.graph.nodes)}

    @app.get("/workflow/run/{name}")
    def run_workflow(name: str, show: bool = True) -> dict:
        """Start a topological run; returns immediately while the run proceeds."""
        load(name)
        with registry_lock:
            thread = registry.get(name)
            if thread is not None and thread.is_alive():
                raise HTTPException(
                    status_code=409, detail=f"workflow {name!r} is already running"
                )

            def execute():
                try:
                    WorkflowRun.load(name, root=root).run_topo(show=show)
                except Exception:
                    logger.exception("run of workflow %r failed", name)

            thread = threading.Thread(target=execute, name=f"run-{name}", daemon=True)
            registry[name] = thread
            thread.start()
        return {"name": name, "status": "started", "show": show}

    @app.get("/workflow/{name}")
    def get_workflow(name: str, job: str | None = None) -> dict:
        run = load(name)
        try:
            run.refresh()
        except WorkflowError as exc:
            fail(exc)
        document = run.to_mapping()
        if job is None:
            return document
        if job not in document["nodes"]:
            raise HTTPException(
                status_code=404, detail=f"no job named {job!r} in workflow {name!r}"
            )
        return document["nodes"][job]

    @app.delete("/workflow/{name}")
    def delete_workflow(name: str, job: str | None = None) -> dict:
        if running_here(name):
            raise HTTPException(
                status_code=409, detail=f"workflow {name!r} is currently running"
            )
        with lock_for(name):
            run = load(name)
            try:
                run.refresh()
                message = run.remove_job(job) if job else run.remove_workflow()
            except WorkflowError as exc:
                fail(exc)
        return {"message": message}

    @app.post("/workflow/{name}/job")
    def post_job(name: str, body: JobBody) -> dict:
        with lock_for(name):
            run = load(name)
            attributes = {
                key: value
                for key, value in body.model_dump().items()
                if key != "name" and value is not None
            }
            try:
                run.add_job(body.name, **attributes)
            except WorkflowError as exc:
                fail(exc)
        return {"name": name, "job": body.name, "nodes": len(run.graph.nodes)}

    @app.get("/workflow/{name}/graph")
    def get_graph(name: str) -> FileResponse:
        """The current graph as SVG, re-rendered from live state."""
        run = load(name)
        try:
            run.refresh()
            target = run.runtime / "graph.svg"
            write_graph(run, target)
        except WorkflowError as exc:
            fail(exc)
        return FileResponse(target, media_type="image/svg+xml")

    ui = os.environ.get("DAGLINE_UI") or str(Path(__file__).parent / "ui")
    if Path(ui).joinpath("index.html").is_file():
        app.mount("/", StaticFiles(directory=ui, html=True), name="ui")
    else:

        @app.get("/")
        def index() -> dict:
            return {"service": "dagline", "docs": "/docs", "workflows": "/workflows"}

    return app


def main(argv: list[str] | None = None) -> None:
    import argparse

    import uvicorn

    parser = argparse.ArgumentParser(description="Run the dagline REST service.")
    parser.add_argument("--host", default=DEFAULT_HOST)
    parser.add_argument("--port", type=int, default=DEFAULT_PORT)
    parser.add_argument("--root", default=None, help="state root directory")
    arguments = parser.parse_args(argv)
    if arguments.root:
        os.environ["DAGLINE_ROOT"] = arguments.root
    state_root(arguments.root)
    uvicorn.run(create_app(arguments.root), host=arguments.host, port=arguments.port)


if __name__ == "__main__":
    main()
