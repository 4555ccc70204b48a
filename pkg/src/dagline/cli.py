"""Terminal interface.

Two modes under the `cc` prefix: command-line mode talks straight to the
engine and touches no network; service mode manages the REST service
process (start/stop/status/view) and proxies workflow verbs through it
(`workflow service add|list|run`).
"""

from __future__ import annotations

import functools
import json
import os
import signal
import subprocess
import sys
import time
import webbrowser
from pathlib import Path

import click
import requests
import yaml

from .engine import WorkflowRun, list_workflows, load_workflow, state_root
from .errors import WorkflowError
from .model import Status
from .render import write_graph
from .restclient import WorkflowServiceClient
from .service import DEFAULT_HOST, DEFAULT_PORT

_JOB_KEYS = {
    "name", "user", "host", "kind", "status", "progress",
    "label", "script", "exec", "shape", "style", "venv",
}


def _fallible(func):
    """Map engine errors to exit 1 while leaving usage errors at exit 2."""

    @functools.wraps(func)
    def wrapper(*args, **kwargs):
        try:
            return func(*args, **kwargs)
        except click.ClickException:
            raise
        except WorkflowError as exc:
            click.echo(f"error: {exc}", err=True)
            raise SystemExit(1) from exc
        except requests.RequestException as exc:
            click.echo(f"error: cannot reach the service: {exc}", err=True)
            raise SystemExit(1) from exc

    return wrapper


def _parse_job_args(pairs: tuple[str, ...]) -> dict:
    attributes = {}
    for pair in pairs:
        key, separator, value = pair.partition("=")
        if not separator or not key:
            raise click.UsageError(f"job arguments must be key=value, got {pair!r}")
        if key not in _JOB_KEYS:
            raise click.UsageError(
                f"unknown job attribute {key!r}; expected one of "
                + ", ".join(sorted(_JOB_KEYS))
            )
        attributes[key] = int(value) if key == "progress" else value
    return attributes


def _format_table(rows: list[dict]) -> str:
    columns = ["name", "status", "progress", "host", "user", "kind", "command"]
    table = [[str(row.get(c) if row.get(c) is not None else "") for c in columns] for row in rows]
    widths = [
        max(len(header), *(len(line[i]) for line in table)) if table else len(header)
        for i, header in enumerate(columns)
    ]
    render = lambda cells: "| " + " | ".join(c.ljust(w) for c, w in zip(cells, widths)) + " |"  # noqa: E731
    rule = "+" + "+".join("-" * (w + 2) for w in widths) + "+"
    lines = [rule, render(columns), rule]
    lines += [render(line) for line in table]
    lines.append(rule)
    return "\n".join(lines)


def _service_file() -> Path:
    return state_root() / "service.json"


def _service_url() -> str:
    try:
        data = json.loads(_service_file().read_text())
        return f"http://{data['host']}:{data['port']}"
    except (OSError, ValueError, KeyError):
        return f"http://{DEFAULT_HOST}:{DEFAULT_PORT}"


def _client() -> WorkflowServiceClient:
    return WorkflowServiceClient(_service_url())


@click.group()
def main():
    """Workflow management for DAGs of jobs on local, ssh, and Slurm resources."""


@main.group()
def cc():
    """Workflow commands (command-line mode and service mode)."""


# -- service process management -------------------------------------------------


@cc.command()
@click.option("-c", "console", is_flag=True, help="Run in the foreground.")
@click.option("--reload", "reload_", is_flag=True, help="Auto-reload on code changes.")
@click.option("--host", default=DEFAULT_HOST, show_default=True)
@click.option("--port", default=DEFAULT_PORT, show_default=True, type=int)
@_fallible
def start(console: bool, reload_: bool, host: str, port: int):
    """Start the REST service."""
    record = _service_file()
    if record.exists():
        try:
            pid = json.loads(record.read_text())["pid"]
            os.kill(pid, 0)
            click.echo(f"error: service already running (pid {pid})", err=True)
            raise SystemExit(1)
        except (OSError, ValueError, KeyError):
            record.unlink(missing_ok=True)

    if console:
        import uvicorn

        record.write_text(json.dumps({"pid": os.getpid(), "host": host, "port": port}))
        try:
            if reload_:
                uvicorn.run(
                    "dagline.service:create_app",
                    factory=True, reload=True, host=host, port=port,
                )
            else:
                from .service import create_app

                uvicorn.run(create_app(), host=host, port=port)
        finally:
            record.unlink(missing_ok=True)
        return

    log_path = state_root() / "service.log"
    command = [
        sys.executable, "-m", "uvicorn", "dagline.service:create_app",
        "--factory", "--host", host, "--port", str(port),
    ]
    if reload_:
        command.append("--reload")
    with log_path.open("ab") as log:
        process = subprocess.Popen(
            command, stdout=log, stderr=log, start_new_session=True
        )
    record.write_text(json.dumps({"pid": process.pid, "host": host, "port": port}))

    url = f"http://{host}:{port}"
    deadline = time.time() + 15
    while time.time() < deadline:
        if process.poll() is not None:
            record.unlink(missing_ok=True)
            tail = "\n".join(log_path.read_text().splitlines()[-10:])
            click.echo(f"error: service exited at startup:\n{tail}", err=True)
            raise SystemExit(1)
        try:
            requests.get(f"{url}/workflows", timeout=1)
            break
        except requests.RequestException:
            time.sleep(0.2)
    click.echo(f"service running at {url} (pid {process.pid}, docs at {url}/docs)")


@cc.command()
@_fallible
def stop():
    """Stop the REST service."""
    record = _service_file()
    if not record.exists():
        click.echo("service is not running", err=True)
        raise SystemExit(1)
    data = json.loads(record.read_text())
    try:
        os.killpg(data["pid"], signal.SIGTERM)
    except (ProcessLookupError, PermissionError):
        try:
            os.kill(data["pid"], signal.SIGTERM)
        except ProcessLookupError:
            pass
    record.unlink(missing_ok=True)
    click.echo("service stopped")


@cc.command(name="status")
@_fallible
def service_status():
    """Report whether the REST service is reachable."""
    record = _service_file()
    url = _service_url()
    if not record.exists():
        click.echo("service: not running")
        raise SystemExit(1)
    try:
        names = requests.get(f"{url}/workflows", timeout=3).json()
    except requests.RequestException:
        click.echo(f"service: not responding at {url}", err=True)
        raise SystemExit(1) from None
    click.echo(f"service: running at {url} ({len(names)} workflows)")


@cc.command()
@_fallible
def view():
    """Open the browser UI."""
    url = _service_url()
    webbrowser.open(url)
    click.echo(url)


# -- command-line mode ------------------------------------------------------------


@cc.group(invoke_without_command=True)
@click.option("--name", default=None, help="Workflow name.")
@click.option("--dependencies", default=None, help="Comma-separated dependency chain.")
@click.pass_context
@_fallible
def workflow(ctx: click.Context, name: str | None, dependencies: str | None):
    """Operate on workflows directly (no service involved)."""
    if ctx.invoked_subcommand is not None:
        return
    if dependencies is None:
        raise click.UsageError(ctx.get_help())
    if name is None:
        raise click.UsageError("--dependencies requires --name")
    run = WorkflowRun.load(name)
    run.add_dependencies(dependencies)
    click.echo(f"added dependencies {dependencies!r} to {name!r}")


@workflow.command(name="add")
@click.option("--name", default=None)
@click.option("--job", default=None)
@click.option("--filename", default=None, type=click.Path())
@click.argument("args", nargs=-1)
@_fallible
def workflow_add(name, job, filename, args):
    """Install a workflow from a file, or add a job given key=value args."""
    if filename:
        if args or job:
            raise click.UsageError("--filename does not take job arguments")
        run = WorkflowRun.install(filename, name=name)
        click.echo(f"added workflow {run.name!r} ({len(run.graph.nodes)} nodes)")
        return
    if not job and not args:
        raise click.UsageError("provide --filename, or --job/ARGS to add a job")
    attributes = _parse_job_args(args)
    job = job or attributes.pop("name", None)
    if not job:
        raise click.UsageError("job name missing: pass --job=NAME or name=NAME")
    if not name:
        raise click.UsageError("--name=WORKFLOW is required to add a job")
    attributes.pop("name", None)
    run = WorkflowRun.load(name)
    run.add_job(job, **attributes)
    click.echo(f"added job {job!r} to workflow {name!r}")


@workflow.command(name="delete")
@click.option("--name", default=None)
@click.option("--job", default=None)
@_fallible
def workflow_delete(name, job):
    """Delete a workflow, or one job with --job."""
    if not name:
        raise click.UsageError("--name=WORKFLOW is required")
    run = WorkflowRun.load(name)
    click.echo(run.remove_job(job) if job else run.remove_workflow())


@workflow.command(name="list")
@click.option("--name", default=None)
@click.option("--job", default=None)
@_fallible
def workflow_list(name, job):
    """List workflows, or show one workflow / one job."""
    if name is None:
        for entry in list_workflows():
            click.echo(entry)
        return
    run = WorkflowRun.load(name)
    document = run.to_mapping()
    if job is not None:
        if job not in document["nodes"]:
            raise WorkflowError(f"no job named {job!r} in workflow {name!r}")
        document = document["nodes"][job]
    click.echo(yaml.safe_dump(document, sort_keys=False).rstrip())


@workflow.command(name="run")
@click.option("--name", default=None)
@click.option("--job", default=None)
@click.option("--filename", default=None, type=click.Path())
@_fallible
def workflow_run(name, job, filename):
    """Run a workflow to completion in the terminal."""
    if filename:
        run = load_workflow(filename)
    elif name:
        run = WorkflowRun.load(name)
    else:
        raise click.UsageError("provide --name or --filename")
    order = [job] if job else None
    run.run_topo(order=order)
    click.echo(_format_table(run.table_rows()))
    bad = [
        n.name for n in run.graph.nodes.values()
        if n.status in (Status.FAILED, Status.KILLED)
    ]
    if bad:
        click.echo(f"failed jobs: {', '.join(bad)}", err=True)
        raise SystemExit(1)


@workflow.command(name="status")
@click.option("--name", required=True)
@click.option("--output", default="table", show_default=True)
@_fallible
def workflow_status(name, output):
    """Show live workflow status as a table, json, or yaml."""
    if output not in ("table", "json", "yaml"):
        raise click.UsageError(f"unknown output format {output!r}")
    run = WorkflowRun.load(name)
    run.refresh()
    if output == "table":
        click.echo(_format_table(run.table_rows()))
    elif output == "json":
        click.echo(json.dumps(run.to_mapping(), indent=2))
    else:
        click.echo(yaml.safe_dump(run.to_mapping(), sort_keys=False).rstrip())


@workflow.command(name="graph")
@click.option("--name", required=True)
@_fallible
def workflow_graph(name):
    """Render the workflow graph to an SVG file and print its path."""
    run = WorkflowRun.load(name)
    target = run.runtime / f"{name}.svg"
    write_graph(run, target)
    click.echo(str(target))


# -- service mode workflow verbs ----------------------------------------------------


@workflow.group()
def service():
    """Workflow verbs executed through the REST service."""


@service.command(name="add")
@click.option("--name", default=None)
@click.option("--job", default=None)
@click.argument("args", nargs=-1)
@_fallible
def service_add(name, job, args):
    """Upload a workflow file, or add a job given key=value args."""
    files = [a for a in args if "=" not in a]
    pairs = tuple(a for a in args if "=" in a)
    if files:
        if len(files) > 1 or pairs or job:
            raise click.UsageError("pass one FILENAME, or key=value job arguments")
        report = _client().upload_workflow(files[0], name=name)
        click.echo(f"uploaded workflow {report['name']!r} ({report['nodes']} nodes)")
        return
    if not pairs and not job:
        raise click.UsageError("provide FILENAME, or --job/ARGS to add a job")
    if not name:
        raise click.UsageError("--name=WORKFLOW is required to add a job")
    attributes = _parse_job_args(pairs)
    job = job or attributes.pop("name", None)
    if not job:
        raise click.UsageError("job name missing: pass --job=NAME or name=NAME")
    attributes.pop("name", None)
    _client().add_job(name, job, **attributes)
    click.echo(f"added job {job!r} to workflow {name!r}")


@service.command(name="list")
@click.option("--name", default=None)
@click.option("--job", default=None)
@_fallible
def service_list(name, job):
    """List workflows on the service, or show one workflow / job."""
    client = _client()
    if name is None:
        for entry in client.list_workflows():
            click.echo(entry)
        return
    click.echo(yaml.safe_dump(client.get_workflow(name, job=job), sort_keys=False).rstrip())


@service.command(name="run")
@click.option("--name", required=True)
@_fallible
def service_run(name):
    """Trigger a run on the service; poll status to follow it."""
    report = _client().run_workflow(name)
    click.echo(f"run of {report['name']!r} started")


if __name__ == "__main__":
    main()
