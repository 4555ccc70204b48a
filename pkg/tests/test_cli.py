import json
import os
import signal
import socket
import time
import webbrowser
import xml.etree.ElementTree as ElementTree
from pathlib import Path

import pytest
import requests
import yaml
from click.testing import CliRunner

from dagline.cli import main
from dagline.engine import WorkflowRun

from conftest import make_flow_archive, stub_script, workflow_yaml


@pytest.fixture
def cli_root(tmp_path, monkeypatch):
    store = tmp_path / "cli-store"
    monkeypatch.setenv("DAGLINE_ROOT", str(store))
    return store


@pytest.fixture
def runner():
    return CliRunner()


def invoke(runner, *args):
    return runner.invoke(main, list(args), catch_exceptions=False)


def make_source(tmp_path, name="flow", jobs=("a",), delay=0.05, done=True):
    source = tmp_path / f"{name}-src"
    nodes = {"start": {}}
    for job in jobs:
        stub_script(source / f"{job}.sh", steps=(1, 50), delay=delay, done=done)
        nodes[job] = {"kind": "local", "status": "ready", "script": f"{job}.sh"}
    nodes["end"] = {}
    chains = [f"start,{job},end" for job in jobs]
    (source / f"{name}.yaml").write_text(workflow_yaml(nodes, chains))
    return source / f"{name}.yaml"


def installed(runner, tmp_path, name="flow", **kwargs):
    path = make_source(tmp_path, name=name, **kwargs)
    result = invoke(runner, "cc", "workflow", "add", f"--name={name}", f"--filename={path}")
    assert result.exit_code == 0, result.output
    return path


# -- add ---------------------------------------------------------------------


def test_add_workflow_from_file(cli_root, runner, tmp_path):
    path = make_source(tmp_path)
    result = invoke(runner, "cc", "workflow", "add", "--name=flow", f"--filename={path}")
    assert result.exit_code == 0
    assert "added workflow 'flow' (3 nodes)" in result.output
    assert (cli_root / "flow" / "flow.yaml").exists()


def test_add_workflow_name_defaults_to_stem(cli_root, runner, tmp_path):
    path = make_source(tmp_path, name="stemmy")
    result = invoke(runner, "cc", "workflow", "add", f"--filename={path}")
    assert result.exit_code == 0
    assert "'stemmy'" in result.output


def test_add_duplicate_workflow_fails(cli_root, runner, tmp_path):
    path = installed(runner, tmp_path)
    result = invoke(runner, "cc", "workflow", "add", "--name=flow", f"--filename={path}")
    assert result.exit_code == 1
    assert "error" in result.output


def test_add_job_with_job_option(cli_root, runner, tmp_path):
    installed(runner, tmp_path)
    result = invoke(
        runner, "cc", "workflow", "add", "--name=flow", "--job=extra",
        "kind=local", "exec=echo hi", "user=alice",
    )
    assert result.exit_code == 0
    assert "added job 'extra'" in result.output
    run = WorkflowRun.load("flow")
    assert run.node("extra").command == "echo hi"
    assert run.node("extra").user == "alice"


def test_add_job_name_given_as_pair(cli_root, runner, tmp_path):
    installed(runner, tmp_path)
    result = invoke(
        runner, "cc", "workflow", "add", "--name=flow",
        "name=pairjob", "kind=local", "exec=true", "progress=0",
    )
    assert result.exit_code == 0
    assert WorkflowRun.load("flow").node("pairjob").kind is not None


def test_add_job_rejects_malformed_pair(cli_root, runner, tmp_path):
    installed(runner, tmp_path)
    result = invoke(runner, "cc", "workflow", "add", "--name=flow", "--job=x", "kindlocal")
    assert result.exit_code == 2
    assert "key=value" in result.output


def test_add_job_rejects_unknown_attribute(cli_root, runner, tmp_path):
    installed(runner, tmp_path)
    result = invoke(runner, "cc", "workflow", "add", "--name=flow", "--job=x", "color=red")
    assert result.exit_code == 2
    assert "unknown job attribute" in result.output


def test_add_job_requires_workflow_name(cli_root, runner):
    result = invoke(runner, "cc", "workflow", "add", "--job=x", "kind=local")
    assert result.exit_code == 2


def test_add_without_source_is_usage_error(cli_root, runner):
    result = invoke(runner, "cc", "workflow", "add")
    assert result.exit_code == 2


def test_add_filename_refuses_job_arguments(cli_root, runner, tmp_path):
    path = make_source(tmp_path)
    result = invoke(
        runner, "cc", "workflow", "add", f"--filename={path}", "kind=local"
    )
    assert result.exit_code == 2


def test_add_job_to_missing_workflow_fails(cli_root, runner):
    result = invoke(runner, "cc", "workflow", "add", "--name=ghost", "--job=x", "kind=local")
    assert result.exit_code == 1


# -- list --------------------------------------------------------------------


def test_list_names(cli_root, runner, tmp_path):
    installed(runner, tmp_path, name="alpha")
    installed(runner, tmp_path, name="beta")
    result = invoke(runner, "cc", "workflow", "list")
    assert result.exit_code == 0
    assert result.output.split() == ["alpha", "beta"]


def test_list_one_workflow_as_yaml(cli_root, runner, tmp_path):
    installed(runner, tmp_path)
    result = invoke(runner, "cc", "workflow", "list", "--name=flow")
    assert result.exit_code == 0
    document = yaml.safe_load(result.output)
    assert set(document["nodes"]) == {"start", "a", "end"}


def test_list_single_job(cli_root, runner, tmp_path):
    installed(runner, tmp_path)
    result = invoke(runner, "cc", "workflow", "list", "--name=flow", "--job=a")
    assert result.exit_code == 0
    body = yaml.safe_load(result.output)
    assert body["name"] == "a"
    assert body["script"] == "a.sh"


def test_list_unknown_workflow_fails(cli_root, runner):
    assert invoke(runner, "cc", "workflow", "list", "--name=ghost").exit_code == 1


def test_list_unknown_job_fails(cli_root, runner, tmp_path):
    installed(runner, tmp_path)
    result = invoke(runner, "cc", "workflow", "list", "--name=flow", "--job=nope")
    assert result.exit_code == 1


# -- delete ------------------------------------------------------------------


def test_delete_job(cli_root, runner, tmp_path):
    installed(runner, tmp_path)
    result = invoke(runner, "cc", "workflow", "delete", "--name=flow", "--job=a")
    assert result.exit_code == 0
    assert "a" not in WorkflowRun.load("flow").graph.nodes


def test_delete_workflow(cli_root, runner, tmp_path):
    installed(runner, tmp_path)
    result = invoke(runner, "cc", "workflow", "delete", "--name=flow")
    assert result.exit_code == 0
    assert not (cli_root / "flow").exists()


def test_delete_requires_name(cli_root, runner):
    assert invoke(runner, "cc", "workflow", "delete").exit_code == 2


def test_delete_unknown_workflow_fails(cli_root, runner):
    assert invoke(runner, "cc", "workflow", "delete", "--name=ghost").exit_code == 1


# -- dependencies ---------------------------------------------------------------


def test_add_dependencies_option(cli_root, runner, tmp_path):
    installed(runner, tmp_path)
    invoke(runner, "cc", "workflow", "add", "--name=flow", "--job=tail",
           "kind=local", "exec=true")
    result = invoke(runner, "cc", "workflow", "--name=flow", "--dependencies=a,tail")
    assert result.exit_code == 0
    assert ("a", "tail") in WorkflowRun.load("flow").graph.edges


def test_dependencies_require_name(cli_root, runner):
    result = invoke(runner, "cc", "workflow", "--dependencies=a,b")
    assert result.exit_code == 2


def test_bare_workflow_group_shows_usage(cli_root, runner):
    result = invoke(runner, "cc", "workflow")
    assert result.exit_code == 2
    assert "Usage" in result.output


def test_dependency_cycle_fails(cli_root, runner, tmp_path):
    installed(runner, tmp_path)
    result = invoke(runner, "cc", "workflow", "--name=flow", "--dependencies=end,start")
    assert result.exit_code == 1
    assert "error" in result.output


# -- run ---------------------------------------------------------------------


def test_run_by_name(cli_root, runner, tmp_path):
    installed(runner, tmp_path)
    result = invoke(runner, "cc", "workflow", "run", "--name=flow")
    assert result.exit_code == 0
    assert "| name" in result.output
    assert "done" in result.output
    run = WorkflowRun.load("flow")
    assert all(n.status.value == "done" for n in run.graph.nodes.values())
    assert run.node("a").progress == 100


def test_run_single_job(cli_root, runner, tmp_path):
    installed(runner, tmp_path, jobs=("a", "b"))
    result = invoke(runner, "cc", "workflow", "run", "--name=flow", "--job=a")
    assert result.exit_code == 0
    run = WorkflowRun.load("flow")
    assert run.node("a").status.value == "done"
    assert run.node("b").status.value == "ready"


def test_run_by_filename_installs_then_runs(cli_root, runner, tmp_path):
    path = make_source(tmp_path, name="direct")
    result = invoke(runner, "cc", "workflow", "run", f"--filename={path}")
    assert result.exit_code == 0
    assert WorkflowRun.load("direct").node("a").progress == 100


def test_run_requires_name_or_filename(cli_root, runner):
    assert invoke(runner, "cc", "workflow", "run").exit_code == 2


def test_run_unknown_workflow_fails(cli_root, runner):
    assert invoke(runner, "cc", "workflow", "run", "--name=ghost").exit_code == 1


def test_run_reports_failed_jobs(cli_root, runner, tmp_path):
    source = tmp_path / "crashy-src"
    script = source / "boom.sh"
    script.parent.mkdir(parents=True)
    script.write_text("#!/bin/sh\nexit 3\n")
    script.chmod(0o755)
    (source / "crashy.yaml").write_text(workflow_yaml(
        {"start": {}, "boom": {"kind": "local", "status": "ready", "script": "boom.sh"},
         "end": {}},
        ["start,boom,end"],
    ))
    invoke(runner, "cc", "workflow", "add", f"--filename={source / 'crashy.yaml'}")
    result = invoke(runner, "cc", "workflow", "run", "--name=crashy")
    assert result.exit_code == 1
    assert "failed jobs: boom" in result.output


# -- status and graph -------------------------------------------------------------


def test_status_table(cli_root, runner, tmp_path):
    installed(runner, tmp_path)
    result = invoke(runner, "cc", "workflow", "status", "--name=flow")
    assert result.exit_code == 0
    lines = result.output.splitlines()
    assert lines[0].startswith("+-")
    assert "| name" in lines[1]
    assert any("| a " in line and "ready" in line for line in lines)


def test_status_json(cli_root, runner, tmp_path):
    installed(runner, tmp_path)
    result = invoke(runner, "cc", "workflow", "status", "--name=flow", "--output=json")
    assert result.exit_code == 0
    body = json.loads(result.output)
    assert body["name"] == "flow"
    assert body["nodes"]["a"]["status"] == "ready"


def test_status_yaml(cli_root, runner, tmp_path):
    installed(runner, tmp_path)
    result = invoke(runner, "cc", "workflow", "status", "--name=flow", "--output=yaml")
    assert result.exit_code == 0
    assert yaml.safe_load(result.output)["name"] == "flow"


def test_status_rejects_unknown_format(cli_root, runner, tmp_path):
    installed(runner, tmp_path)
    result = invoke(runner, "cc", "workflow", "status", "--name=flow", "--output=xml")
    assert result.exit_code == 2


def test_status_requires_name(cli_root, runner):
    assert invoke(runner, "cc", "workflow", "status").exit_code == 2


def test_graph_writes_svg(cli_root, runner, tmp_path):
    installed(runner, tmp_path)
    result = invoke(runner, "cc", "workflow", "graph", "--name=flow")
    assert result.exit_code == 0
    target = Path(result.output.strip())
    assert target.exists()
    assert ElementTree.parse(target).getroot().tag.endswith("svg")


def test_unknown_subcommand(cli_root, runner):
    result = runner.invoke(main, ["cc", "workflow", "frobnicate"])
    assert result.exit_code == 2


def test_help_screens(runner):
    assert invoke(runner, "--help").exit_code == 0
    result = invoke(runner, "cc", "--help")
    assert result.exit_code == 0
    for command in ("start", "stop", "status", "view", "workflow"):
        assert command in result.output


# -- service process management ------------------------------------------------


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


def test_view_opens_browser(cli_root, runner, monkeypatch):
    seen = []
    monkeypatch.setattr(webbrowser, "open", lambda url: seen.append(url))
    result = invoke(runner, "cc", "view")
    assert result.exit_code == 0
    assert seen == ["http://127.0.0.1:8000"]


def test_view_uses_recorded_address(cli_root, runner, monkeypatch):
    cli_root.mkdir(parents=True)
    (cli_root / "service.json").write_text(
        json.dumps({"pid": 1, "host": "127.0.0.1", "port": 9555})
    )
    seen = []
    monkeypatch.setattr(webbrowser, "open", lambda url: seen.append(url))
    invoke(runner, "cc", "view")
    assert seen == ["http://127.0.0.1:9555"]


def test_stop_without_service(cli_root, runner):
    result = invoke(runner, "cc", "stop")
    assert result.exit_code == 1
    assert "not running" in result.output


def test_status_without_service(cli_root, runner):
    result = invoke(runner, "cc", "status")
    assert result.exit_code == 1
    assert "not running" in result.output


def test_status_with_stale_record(cli_root, runner):
    cli_root.mkdir(parents=True)
    (cli_root / "service.json").write_text(
        json.dumps({"pid": 1, "host": "127.0.0.1", "port": free_port()})
    )
    result = invoke(runner, "cc", "status")
    assert result.exit_code == 1
    assert "not responding" in result.output


def test_start_refuses_second_service(cli_root, runner):
    cli_root.mkdir(parents=True)
    (cli_root / "service.json").write_text(
        json.dumps({"pid": os.getpid(), "host": "127.0.0.1", "port": 8000})
    )
    result = invoke(runner, "cc", "start", "-c")
    assert result.exit_code == 1
    assert "already running" in result.output


def test_start_console_mode(cli_root, runner, monkeypatch):
    import uvicorn

    calls = []

    def fake_run(app, **kwargs):
        calls.append((app, kwargs))
        assert (cli_root / "service.json").exists()

    monkeypatch.setattr(uvicorn, "run", fake_run)
    result = invoke(runner, "cc", "start", "-c", "--port=8123")
    assert result.exit_code == 0
    assert len(calls) == 1
    assert calls[0][1]["port"] == 8123
    assert not (cli_root / "service.json").exists()


def test_service_mode_needs_reachable_service(cli_root, runner):
    cli_root.mkdir(parents=True)
    (cli_root / "service.json").write_text(
        json.dumps({"pid": 1, "host": "127.0.0.1", "port": free_port()})
    )
    result = invoke(runner, "cc", "workflow", "service", "list")
    assert result.exit_code == 1
    assert "cannot reach the service" in result.output


def test_service_lifecycle(cli_root, runner, tmp_path):
    port = free_port()
    result = invoke(runner, "cc", "start", f"--port={port}")
    assert result.exit_code == 0, result.output
    assert "service running at" in result.output
    record = json.loads((cli_root / "service.json").read_text())
    try:
        result = invoke(runner, "cc", "status")
        assert result.exit_code == 0
        assert "running at" in result.output

        archive = make_flow_archive(tmp_path, name="webflow")
        result = invoke(runner, "cc", "workflow", "service", "add", str(archive))
        assert result.exit_code == 0
        assert "uploaded workflow 'webflow'" in result.output

        result = invoke(runner, "cc", "workflow", "service", "list")
        assert result.exit_code == 0
        assert "webflow" in result.output.split()

        result = invoke(
            runner, "cc", "workflow", "service", "add", "--name=webflow",
            "--job=late", "kind=local", "exec=true",
        )
        assert result.exit_code == 0

        result = invoke(
            runner, "cc", "workflow", "service", "list", "--name=webflow", "--job=late"
        )
        assert result.exit_code == 0
        assert yaml.safe_load(result.output)["name"] == "late"

        result = invoke(runner, "cc", "workflow", "service", "run", "--name=webflow")
        assert result.exit_code == 0
        assert "run of 'webflow' started" in result.output

        deadline = time.time() + 30
        url = f"http://127.0.0.1:{port}/workflow/webflow"
        while time.time() < deadline:
            nodes = requests.get(url, timeout=5).json()["nodes"]
            if all(node["status"] == "done" for node in nodes.values()):
                break
            time.sleep(0.3)
        else:
            raise AssertionError("service run did not finish in time")

        result = invoke(runner, "cc", "stop")
        assert result.exit_code == 0
        assert not (cli_root / "service.json").exists()

        assert invoke(runner, "cc", "status").exit_code == 1
    finally:
        try:
            os.killpg(record["pid"], signal.SIGKILL)
        except (ProcessLookupError, PermissionError):
            pass
