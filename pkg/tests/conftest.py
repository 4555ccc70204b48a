import os
import shutil
import stat
import subprocess
import tarfile
import textwrap
from pathlib import Path

import pytest

from dagline.example import example_directory

EXAMPLE_YAML = (example_directory() / "workflow-example.yaml").read_text()


@pytest.fixture(scope="session", autouse=True)
def _session_store(tmp_path_factory):
    """Keep every test away from the user's real state root."""
    path = tmp_path_factory.mktemp("default-store")
    previous = os.environ.get("DAGLINE_ROOT")
    os.environ["DAGLINE_ROOT"] = str(path)
    yield path
    if previous is None:
        os.environ.pop("DAGLINE_ROOT", None)
    else:
        os.environ["DAGLINE_ROOT"] = previous


@pytest.fixture
def root(tmp_path):
    """A fresh state root for one test."""
    return tmp_path / "store"


def write_script(path: Path, body: str) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("#!/bin/sh\n" + textwrap.dedent(body).lstrip())
    path.chmod(path.stat().st_mode | stat.S_IXUSR)
    return path


def stub_script(path: Path, steps=(1, 50), delay=0.1, done=True) -> Path:
    """A script reporting the given progress steps, then optionally done."""
    lines = []
    for step in steps:
        lines.append(f'echo "# cloudmesh status=running progress={step} pid=$$"')
        lines.append(f"sleep {delay}")
    if done:
        lines.append('echo "# cloudmesh status=done progress=100 pid=$$"')
    return write_script(path, "\n".join(lines) + "\n")


def workflow_yaml(nodes: dict[str, dict], dependencies: list[str]) -> str:
    """Compose a workflow document from plain dicts (YAML by hand keeps
    the node ordering explicit)."""
    out = ["workflow:", "  nodes:"]
    for name, attrs in nodes.items():
        out.append(f"    {name}:")
        out.append(f"      name: {name}")
        for key, value in attrs.items():
            out.append(f"      {key}: {value}")
    out.append("  dependencies:")
    for chain in dependencies:
        out.append(f"    - {chain}")
    return "\n".join(out) + "\n"


def make_flow_archive(tmp_path: Path, name="tiny", delay=0.05, jobs=("a",)) -> Path:
    """A tar bundling start -> jobs -> end with short local stub scripts."""
    source = tmp_path / f"{name}-archive-src"
    nodes: dict[str, dict] = {"start": {}}
    for job in jobs:
        stub_script(source / f"{job}.sh", steps=(1, 50), delay=delay)
        nodes[job] = {"kind": "local", "status": "ready", "script": f"{job}.sh"}
    nodes["end"] = {}
    chains = [f"start,{job},end" for job in jobs]
    (source / f"{name}.yaml").write_text(workflow_yaml(nodes, chains))

    archive = tmp_path / f"{name}.tar"
    with tarfile.open(archive, "w") as tar:
        for member in sorted(source.iterdir()):
            tar.add(member, arcname=member.name)
    return archive


def install_local_workflow(tmp_path: Path, root: Path, name: str, jobs: dict[str, str],
                           dependencies: list[str], delay=0.1, steps=(1, 50)):
    """Install a workflow of local stub jobs; jobs maps job name -> script name."""
    from dagline.engine import WorkflowRun

    source = tmp_path / f"{name}-src"
    source.mkdir(parents=True, exist_ok=True)
    nodes: dict[str, dict] = {"start": {}}
    for job, script in jobs.items():
        stub_script(source / script, steps=steps, delay=delay)
        nodes[job] = {"kind": "local", "status": "ready", "script": script}
    nodes["end"] = {}
    (source / f"{name}.yaml").write_text(workflow_yaml(nodes, dependencies))
    return WorkflowRun.install(source / f"{name}.yaml", root=root)


_SSH_PROBE: bool | None = None


def ssh_available() -> bool:
    """True when passwordless ssh to localhost actually works here."""
    global _SSH_PROBE
    if _SSH_PROBE is None:
        if shutil.which("ssh") is None:
            _SSH_PROBE = False
        else:
            try:
                result = subprocess.run(
                    ["ssh", "-o", "BatchMode=yes", "-o", "ConnectTimeout=2",
                     "localhost", "true"],
                    capture_output=True, timeout=5,
                )
                _SSH_PROBE = result.returncode == 0
            except (subprocess.TimeoutExpired, OSError):
                _SSH_PROBE = False
    return _SSH_PROBE


@pytest.fixture
def fake_remote(tmp_path, monkeypatch):
    """ssh/scp shims that execute 'remote' commands against a local home.

    Lets the ssh executor run for real without a daemon: commands go
    through a fake ssh binary that substitutes HOME, and scp copies into
    the same fake home.
    """
    bin_dir = tmp_path / "fakebin"
    home = tmp_path / "fakehome"
    bin_dir.mkdir()
    home.mkdir()
    write_script(
        bin_dir / "ssh",
        """
        for last in "$@"; do :; done
        HOME="$FAKE_HOME" bash -c "$last"
        """,
    )
    write_script(
        bin_dir / "scp",
        """
        prev=""; last=""
        for arg in "$@"; do prev="$last"; last="$arg"; done
        path="${last#*:}"
        mkdir -p "$FAKE_HOME/$(dirname "$path")"
        cp "$prev" "$FAKE_HOME/$path"
        """,
    )
    monkeypatch.setenv("FAKE_HOME", str(home))
    monkeypatch.setenv("PATH", f"{bin_dir}:{os.environ['PATH']}")
    return home


@pytest.fixture
def unreachable_remote(tmp_path, monkeypatch):
    """ssh/scp shims that always fail like a dead transport (exit 255)."""
    bin_dir = tmp_path / "deadbin"
    bin_dir.mkdir()
    write_script(bin_dir / "ssh", 'echo "ssh: connect to host: refused" >&2\nexit 255\n')
    write_script(bin_dir / "scp", 'echo "scp: connection failed" >&2\nexit 255\n')
    monkeypatch.setenv("PATH", f"{bin_dir}:{os.environ['PATH']}")
    return bin_dir


@pytest.fixture
def slurm_stub(tmp_path, monkeypatch):
    """sbatch/squeue/scancel stubs backed by detached local processes.

    sbatch honors the #SBATCH --output directive, runs the script in the
    background, and answers with the canonical submission line; scancel
    records every call in calls.log.
    """
    bin_dir = tmp_path / "slurmbin"
    jobs = tmp_path / "slurmjobs"
    bin_dir.mkdir()
    jobs.mkdir()
    write_script(
        bin_dir / "sbatch",
        """
        for script in "$@"; do :; done
        out=$(sed -n 's/^#SBATCH --output=//p' "$script" | head -1)
        out=${out:-slurm.out}
        nohup setsid bash "$script" >> "$out" 2>&1 < /dev/null &
        echo $! > "$SLURM_STUB_DIR/job-12345.pid"
        echo "Submitted batch job 12345"
        """,
    )
    write_script(
        bin_dir / "squeue",
        """
        for id in "$@"; do :; done
        pidfile="$SLURM_STUB_DIR/job-$id.pid"
        if [ -f "$pidfile" ] && ps -o stat= -p "$(cat "$pidfile")" 2>/dev/null | grep -vq Z; then
            echo "$id batch-job"
        fi
        exit 0
        """,
    )
    write_script(
        bin_dir / "scancel",
        """
        echo "scancel $@" >> "$SLURM_STUB_DIR/calls.log"
        pidfile="$SLURM_STUB_DIR/job-$1.pid"
        if [ -f "$pidfile" ]; then
            kill -TERM -- -"$(cat "$pidfile")" 2>/dev/null || kill -TERM "$(cat "$pidfile")" 2>/dev/null
        fi
        exit 0
        """,
    )
    monkeypatch.setenv("SLURM_STUB_DIR", str(jobs))
    monkeypatch.setenv("PATH", f"{bin_dir}:{os.environ['PATH']}")
    return jobs
