"""Bind jobs to compute backends: local shell, ssh hosts, Slurm queues.

All durable runtime state lives on the compute resource as a per-job log
file. Jobs append protocol lines of the form::

    # cloudmesh status=running progress=1 pid=4711

and the client reconstructs status by fetching the log and taking the LAST
matching line. Launches are detached (new session, reparented to init), so
the client process can die at any point without affecting running jobs; a
fresh client re-derives everything from (workflow name, job name) plus the
log content, including the pid embedded in the protocol lines.

Remote resources keep job material under ``~/experiment/<workflow-name>/``;
local jobs use ``<state-root>/<workflow>/runtime/`` for uniformity.
"""

from __future__ import annotations

import logging
import os
import re
import shlex
import shutil
import signal
import subprocess
import time
from dataclasses import dataclass
from datetime import datetime
from pathlib import Path

from .errors import (
    CopyFailed,
    HostUnreachable,
    InvalidStatus,
    LaunchFailed,
    MissingLocalScript,
    UnsupportedKind,
    WorkflowError,
)
from .model import JobKind, NodeSpec, Status

logger = logging.getLogger(__name__)

PROTOCOL_MARKER = "# cloudmesh"
PROTOCOL_LINE = re.compile(r"^# cloudmesh status=(\w+) progress=(\d+)( pid=(\d+))?")

REMOTE_BASE = "experiment"  # under $HOME on ssh/slurm resources

DEFAULT_WATCH_PERIOD = 10.0
SSH_TIMEOUT = 30.0

_LOCAL_HOSTS = (None, "", "localhost", "127.0.0.1", "local")


def progress_line(status: str, progress: int, pid: str = "$$") -> str:
    return f'echo "# cloudmesh status={status} progress={progress} pid={pid}"'


def write_progress(progress: int, filename: str | Path, status: str | None = None) -> None:
    """Append a protocol line to a log file (for Python payloads and tests).

    Without an explicit status, 100 reports done and anything below running.
    """
    if status is None:
        status = "done" if progress >= 100 else "running"
    with open(filename, "a") as log:
        log.write(f"# cloudmesh status={status} progress={progress} pid={os.getpid()}\n")


@dataclass
class StatusRecord:
    """Runtime triple recovered from log probing."""

    status: Status
    progress: int
    pid: int | None = None
    timestamp: datetime | None = None


def parse_protocol_lines(text: str) -> list[tuple[str, int, int | None]]:
    """All raw protocol matches in a log, in order: (status word, progress, pid)."""
    matches = []
    for line in text.splitlines():
        match = PROTOCOL_LINE.match(line)
        if match:
            word, progress, _, pid = match.groups()
            matches.append((word, int(progress), int(pid) if pid else None))
    return matches


def interpret_log(text: str, node: NodeSpec) -> StatusRecord:
    """Derive a StatusRecord from log text; last protocol match wins.

    No match means the job never reported: the record carries the node's
    declared status. A `done` line below 100 does not complete the node
    (progress must reach 100), so it is downgraded to running.
    """
    now = datetime.now()
    matches = parse_protocol_lines(text)
    if not matches:
        return StatusRecord(node.status, node.progress, timestamp=now)
    word, progress, pid = matches[-1]
    progress = max(0, min(100, progress))
    try:
        status = Status(word)
    except ValueError:
        status = Status.UNDEFINED
    if status is Status.DONE and progress < 100:
        status = Status.RUNNING
    return StatusRecord(status, progress, pid, now)


@dataclass
class JobHandle:
    """A NodeSpec bound to an executor plus its locations on the resource.

    script_path and log_path are derivable from (workflow_name, node name)
    alone, so a fresh client can rebuild the handle after a restart.
    run_directory is an absolute local path for local jobs and a
    $HOME-relative path on the remote for ssh/slurm jobs.
    """

    node: NodeSpec
    workflow_name: str
    run_directory: str
    script_path: str
    log_path: str
    source_script: Path
    pid: int | None = None
    slurm_job_id: str | None = None

    @property
    def script_name(self) -> str:
        return Path(self.script_path).name

    @property
    def log_name(self) -> str:
        return Path(self.log_path).name

    @property
    def remote(self) -> bool:
        return self.node.kind in (JobKind.SSH, JobKind.SLURM) and not (
            self.node.kind is JobKind.SLURM and self.node.host in _LOCAL_HOSTS
        )

    @property
    def destination(self) -> str:
        host = self.node.host or "localhost"
        return f"{self.node.user}@{host}" if self.node.user else host


def make_handle(
    node: NodeSpec,
    workflow_name: str,
    local_runtime: Path,
    source_directory: Path,
) -> JobHandle:
    """Derive the job's script/log locations for its backend."""
    script_name = node.script or f"{node.name}.sh"
    log_name = f"{node.name}.log"
    # ssh always goes through the transport, even to localhost; slurm only
    # needs it when the login host is elsewhere
    if node.kind is JobKind.SSH or (
        node.kind is JobKind.SLURM and node.host not in _LOCAL_HOSTS
    ):
        run_directory = f"{REMOTE_BASE}/{workflow_name}"
    else:
        run_directory = str(local_runtime)
    if node.script:
        source_script = source_directory / node.script
    else:
        # inline exec payloads get a generated wrapper, staged locally
        source_script = local_runtime / script_name
    return JobHandle(
        node=node,
        workflow_name=workflow_name,
        run_directory=run_directory,
        script_path=f"{run_directory}/{script_name}",
        log_path=f"{run_directory}/{log_name}",
        source_script=source_script,
    )


def _interpreter(script_name: str) -> str:
    if script_name.endswith(".py"):
        return "python3"
    if script_name.endswith(".ipynb"):
        return "jupyter nbconvert --to notebook --execute"
    return "bash"


_PY_TEMPLATE = '''import os

def report_progress(progress, filename="{log}", status=None):
    if status is None:
        status = "done" if progress >= 100 else "running"
    with open(filename, "a") as log:
        log.write(f"# cloudmesh status={{status}} progress={{progress}} pid={{os.getpid()}}\\n")

report_progress(1)
{payload}
report_progress(100)
'''


def create_script(handle: JobHandle, template_body: str = "") -> str:
    """Emit a script template with progress reporting wrapped around the payload.

    Shell scripts open with the running line and close with the done line.
    Slurm scripts get batch directives (job name, output file) up front.
    Python payloads are wrapped so they call an inlined progress helper that
    appends protocol lines to the job's log. WSL is recognized by the schema
    but has no executor yet.
    """
    kind = handle.node.kind
    if kind is JobKind.WSL:
        raise UnsupportedKind("wsl jobs are recognized but not executable")

    if handle.script_name.endswith(".py"):
        return _PY_TEMPLATE.format(log=handle.log_name, payload=template_body)

    lines: list[str] = []
    if kind is JobKind.SLURM:
        lines += [
            "#!/bin/sh",
            f"#SBATCH --job-name={handle.node.name}",
            f"#SBATCH --output={handle.log_name}",
        ]
    lines.append(progress_line("running", 1))
    if handle.node.venv:
        lines.append(f"source {handle.node.venv}/bin/activate")
    lines.append(template_body)
    lines.append(progress_line("done", 100))
    return "\n".join(lines) + "\n"


class Executor:
    """Backend operations for one job kind.

    probe/clear/kill/sync/run are the primitives; watch is a shared polling
    loop over probe plus a liveness check, so a job that exits without ever
    reporting progress=100 surfaces as failed instead of hanging the client.
    """

    kind: JobKind

    # -- primitives each backend provides -----------------------------------

    def sync(self, handle: JobHandle) -> None:
        raise NotImplementedError

    def run(self, handle: JobHandle) -> JobHandle:
        raise NotImplementedError

    def fetch_log(self, handle: JobHandle) -> str:
        raise NotImplementedError

    def remove_log(self, handle: JobHandle) -> None:
        raise NotImplementedError

    def alive(self, handle: JobHandle) -> bool | None:
        """True/False when the job's liveness is known, None when it is not."""
        raise NotImplementedError

    def kill(self, handle: JobHandle) -> str:
        raise NotImplementedError

    # -- shared behavior -----------------------------------------------------

    def probe(self, handle: JobHandle) -> tuple[StatusRecord, str]:
        """Fetch the log and derive the current record. Read-only; a missing
        log is not an error and yields the node's declared status."""
        text = self.fetch_log(handle)
        record = interpret_log(text, handle.node)
        if record.pid is not None and handle.pid is None:
            handle.pid = record.pid
        return record, text

    def clear(self, handle: JobHandle) -> None:
        """Remove the log and reset the job to ready; idempotent."""
        self.remove_log(handle)
        handle.node.status = Status.READY
        handle.node.progress = 0
        handle.pid = None
        handle.slurm_job_id = None

    def watch(
        self,
        handle: JobHandle,
        period: float = DEFAULT_WATCH_PERIOD,
        on_record=None,
    ) -> StatusRecord:
        """Probe every `period` seconds until the job reaches a terminal state.

        Probe errors propagate after 3 consecutive failures. A job that has
        exited without reporting progress=100 is returned as failed.
        """
        failures = 0
        while True:
            try:
                record, _ = self.probe(handle)
                failures = 0
            except WorkflowError:
                failures += 1
                if failures >= 3:
                    raise
                time.sleep(period)
                continue
            if on_record:
                on_record(record)
            if record.status.terminal:
                return record
            if self.alive(handle) is False:
                # one final read in case the done line landed after the probe
                record, _ = self.probe(handle)
                if not record.status.terminal:
                    record = StatusRecord(
                        Status.FAILED, record.progress, record.pid, datetime.now()
                    )
                if on_record:
                    on_record(record)
                return record
            time.sleep(period)

    def _mark_killed(self, handle: JobHandle) -> None:
        # the kill becomes part of the job's own event stream, so any
        # client probing the log later sees killed, not a bare disappearance
        try:
            with open(handle.log_path, "a") as log:
                log.write(_kill_marker(handle))
        except OSError:
            pass

    def _check_source(self, handle: JobHandle) -> None:
        if not handle.source_script.exists():
            raise MissingLocalScript(f"no such script: {handle.source_script}")

    def _check_ready(self, handle: JobHandle) -> None:
        if handle.node.status is not Status.READY:
            raise InvalidStatus(
                f"cannot run {handle.node.name!r} in status "
                f"{handle.node.status.value!r}; clear it to ready first"
            )


class LocalExecutor(Executor):
    kind = JobKind.LOCAL

    def sync(self, handle: JobHandle) -> None:
        self._check_source(handle)
        run_dir = Path(handle.run_directory)
        run_dir.mkdir(parents=True, exist_ok=True)
        target = Path(handle.script_path)
        if handle.source_script.resolve() != target.resolve():
            shutil.copy(handle.source_script, target)

    def run(self, handle: JobHandle) -> JobHandle:
        self._check_ready(handle)
        command = _launch_command(handle)
        result = subprocess.run(
            ["bash", "-c", command], capture_output=True, text=True, timeout=SSH_TIMEOUT
        )
        if result.returncode != 0:
            raise LaunchFailed(f"launch failed ({result.returncode}): {result.stderr.strip()}")
        try:
            handle.pid = int(result.stdout.strip().splitlines()[-1])
        except (ValueError, IndexError):
            raise LaunchFailed(f"no pid in launch output: {result.stdout!r}") from None
        handle.node.status = Status.SUBMITTED
        logger.info("launched %s as pid %d", handle.node.name, handle.pid)
        return handle

    def fetch_log(self, handle: JobHandle) -> str:
        path = Path(handle.log_path)
        return path.read_text() if path.exists() else ""

    def remove_log(self, handle: JobHandle) -> None:
        Path(handle.log_path).unlink(missing_ok=True)

    def alive(self, handle: JobHandle) -> bool | None:
        if handle.pid is None:
            return None
        try:
            os.kill(handle.pid, 0)
        except ProcessLookupError:
            return False
        except PermissionError:
            return True
        # an unreaped zombie still answers signal 0 but is not running
        return not _defunct(handle.pid)

    def kill(self, handle: JobHandle) -> str:
        if handle.pid is None:
            return "no pid recorded; nothing to kill"
        if self.alive(handle) is False:
            return f"pid {handle.pid} already exited"
        _signal_group(handle.pid, signal.SIGTERM)
        deadline = time.time() + 1.5
        while time.time() < deadline:
            if self.alive(handle) is False:
                break
            time.sleep(0.05)
        else:
            _signal_group(handle.pid, signal.SIGKILL)
        handle.node.status = Status.KILLED
        self._mark_killed(handle)
        return f"killed pid {handle.pid}"


def _kill_marker(handle: JobHandle) -> str:
    pid = handle.pid if handle.pid is not None else 0
    return (
        f"# cloudmesh status=killed progress={handle.node.progress} pid={pid}\n"
    )


def _defunct(pid: int) -> bool:
    try:
        stat = Path(f"/proc/{pid}/stat").read_text()
    except OSError:
        return False
    return stat.rpartition(")")[2].split()[0] == "Z"


def _signal_group(pid: int, sig: int) -> None:
    # jobs are launched as session leaders, so the group id equals the pid
    try:
        os.killpg(pid, sig)
    except ProcessLookupError:
        pass
    except PermissionError:
        os.kill(pid, sig)


def _launch_command(handle: JobHandle) -> str:
    # the braces matter: `cd && cmd & echo $!` would background the whole
    # && list in a wrapper subshell and $! would name that wrapper, not the
    # job. Only the simple command may be backgrounded, so setsid execs in
    # place and $! is the job's real (session leader) pid.
    interp = _interpreter(handle.script_name)
    cd = _cd_clause(handle)
    return (
        f"{cd} && {{ nohup setsid {interp} {shlex.quote(handle.script_name)} "
        f">> {shlex.quote(handle.log_name)} 2>&1 < /dev/null & echo $!; }}"
    )


def _cd_clause(handle: JobHandle) -> str:
    if handle.remote:
        return f'mkdir -p "$HOME/{handle.run_directory}" && cd "$HOME/{handle.run_directory}"'
    return f"cd {shlex.quote(handle.run_directory)}"


class SshExecutor(Executor):
    """Runs jobs on hosts reachable through the user's own ssh configuration.

    Keys, aliases, and usernames come from ~/.ssh/config; this class only
    composes commands. ssh exit status 255 is the transport failing, any
    other status belongs to the remote command.
    """

    kind = JobKind.SSH
    timeout = SSH_TIMEOUT

    def _ssh(self, handle: JobHandle, command: str, check: bool = True) -> subprocess.CompletedProcess:
        argv = ["ssh", "-o", "BatchMode=yes", handle.destination, command]
        try:
            result = subprocess.run(argv, capture_output=True, text=True, timeout=self.timeout)
        except subprocess.TimeoutExpired as exc:
            raise HostUnreachable(f"ssh to {handle.destination} timed out") from exc
        if result.returncode == 255:
            raise HostUnreachable(
                f"cannot reach {handle.destination}: {result.stderr.strip()}"
            )
        if check and result.returncode != 0:
            raise WorkflowError(
                f"remote command failed ({result.returncode}): {result.stderr.strip()}"
            )
        return result

    def sync(self, handle: JobHandle) -> None:
        self._check_source(handle)
        self._ssh(handle, f'mkdir -p "$HOME/{handle.run_directory}"')
        argv = [
            "scp", "-q", "-o", "BatchMode=yes",
            str(handle.source_script),
            f"{handle.destination}:{handle.run_directory}/{handle.script_name}",
        ]
        result = subprocess.run(argv, capture_output=True, text=True, timeout=self.timeout)
        if result.returncode != 0:
            raise CopyFailed(
                f"scp to {handle.destination} failed: {result.stderr.strip()}"
            )

    def run(self, handle: JobHandle) -> JobHandle:
        self._check_ready(handle)
        result = self._ssh(handle, _launch_command(handle), check=False)
        if result.returncode != 0:
            raise LaunchFailed(f"remote launch failed: {result.stderr.strip()}")
        try:
            handle.pid = int(result.stdout.strip().splitlines()[-1])
        except (ValueError, IndexError):
            raise LaunchFailed(f"no pid in launch output: {result.stdout!r}") from None
        handle.node.status = Status.SUBMITTED
        return handle

    def fetch_log(self, handle: JobHandle) -> str:
        result = self._ssh(
            handle, f'cat "$HOME/{handle.log_path}" 2>/dev/null || true'
        )
        return result.stdout

    def remove_log(self, handle: JobHandle) -> None:
        self._ssh(handle, f'rm -f "$HOME/{handle.log_path}"')

    def alive(self, handle: JobHandle) -> bool | None:
        if handle.pid is None:
            return None
        try:
            # state probe instead of kill -0: an unreaped zombie must not
            # count as running
            result = self._ssh(
                handle,
                f"ps -o stat= -p {handle.pid} 2>/dev/null | grep -vq Z",
                check=False,
            )
        except HostUnreachable:
            return None
        return result.returncode == 0

    def kill(self, handle: JobHandle) -> str:
        if handle.pid is None:
            return "no pid recorded; nothing to kill"
        if self.alive(handle) is False:
            return f"pid {handle.pid} already exited"
        self._ssh(
            handle,
            f"kill -TERM -- -{handle.pid} 2>/dev/null || kill -TERM {handle.pid}",
            check=False,
        )
        time.sleep(0.5)
        if self.alive(handle) is True:
            self._ssh(
                handle,
                f"kill -KILL -- -{handle.pid} 2>/dev/null || kill -KILL {handle.pid}",
                check=False,
            )
        handle.node.status = Status.KILLED
        self._mark_killed(handle)
        return f"killed pid {handle.pid} on {handle.destination}"

    def _mark_killed(self, handle: JobHandle) -> None:
        marker = _kill_marker(handle).rstrip("\n")
        self._ssh(
            handle,
            f"printf '%s\\n' {shlex.quote(marker)} >> \"$HOME/{handle.log_path}\"",
            check=False,
        )


_SBATCH_ID = re.compile(r"Submitted batch job (\d+)")


class SlurmExecutor(SshExecutor):
    """Submits to a Slurm queue via the login host's standard batch commands.

    When the login host is this machine the commands run in a local shell,
    which is also how the test stubs hook in; otherwise everything goes
    over ssh like the ssh backend.
    """

    kind = JobKind.SLURM

    def _shell(self, handle: JobHandle, command: str, check: bool = True) -> subprocess.CompletedProcess:
        if handle.remote:
            return self._ssh(handle, command, check=check)
        result = subprocess.run(
            ["bash", "-c", command], capture_output=True, text=True, timeout=self.timeout
        )
        if check and result.returncode != 0:
            raise WorkflowError(
                f"command failed ({result.returncode}): {result.stderr.strip()}"
            )
        return result

    def sync(self, handle: JobHandle) -> None:
        if handle.remote:
            super().sync(handle)
        else:
            LocalExecutor().sync(handle)

    def run(self, handle: JobHandle) -> JobHandle:
        self._check_ready(handle)
        command = f"{_cd_clause(handle)} && sbatch {shlex.quote(handle.script_name)}"
        result = self._shell(handle, command, check=False)
        if result.returncode != 0:
            raise LaunchFailed(f"sbatch failed: {result.stderr.strip()}")
        match = _SBATCH_ID.search(result.stdout)
        if not match:
            raise LaunchFailed(f"no job id in sbatch output: {result.stdout!r}")
        handle.slurm_job_id = match.group(1)
        handle.node.status = Status.SUBMITTED
        return handle

    def fetch_log(self, handle: JobHandle) -> str:
        if handle.remote:
            return super().fetch_log(handle)
        return LocalExecutor().fetch_log(handle)

    def remove_log(self, handle: JobHandle) -> None:
        if handle.remote:
            super().remove_log(handle)
        else:
            LocalExecutor().remove_log(handle)

    def alive(self, handle: JobHandle) -> bool | None:
        if handle.slurm_job_id is None:
            return None
        result = self._shell(
            handle, f"squeue -h -j {handle.slurm_job_id} 2>/dev/null", check=False
        )
        if result.returncode != 0:
            return False
        return bool(result.stdout.strip())

    def kill(self, handle: JobHandle) -> str:
        if handle.slurm_job_id is None:
            return "no slurm job id recorded; nothing to cancel"
        self._shell(handle, f"scancel {handle.slurm_job_id}", check=False)
        handle.node.status = Status.KILLED
        if handle.remote:
            super()._mark_killed(handle)
        else:
            Executor._mark_killed(self, handle)
        return f"cancelled slurm job {handle.slurm_job_id}"


_EXECUTORS: dict[JobKind, Executor] = {}


def executor_for(kind: JobKind | None) -> Executor:
    """Executor instance for a job kind; UnsupportedKind for wsl."""
    if kind is JobKind.WSL:
        raise UnsupportedKind("wsl jobs are recognized but not executable")
    if kind is None:
        raise UnsupportedKind("structural nodes have no executor")
    if kind not in _EXECUTORS:
        _EXECUTORS[kind] = {
            JobKind.LOCAL: LocalExecutor,
            JobKind.SSH: SshExecutor,
            JobKind.SLURM: SlurmExecutor,
        }[kind]()
    return _EXECUTORS[kind]
