"""Node label templates with time and variable substitution.

Templates contain `{variable}` or `{variable.FORMAT}` placeholders. Node
fields (name, progress, status), workflow/job timers, `os.X` environment
variables, and `cm.X` variables from a key=value file are all resolvable.
Rendering is total: anything unknown or unset degrades to the literal text
``N/A`` instead of failing a running workflow.

Time formats use the strftime codes %Y %m %d %H %M %S. Because colons are
awkward inside label definitions, a double dash ``--`` in the format stands
for a colon and is replaced in the rendered value: ``{t0.%H--%M--%S}``
renders ``13:05:09``. Without a format the American default
``%m/%d/%Y %H:%M:%S`` applies. ``dt0``/``dt1`` render elapsed durations
(now-t0, now-tstart) as H:M:S with unpadded hours.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path

from .model import NodeSpec

NOT_AVAILABLE = "N/A"
DEFAULT_TIME_FORMAT = "%m/%d/%Y %H:%M:%S"

_PLACEHOLDER = re.compile(r"\{([^{}]+)\}")


@dataclass
class TimerContext:
    """Clock values available to one node's label. Any may be unset."""

    created: datetime | None = None   # workflow creation
    t0: datetime | None = None        # workflow run start
    t1: datetime | None = None        # workflow run end
    now: datetime | None = None       # render time
    tstart: datetime | None = None    # job start
    tend: datetime | None = None      # job end
    modified: datetime | None = None  # state-file modification

    def get(self, name: str) -> datetime | None:
        return getattr(self, name, None)


_TIME_VARS = ("created", "t0", "t1", "now", "tstart", "tend", "modified")
_DURATION_VARS = ("dt0", "dt1")


@dataclass
class VariableStore:
    """Resolves `os.X` against the environment and `cm.X` against a local file."""

    os_vars: dict = field(default_factory=lambda: dict(os.environ))
    cm_vars: dict = field(default_factory=dict)

    @classmethod
    def from_file(cls, path: Path | str | None) -> "VariableStore":
        """Load cm variables from a key=value file; `#` starts a comment line."""
        cm: dict[str, str] = {}
        if path is not None:
            path = Path(path)
            if path.exists():
                for line in path.read_text().splitlines():
                    line = line.strip()
                    if not line or line.startswith("#") or "=" not in line:
                        continue
                    key, _, value = line.partition("=")
                    cm[key.strip()] = value.strip()
        return cls(cm_vars=cm)


def _format_time(value: datetime | None, fmt: str | None) -> str:
    if value is None:
        return NOT_AVAILABLE
    rendered = value.strftime(fmt or DEFAULT_TIME_FORMAT)
    # -- is the colon escape inside format strings; single dashes survive
    return rendered.replace("--", ":")


def _format_duration(delta: timedelta) -> str:
    seconds = int(delta.total_seconds())
    sign = "-" if seconds < 0 else ""
    seconds = abs(seconds)
    hours, rest = divmod(seconds, 3600)
    minutes, secs = divmod(rest, 60)
    return f"{sign}{hours}:{minutes:02d}:{secs:02d}"


def render_label(
    template: str,
    node: NodeSpec | None = None,
    clocks: TimerContext | None = None,
    variables: VariableStore | None = None,
) -> str:
    """Render a label template to display text.

    The two-character sequence backslash-n (as written in single-quoted YAML
    strings) becomes a real line break. Substitution of `--` to `:` happens
    only inside rendered time values, never in literal template text.
    """
    clocks = clocks or TimerContext()
    variables = variables or VariableStore()

    def resolve(match: re.Match) -> str:
        token = match.group(1)
        if token.startswith("os."):
            return str(variables.os_vars.get(token[3:], NOT_AVAILABLE))
        if token.startswith("cm."):
            return str(variables.cm_vars.get(token[3:], NOT_AVAILABLE))

        var, _, fmt = token.partition(".")
        fmt = fmt or None

        if var in _TIME_VARS:
            return _format_time(clocks.get(var), fmt)
        if var in _DURATION_VARS:
            start = clocks.t0 if var == "dt0" else clocks.tstart
            if start is None or clocks.now is None:
                return NOT_AVAILABLE
            return _format_duration(clocks.now - start)
        if node is not None:
            if var == "name":
                return node.name
            if var == "progress":
                return str(node.progress)
            if var == "status":
                return node.status.value
        return NOT_AVAILABLE

    rendered = _PLACEHOLDER.sub(resolve, template)
    return rendered.replace("\\n", "\n")
