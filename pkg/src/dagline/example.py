"""The bundled five-node example workflow and helpers to stage it.

The example is a start/end pair around three short local shell jobs, each
reporting progress 1 to 100 over about two seconds. It is used by the
browser UI's Example tab, by the CLI for quick smoke runs, and by tests.
"""

from __future__ import annotations

import tarfile
from importlib import resources
from pathlib import Path

from .engine import WorkflowRun

EXAMPLE_NAME = "workflow-example"


def example_directory() -> Path:
    """Location of the bundled example YAML and its scripts."""
    return Path(str(resources.files("dagline") / "data" / EXAMPLE_NAME))


def make_example_archive(destination: Path | str) -> Path:
    """Build a flat tar of the example, as accepted by the upload endpoint."""
    destination = Path(destination)
    if destination.is_dir():
        destination = destination / f"{EXAMPLE_NAME}.tar"
    source = example_directory()
    with tarfile.open(destination, "w") as tar:
        for member in sorted(source.iterdir()):
            tar.add(member, arcname=member.name)
    return destination


def install_example(root: Path | str | None = None) -> WorkflowRun:
    """Install the example workflow into the state store."""
    return WorkflowRun.install(
        example_directory() / f"{EXAMPLE_NAME}.yaml", root=root
    )
