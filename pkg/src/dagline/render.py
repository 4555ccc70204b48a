"""Graph visualization: DOT text generation plus SVG/image rendering.

Node fill colors track job status so a sequence of renders during a run
shows the execution wave moving through the graph. DOT text is produced
here; turning it into SVG shells out to the standard graphviz renderer.
Where graphviz is not installed, a layered matplotlib drawing of the same
graph serves as the fallback for file output.
"""

from __future__ import annotations

import shutil
import subprocess
from dataclasses import dataclass, field
from pathlib import Path

from .errors import RendererMissing, RenderFailed
from .labels import render_label
from .model import Status

DEFAULT_LABEL = "{name}\\nprogress={progress}"

DEFAULT_COLOR_MAP = {
    Status.UNDEFINED: "white",
    Status.READY: "white",
    Status.SUBMITTED: "lightblue",
    Status.RUNNING: "yellow",
    Status.DONE: "green",
    Status.FAILED: "red",
    Status.KILLED: "orange",
}


@dataclass
class RenderOptions:
    default_shape: str = "ellipse"
    default_style: str = "filled"
    color_map: dict[Status, str] = field(default_factory=lambda: dict(DEFAULT_COLOR_MAP))


def _quote(text: str) -> str:
    return '"' + text.replace("\\", "\\\\").replace('"', '\\"').replace("\n", "\\n") + '"'


def to_dot(run, options: RenderOptions | None = None) -> str:
    """Emit the workflow as DOT text, nodes in topological order.

    Each node statement carries the rendered label, its shape and style
    (an empty style string means filled), and a fillcolor matching the
    current status, so consecutive renders of a running workflow differ
    exactly in the colors and progress labels.
    """
    options = options or RenderOptions()
    lines = [f"digraph {_quote(run.name)} {{"]
    for name in run.ordered_names():
        node = run.graph.nodes[name]
        template = node.label if node.label is not None else DEFAULT_LABEL
        label = render_label(
            template, node, clocks=run.label_context(name), variables=run.variables
        )
        shape = node.shape or options.default_shape
        style = node.style if node.style else options.default_style
        color = options.color_map[node.status]
        lines.append(
            f"  {_quote(name)} [label={_quote(label)} shape={shape} "
            f"style={style} fillcolor={color}];"
        )
    for source, destination in run.graph.edges:
        lines.append(f"  {_quote(source)} -> {_quote(destination)};")
    lines.append("}")
    return "\n".join(lines) + "\n"


def render_svg(dot: str, output: Path | str) -> Path:
    """Render DOT text to an SVG file with the external dot tool."""
    output = Path(output)
    if shutil.which("dot") is None:
        raise RendererMissing(
            "the graphviz 'dot' renderer is not on the search path; "
            "install graphviz (e.g. apt install graphviz) or use the "
            "matplotlib fallback via write_graph"
        )
    result = subprocess.run(
        ["dot", "-Tsvg", "-o", str(output)],
        input=dot,
        capture_output=True,
        text=True,
    )
    if result.returncode != 0:
        raise RenderFailed(f"dot exited {result.returncode}: {result.stderr.strip()}")
    return output


def draw_graph(run, output: Path | str, options: RenderOptions | None = None) -> Path:
    """Draw the workflow with matplotlib, layered by dependency depth.

    Covers svg/png/pdf output without any external renderer. Layout is
    simple but deterministic: a node's layer is its longest distance from
    a root, nodes within a layer spread horizontally in topological order.
    """
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    options = options or RenderOptions()
    output = Path(output)
    order = run.ordered_names()

    depth: dict[str, int] = {}
    for name in order:
        preds = run.graph.predecessors(name)
        depth[name] = max((depth[p] + 1 for p in preds), default=0)
    layers: dict[int, list[str]] = {}
    for name in order:
        layers.setdefault(depth[name], []).append(name)

    position = {}
    for level, members in layers.items():
        for index, name in enumerate(members):
            position[name] = (index - (len(members) - 1) / 2.0, -level)

    width = max((len(m) for m in layers.values()), default=1)
    height = len(layers) or 1
    figure, axes = plt.subplots(figsize=(max(4, 2.2 * width), max(3, 1.4 * height)))
    for source, destination in run.graph.edges:
        axes.annotate(
            "",
            xy=position[destination],
            xytext=position[source],
            arrowprops={"arrowstyle": "-|>", "color": "gray", "shrinkA": 18, "shrinkB": 18},
        )
    for name in order:
        node = run.graph.nodes[name]
        template = node.label if node.label is not None else DEFAULT_LABEL
        label = render_label(
            template, node, clocks=run.label_context(name), variables=run.variables
        )
        axes.text(
            *position[name],
            label,
            ha="center",
            va="center",
            fontsize=9,
            bbox={
                "boxstyle": "round,pad=0.4",
                "facecolor": options.color_map[node.status],
                "edgecolor": "black",
            },
        )
    axes.set_xlim(-width / 2.0 - 1, width / 2.0 + 1)
    axes.set_ylim(-height + 0.5, 0.5)
    axes.axis("off")
    figure.tight_layout()
    figure.savefig(output)
    plt.close(figure)
    return output


def write_graph(run, output: Path | str, options: RenderOptions | None = None) -> Path:
    """Write the graph to a file, picking the renderer from the suffix.

    .dot files get the DOT text; image files go through graphviz when it
    is installed and through the matplotlib drawing otherwise.
    """
    output = Path(output)
    if output.suffix == ".dot":
        output.write_text(to_dot(run, options))
        return output
    if output.suffix == ".svg":
        try:
            return render_svg(to_dot(run, options), output)
        except RendererMissing:
            return draw_graph(run, output, options)
    return draw_graph(run, output, options)
