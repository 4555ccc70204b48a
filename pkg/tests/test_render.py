import shutil
import xml.etree.ElementTree as ElementTree

import pytest

from dagline.engine import WorkflowRun
from dagline.errors import RendererMissing
from dagline.model import Status
from dagline.render import (
    DEFAULT_COLOR_MAP,
    RenderOptions,
    draw_graph,
    render_svg,
    to_dot,
    write_graph,
)

from conftest import install_local_workflow, workflow_yaml


@pytest.fixture
def run(tmp_path, root):
    return install_local_workflow(
        tmp_path, root, "pic",
        jobs={"a": "a.sh", "b": "b.sh"},
        dependencies=["start,a,b,end"],
    )


def node_line(dot, name):
    return next(line for line in dot.splitlines() if line.startswith(f'  "{name}" ['))


def test_dot_is_deterministic(run):
    assert to_dot(run) == to_dot(run)


def test_dot_structure(run):
    dot = to_dot(run)
    assert dot.startswith('digraph "pic" {')
    assert dot.rstrip().endswith("}")
    assert '  "start" -> "a";' in dot
    assert '  "a" -> "b";' in dot
    assert '  "b" -> "end";' in dot
    # nodes appear in topological order
    positions = [dot.index(f'"{n}" [') for n in ("start", "a", "b", "end")]
    assert positions == sorted(positions)


def test_dot_default_node_attributes(run):
    line = node_line(to_dot(run), "a")
    assert 'label="a\\nprogress=0"' in line
    assert "shape=ellipse" in line
    assert "style=filled" in line
    assert "fillcolor=white" in line


def test_dot_colors_track_status(run):
    expected = {
        Status.UNDEFINED: "white",
        Status.READY: "white",
        Status.SUBMITTED: "lightblue",
        Status.RUNNING: "yellow",
        Status.DONE: "green",
        Status.FAILED: "red",
        Status.KILLED: "orange",
    }
    assert DEFAULT_COLOR_MAP == expected
    for status, color in expected.items():
        run.node("a").status = status
        assert f"fillcolor={color}" in node_line(to_dot(run), "a")


def test_dot_label_tracks_progress(run):
    run.node("a").status = Status.RUNNING
    run.node("a").progress = 55
    assert 'label="a\\nprogress=55"' in node_line(to_dot(run), "a")


def test_dot_shape_and_style_overrides(tmp_path, root):
    source = tmp_path / "src"
    source.mkdir()
    nodes = {
        "boxy": {"kind": "local", "exec": "true", "shape": "box", "style": "dotted"},
        "plain": {"kind": "local", "exec": "true", "style": "''"},
    }
    (source / "shapes.yaml").write_text(workflow_yaml(nodes, ["boxy,plain"]))
    run = WorkflowRun.install(source / "shapes.yaml", root=root)
    dot = to_dot(run)
    assert "shape=box" in node_line(dot, "boxy")
    assert "style=dotted" in node_line(dot, "boxy")
    # an empty style declaration falls back to filled
    assert "style=filled" in node_line(dot, "plain")


def test_dot_custom_options(run):
    options = RenderOptions(default_shape="circle")
    options.color_map[Status.READY] = "gray"
    dot = to_dot(run, options)
    assert "shape=circle" in node_line(dot, "a")
    assert "fillcolor=gray" in node_line(dot, "a")


def test_dot_escapes_quotes_in_labels(run):
    run.node("a").label = 'say "hi"'
    assert 'label="say \\"hi\\""' in node_line(to_dot(run), "a")


def test_write_graph_dot_file(run, tmp_path):
    target = write_graph(run, tmp_path / "out.dot")
    assert target.read_text() == to_dot(run)


def test_render_svg_without_graphviz():
    if shutil.which("dot"):
        pytest.skip("graphviz is installed here")
    with pytest.raises(RendererMissing):
        render_svg("digraph x {}", "/tmp/never.svg")


def test_write_graph_svg_works_either_way(run, tmp_path):
    """SVG output must succeed with or without graphviz on the machine."""
    target = write_graph(run, tmp_path / "graph.svg")
    assert target.exists()
    tree = ElementTree.parse(target)
    assert tree.getroot().tag.endswith("svg")


def test_draw_graph_png(run, tmp_path):
    target = draw_graph(run, tmp_path / "graph.png")
    assert target.exists()
    assert target.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


def test_draw_graph_reflects_all_nodes(run, tmp_path):
    target = draw_graph(run, tmp_path / "nodes.svg")
    text = target.read_text()
    for name in ("start", "a", "b", "end"):
        assert name in text
