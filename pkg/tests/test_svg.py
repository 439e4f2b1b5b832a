import json
import xml.etree.ElementTree as ET

import numpy as np

from rqslopes.svg import heatmap, step_plot

NS = "{http://www.w3.org/2000/svg}"


def test_step_plot_structure_and_metadata():
    meta = {"command": "process", "weird": "]]> <&"}
    text = step_plot([0.3, 0.7], np.array([[1.0, 2.0], [1.5, 2.5], [0.5, 3.0]]), ["a", "b"],
                     "t", meta)
    root = ET.fromstring(text.encode())
    lines = root.findall(f"{NS}polyline")
    assert len(lines) == 2
    # each series draws two points per segment
    assert len(lines[0].get("points").split()) == 6
    blob = root.find(f"{NS}metadata").text
    assert json.loads(blob) == meta


def test_step_plot_flat_and_missing_values():
    text = step_plot([], np.array([[np.nan, 2.0]]), ["intercept", "x"])
    root = ET.fromstring(text.encode())
    assert len(root.findall(f"{NS}polyline")) == 1


def test_step_plot_is_deterministic():
    args = ([0.5], np.array([[0.0], [1.0]]), ["x"])
    assert step_plot(*args) == step_plot(*args)


def test_heatmap_cells():
    grid = np.array([0.25, 0.5, 0.75])
    m = np.minimum.outer(grid, grid) - np.outer(grid, grid)
    root = ET.fromstring(heatmap([m, -m], grid, ["a", "b"]).encode())
    cells = [r for r in root.iter(f"{NS}rect") if r.find(f"{NS}title") is not None]
    assert len(cells) == 18
