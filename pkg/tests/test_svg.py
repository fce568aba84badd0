import xml.etree.ElementTree as ET

import numpy as np
import pytest

from bnnreach.abstraction import Obstacle, RegionSpec, build_partition
from bnnreach.core import Box
from bnnreach.svg import heatmap_svg, write_heatmap

NS = "{http://www.w3.org/2000/svg}"


def cell_rects(root):
    return [r for r in root.iter(NS + "rect") if r.find(NS + "title") is not None]


def test_one_dimensional_heatmap():
    part = build_partition(RegionSpec(Box([0.0], [1.0]), Box([0.8], [1.0])), [10])
    vals = np.linspace(0, 1, 10)
    text = heatmap_svg(part, vals, "K0")
    root = ET.fromstring(text)
    rects = cell_rects(root)
    assert len(rects) == 10
    greens = [r for r in rects if r.get("stroke") == "#2ca02c"]
    assert len(greens) == 2
    assert rects[0].get("fill") == "#f7fbff" and rects[-1].get("fill") == "#08306b"


def test_two_dimensional_with_obstacle(tmp_path):
    ob = Obstacle.from_vertices([[0.2, 0.2], [0.5, 0.2], [0.2, 0.5]], (0, 1))
    spec = RegionSpec(Box([0.0, 0.0], [1.0, 1.0]), Box([0.75, 0.75], [1.0, 1.0]), (ob,))
    part = build_partition(spec, [4, 4])
    path = tmp_path / "h.svg"
    write_heatmap(path, part, np.full(16, 0.5), "map")
    text = path.read_text()
    root = ET.fromstring(text)
    assert len(cell_rects(root)) == 16
    assert len(list(root.iter(NS + "polygon"))) == 1
    # self-contained: no external references of any kind
    assert "href" not in text and "url(" not in text and "<image" not in text


def test_rejects_bad_shapes():
    part = build_partition(RegionSpec(Box([0.0], [1.0]), Box([0.8], [1.0])), [10])
    with pytest.raises(ValueError):
        heatmap_svg(part, np.zeros(9))
    spec3 = RegionSpec(Box([0.0] * 3, [1.0] * 3), Box([0.5] * 3, [1.0] * 3))
    part3 = build_partition(spec3, [2, 2, 2])
    with pytest.raises(ValueError):
        heatmap_svg(part3, np.zeros(8))


def test_deterministic_output():
    part = build_partition(RegionSpec(Box([0.0], [1.0]), Box([0.8], [1.0])), [5])
    v = np.array([0.1, 0.2, 0.3, 0.4, 1.0])
    assert heatmap_svg(part, v) == heatmap_svg(part, v.copy())
