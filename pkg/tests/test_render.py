import xml.etree.ElementTree as ET

import numpy as np

from rotatorlab.equilibria import find_equilibria
from rotatorlab.model import TWO_PI, case_i
from rotatorlab.portrait import DISSIPATIVE, LIBRATION, ROTATION, RegionLabel, RegionMap
from rotatorlab.render import (Polyline, SvgScene, diagram_scene, portrait_scene, region_raster,
                               render_svg, scan_scene, split_wrapped)
from rotatorlab.bifurcation import trace_analytic_curves

SVG_NS = "{http://www.w3.org/2000/svg}"


def gids(path):
    root = ET.parse(path).getroot()
    return [el.get("id") for el in root.iter() if el.get("id")]


def synthetic_map(n=64):
    labels = []
    for i in range(n):
        for j in range(n):
            if i < n // 4:
                labels.append(RegionLabel(ROTATION, p=1, q=1))
            elif j < n // 4:
                labels.append(RegionLabel(LIBRATION, orientation="CW"))
            else:
                labels.append(RegionLabel(DISSIPATIVE, sink=0))
    return RegionMap((n, n), (0.0, TWO_PI, 0.0, TWO_PI), {}, labels, np.zeros((0, 2)))


def test_empty_scene_is_valid_svg(tmp_path):
    path = tmp_path / "empty.svg"
    render_svg(SvgScene(), path)
    root = ET.parse(path).getroot()
    assert root.tag == SVG_NS + "svg"


def test_repeated_renders_are_byte_identical(tmp_path):
    sys = case_i(0.5, 1.0, 0.2)
    scene = portrait_scene(synthetic_map(16), find_equilibria(sys), title="x")
    a, b = tmp_path / "a.svg", tmp_path / "b.svg"
    render_svg(scene, a)
    render_svg(scene, b)
    assert a.read_bytes() == b.read_bytes()


def test_region_layer_and_glyphs(tmp_path):
    eqs = find_equilibria(case_i(0.5, 1.0, 0.2))
    assert len(eqs) == 4
    path = tmp_path / "p.svg"
    render_svg(portrait_scene(synthetic_map(64), eqs), path)
    ids = gids(path)
    assert ids.count("regions") == 1
    assert len([g for g in ids if g.startswith("eq-")]) == 4
    root = ET.parse(path).getroot()
    assert len(root.findall(f".//{SVG_NS}image")) == 1


def test_region_raster_orientation():
    img = region_raster(synthetic_map(8))
    assert img.shape == (8, 8, 3)
    # column i < 2 is rotation, rows j < 2 (bottom) outside it are libration
    assert not np.allclose(img[0, 0], img[0, 4])
    assert np.allclose(img[5, 5], 1.0)


def test_split_wrapped_cuts_at_edges():
    t = np.linspace(0.0, 3 * TWO_PI, 300)
    pieces = split_wrapped(np.column_stack([t, 0.5 * t]), (0.0, TWO_PI, 0.0, TWO_PI))
    # x wraps at 2 pi and 4 pi, y wraps at 4 pi as well
    assert len(pieces) == 3
    for seg in pieces:
        assert np.all((seg >= 0) & (seg < TWO_PI))
        assert np.max(np.abs(np.diff(seg, axis=0))) < np.pi


def test_diagram_and_scan_scenes(tmp_path):
    curves = trace_analytic_curves("I", "kw", resolution=60)
    scene = diagram_scene(curves, (-3.0, 3.0, -3.0, 3.0))
    assert len(scene.polylines) == len(curves)
    render_svg(scene, tmp_path / "d.svg")
    assert any(g.startswith("curve-SaddleCenterI") for g in gids(tmp_path / "d.svg"))
    sc = scan_scene([0.05, 0.045, 0.04], [13.6, 14.0, float("nan")],
                    [(3, 4), (4, 5), (0, 0)])
    assert [p.gid for p in sc.polylines] == ["branch-3-4-0", "branch-4-5-1"]
    render_svg(sc, tmp_path / "s.svg")
    ET.parse(tmp_path / "s.svg")


def test_polyline_wrap_flag(tmp_path):
    pts = np.column_stack([np.linspace(6.0, 7.0, 11), np.linspace(1.0, 1.4, 11)])
    scene = SvgScene(polylines=[Polyline(pts, "orbit", "o", wrap=True)])
    render_svg(scene, tmp_path / "w.svg")
    assert {"o-0", "o-1"} <= set(gids(tmp_path / "w.svg"))
