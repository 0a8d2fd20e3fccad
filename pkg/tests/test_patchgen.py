"""Curved-block patch geometry: edges, projection, rasterization, composition."""

import json

import numpy as np
import pytest

from coldpatch.imaging import BBox, GrayImage
from coldpatch.patchgen import (
    SEGMENTS_PER_EDGE,
    SUPERSAMPLE,
    TAU,
    EdgeId,
    PatchRaster,
    PatchTheta,
    _canonical_segments,
    _scan_fill,
    bezier_point,
    cell_outline,
    compose,
    edge_at,
    edge_geometry,
    edge_index,
    flatten_edge,
    n_edges,
    patch_origin,
    patch_side_for,
    project_delta,
    rasterize_cells,
    rasterize_patch,
    validate_theta,
)


def make_theta(dim=6, deltas=None, mask=None, gray=0.0, kind="bezier", width_frac=0.25):
    if deltas is None:
        deltas = np.zeros(n_edges(dim))
    if mask is None:
        mask = np.ones((dim, dim), dtype=np.int64)
    return PatchTheta(dim=dim, width_frac=width_frac, gray=gray,
                      boundary_kind=kind, deltas=deltas, mask=mask)


def random_feasible(gen, dim=6, kind="bezier"):
    return make_theta(dim=dim, deltas=gen.uniform(-TAU, TAU, n_edges(dim)), kind=kind)


def test_edge_count():
    assert n_edges(1) == 4
    assert n_edges(2) == 12
    assert n_edges(6) == 84


def test_edge_index_bijection():
    for dim in (1, 2, 3, 6):
        seen = set()
        for orient, rows, cols in (("h", dim + 1, dim), ("v", dim, dim + 1)):
            for r in range(rows):
                for c in range(cols):
                    e = EdgeId(orient, r, c)
                    i = edge_index(e, dim)
                    assert 0 <= i < n_edges(dim)
                    assert edge_at(i, dim) == e
                    seen.add(i)
        assert len(seen) == n_edges(dim)


def test_edge_id_validation():
    with pytest.raises(ValueError):
        EdgeId("x", 0, 0)
    with pytest.raises(ValueError):
        edge_index(EdgeId("h", -1, 0), 6)
    with pytest.raises(ValueError):
        edge_index(EdgeId("v", 0, 7), 6)


def test_project_delta_pinned_values():
    assert project_delta(0.6, 0.45) == 0.45
    assert project_delta(-0.5, 0.45) == -0.45
    assert project_delta(0.0, 0.45) == 0.0
    assert project_delta(0.3, 0.45) == 0.3


def test_project_delta_idempotent():
    gen = np.random.Generator(np.random.Philox(7))
    for v in gen.uniform(-3.0, 3.0, size=1000):
        once = project_delta(float(v))
        assert project_delta(once) == once
        assert abs(once) <= TAU


def test_bezier_point_endpoints_and_midpoint():
    p0, p1, p2 = np.array([0.0, 0.0]), np.array([1.0, 2.0]), np.array([2.0, 0.0])
    assert np.array_equal(bezier_point(p0, p1, p2, 0.0), p0)
    assert np.array_equal(bezier_point(p0, p1, p2, 1.0), p2)
    mid = bezier_point(p0, p1, p2, 0.5)
    assert np.allclose(mid, 0.25 * p0 + 0.5 * p1 + 0.25 * p2)
    with pytest.raises(ValueError):
        bezier_point(p0, p1, p2, 1.5)


def test_edge_geometry_axial_locking():
    # horizontal edge: control point displaced along +y only
    th = make_theta(dim=2, deltas=np.full(n_edges(2), 0.45))
    p0, p1, p2 = edge_geometry(th, EdgeId("h", 1, 0), spacing=10.0)
    assert np.allclose(p0, [0.0, 10.0])
    assert np.allclose(p2, [10.0, 10.0])
    assert np.allclose(p1, [5.0, 10.0 + 4.5])  # midpoint + delta * spacing * e_y
    # vertical edge: displaced along +x only
    q0, q1, q2 = edge_geometry(th, EdgeId("v", 0, 1), spacing=10.0)
    assert np.allclose(q0, [10.0, 0.0])
    assert np.allclose(q2, [10.0, 10.0])
    assert np.allclose(q1, [10.0 + 4.5, 5.0])


def test_bezier_apex_deviation():
    # apex sits at half the control point offset: B(0.5) = mid + delta*d/2
    th = make_theta(dim=2, deltas=np.full(n_edges(2), 0.45))
    p0, p1, p2 = edge_geometry(th, EdgeId("h", 1, 0), spacing=10.0)
    apex = bezier_point(p0, p1, p2, 0.5)
    assert abs(apex[1] - 10.0 - 2.25) < 1e-12


def test_validate_theta_reports_edges():
    good = make_theta()
    assert validate_theta(good) == []
    deltas = np.zeros(n_edges(6))
    deltas[edge_index(EdgeId("h", 2, 3), 6)] = 0.46
    bad = make_theta(deltas=deltas)
    problems = validate_theta(bad)
    assert len(problems) == 1
    assert "h" in problems[0] and "2" in problems[0] and "3" in problems[0]


def test_theta_json_round_trip():
    gen = np.random.Generator(np.random.Philox(11))
    th = random_feasible(gen)
    text = th.to_json()
    doc = json.loads(text)
    assert list(doc.keys()) == ["dim", "width_frac", "gray", "boundary_kind", "deltas", "mask"]
    assert len(doc["mask"]) == 6 and len(doc["mask"][0]) == 6
    back = PatchTheta.from_json(text)
    assert back.dim == th.dim
    assert back.width_frac == th.width_frac
    assert back.gray == th.gray
    assert back.boundary_kind == th.boundary_kind
    assert np.array_equal(back.deltas, th.deltas)
    assert np.array_equal(back.mask, th.mask)


def test_theta_json_rejects_bad_documents():
    th = make_theta()
    doc = json.loads(th.to_json())
    extra = dict(doc, bogus=1)
    with pytest.raises(ValueError):
        PatchTheta.from_json(json.dumps(extra))
    missing = {k: v for k, v in doc.items() if k != "gray"}
    with pytest.raises(ValueError):
        PatchTheta.from_json(json.dumps(missing))
    infeasible = dict(doc, deltas=[0.6] * n_edges(6))
    with pytest.raises(ValueError):
        PatchTheta.from_json(json.dumps(infeasible))


def test_flatten_kinds_share_endpoints():
    gen = np.random.Generator(np.random.Philox(12))
    for kind in ("bezier", "straight", "polyline", "catmull_rom"):
        th = random_feasible(gen, kind=kind)
        pts = flatten_edge(th, EdgeId("h", 3, 2), spacing=20.0)
        assert pts.shape == (SEGMENTS_PER_EDGE + 1, 2)
        p0, _, p2 = edge_geometry(th, EdgeId("h", 3, 2), spacing=20.0)
        assert np.allclose(pts[0], p0, atol=1e-9)
        assert np.allclose(pts[-1], p2, atol=1e-9)


def test_flatten_straight_is_chord():
    th = make_theta(deltas=np.full(n_edges(6), 0.4), kind="straight")
    pts = flatten_edge(th, EdgeId("h", 2, 2), spacing=16.0)
    p0, _, p2 = edge_geometry(th, EdgeId("h", 2, 2), spacing=16.0)
    expect = p0[None, :] + np.linspace(0, 1, len(pts))[:, None] * (p2 - p0)[None, :]
    assert np.allclose(pts, expect, atol=1e-12)


def test_flatten_polyline_hits_control_point():
    th = make_theta(deltas=np.full(n_edges(6), 0.4), kind="polyline")
    pts = flatten_edge(th, EdgeId("h", 2, 2), spacing=16.0)
    _, p1, _ = edge_geometry(th, EdgeId("h", 2, 2), spacing=16.0)
    # even segment count puts one vertex exactly at the corner
    assert np.min(np.linalg.norm(pts - p1, axis=1)) < 1e-9


def test_force_straight_overrides_delta():
    th = make_theta(deltas=np.full(n_edges(6), 0.4))
    pts = flatten_edge(th, EdgeId("h", 0, 0), spacing=16.0, force_straight=True)
    assert np.allclose(pts[:, 1], 0.0, atol=1e-12)


def test_cell_outline_shape_and_perimeter():
    th = make_theta(deltas=np.full(n_edges(6), 0.4))
    poly = cell_outline(th, 0, 0, spacing=16.0)
    assert poly.shape == (4 * SEGMENTS_PER_EDGE, 2)
    # top and left edges of cell (0,0) lie on the patch boundary: straight
    top = poly[:SEGMENTS_PER_EDGE]
    assert np.allclose(top[:, 1], 0.0, atol=1e-12)
    with pytest.raises(ValueError):
        cell_outline(th, 6, 0, spacing=16.0)


def test_rasterize_zero_deltas_tiles_exactly():
    th = make_theta(dim=6)
    claimed, double = rasterize_cells(th, 48)
    assert double == 0
    assert claimed.all()
    raster = rasterize_patch(th, 48)
    assert np.array_equal(raster.coverage, np.ones((48, 48)))


def test_rasterize_single_cell_area():
    mask = np.zeros((6, 6), dtype=np.int64)
    mask[2, 3] = 1
    th = make_theta(mask=mask)
    raster = rasterize_patch(th, 48)
    # straight cell of an exact tiling: (48/6)^2 pixels of full coverage
    assert abs(raster.coverage.sum() - 64.0) < 1e-9
    ys, xs = np.nonzero(raster.coverage)
    assert ys.min() >= 16 and ys.max() < 24
    assert xs.min() >= 24 and xs.max() < 32


def test_rasterize_empty_mask():
    th = make_theta(mask=np.zeros((6, 6), dtype=np.int64))
    raster = rasterize_patch(th, 48)
    assert raster.coverage.sum() == 0.0


def test_interior_bulge_changes_cell_area():
    # positive delta on the edge below cell (0,0) bulges it downward
    def one_cell_sum(delta):
        deltas = np.zeros(n_edges(2))
        deltas[edge_index(EdgeId("h", 1, 0), 2)] = delta
        mask = np.zeros((2, 2), dtype=np.int64)
        mask[0, 0] = 1
        th = make_theta(dim=2, deltas=deltas, mask=mask)
        return rasterize_patch(th, 64).coverage.sum()

    assert one_cell_sum(0.4) > one_cell_sum(0.0) > one_cell_sum(-0.4)


def test_adjacent_cells_never_double_claim():
    gen = np.random.Generator(np.random.Philox(13))
    for trial in range(20):
        th = random_feasible(gen)
        _, double = rasterize_cells(th, 96)
        assert double == 0


def test_infeasible_facing_edges_collide():
    # perpendicular corner-sharing edges at delta=0.6 must overlap
    deltas = np.zeros(n_edges(6))
    deltas[edge_index(EdgeId("h", 2, 2), 6)] = 0.6
    deltas[edge_index(EdgeId("v", 2, 2), 6)] = 0.6
    th = make_theta(deltas=deltas)
    assert validate_theta(th) != []
    _, double = rasterize_cells(th, 256)
    assert double > 0


def _parity_scan_fill(segs, side, sub):
    # independent route: per-row crossing sort + searchsorted parity
    n = side * sub
    inside = np.zeros((n, n), dtype=bool)
    x1, y1, x2, y2 = segs[:, 0], segs[:, 1], segs[:, 2], segs[:, 3]
    keep = y1 != y2
    x1, y1, x2, y2 = x1[keep], y1[keep], x2[keep], y2[keep]
    if x1.size == 0:
        return inside
    invdy = 1.0 / (y2 - y1)
    coords = (np.arange(n) + 0.5) / sub
    for iy in range(n):
        yc = (iy + 0.5) / sub
        hits = (y1 <= yc) & (yc < y2)
        if not hits.any():
            continue
        xc = np.sort(x1[hits] + (yc - y1[hits]) * invdy[hits] * (x2[hits] - x1[hits]))
        inside[iy] = (np.searchsorted(xc, coords, side="left") & 1).astype(bool)
    return inside


def test_scan_fill_matches_parity_reference():
    gen = np.random.Generator(np.random.Philox(4711))
    checked = 0
    for kind in ("bezier", "straight", "polyline", "catmull_rom"):
        for side, dim in ((17, 2), (48, 6)):
            deltas = gen.uniform(-0.8, 0.8, n_edges(dim))  # infeasible allowed
            th = make_theta(dim=dim, deltas=deltas, kind=kind)
            spacing = side / dim
            for row in range(dim):
                for col in range(dim):
                    poly = cell_outline(th, row, col, spacing)
                    segs = _canonical_segments(poly)
                    got = _scan_fill(segs, side, SUPERSAMPLE)
                    want = _parity_scan_fill(segs, side, SUPERSAMPLE)
                    assert np.array_equal(got, want)
                    checked += 1
    assert checked == 4 * (4 + 36)


def test_patch_raster_validation():
    with pytest.raises(ValueError):
        PatchRaster(side=4, coverage=np.zeros((3, 4)))
    with pytest.raises(ValueError):
        PatchRaster(side=2, coverage=np.full((2, 2), 1.5))


def test_patch_side_and_origin():
    assert patch_side_for(0.25, 128) == 32
    assert patch_side_for(0.25, 140) == 35
    target = BBox(10, 5, 20, 40)
    x0, y0 = patch_origin(target, 10)
    assert (x0, y0) == (15, 16)  # cx=20, cy=5+0.4*40=21


def test_compose_blend_arithmetic():
    scene = GrayImage(np.full((40, 40), 0.8))
    target = BBox(10, 4, 16, 32)  # side = round(0.25*32) = 8
    th = make_theta(gray=0.0)
    raster = rasterize_patch(th, 8)
    out = compose(scene, target, th, raster)
    x0, y0 = patch_origin(target, 8)
    assert np.allclose(out.pixels[y0 : y0 + 8, x0 : x0 + 8], 0.0, atol=1e-12)
    untouched = np.ones((40, 40), dtype=bool)
    untouched[y0 : y0 + 8, x0 : x0 + 8] = False
    assert np.array_equal(out.pixels[untouched], scene.pixels[untouched])


def test_compose_partial_coverage_blend():
    scene = GrayImage(np.full((40, 40), 0.8))
    target = BBox(10, 4, 16, 32)
    th = make_theta(gray=0.2)
    raster = PatchRaster(side=8, coverage=np.full((8, 8), 0.5))
    out = compose(scene, target, th, raster)
    x0, y0 = patch_origin(target, 8)
    assert np.allclose(out.pixels[y0 : y0 + 8, x0 : x0 + 8], 0.5 * 0.8 + 0.5 * 0.2)


def test_compose_clips_at_image_edge():
    scene = GrayImage(np.full((20, 20), 0.6))
    target = BBox(0, 0, 8, 16)  # patch side 4, origin may go negative
    th = make_theta(dim=2, gray=0.0)
    raster = rasterize_patch(th, 4)
    out = compose(scene, target, th, raster)
    assert out.pixels.shape == (20, 20)
    assert out.pixels.min() == 0.0


def test_compose_outside_returns_scene():
    scene = GrayImage(np.full((20, 20), 0.6))
    target = BBox(-40, -40, 8, 16)
    th = make_theta(dim=2, gray=0.0)
    raster = rasterize_patch(th, 4)
    assert compose(scene, target, th, raster) is scene


def test_compose_rejects_mismatched_raster():
    scene = GrayImage(np.full((40, 40), 0.8))
    target = BBox(10, 4, 16, 32)
    th = make_theta()
    with pytest.raises(ValueError):
        compose(scene, target, th, rasterize_patch(th, 9))
