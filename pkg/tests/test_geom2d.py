import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import brute_force_hull, random_convex_polygon, shapely_halfplane_clip
from pwlnet import errors, geom2d
from pwlnet.geom2d import Embedding, HalfspaceSet, PlanePolytope


def test_area_and_centroid_of_unit_square():
    sq = geom2d.box_polygon([0, 0], [1, 1])
    assert sq.area == pytest.approx(1.0, abs=1e-15)
    np.testing.assert_allclose(sq.centroid, [0.5, 0.5], atol=1e-15)


def test_split_triangle_hand_values():
    # values -2, 2, 2 at (0,0), (4,0), (0,4): zero crossings at (2,0) and (0,2)
    tri = geom2d.plane_polygon([[0, 0], [4, 0], [0, 4]])
    neg, pos = geom2d.split_by_values(tri, [-2.0, 2.0, 2.0])
    assert neg.area == pytest.approx(2.0, abs=1e-12)
    assert pos.area == pytest.approx(6.0, abs=1e-12)
    got = sorted(map(tuple, np.round(neg.vertices, 12)))
    assert got == [(0.0, 0.0), (0.0, 2.0), (2.0, 0.0)]
    assert {(2.0, 0.0), (0.0, 2.0), (4.0, 0.0), (0.0, 4.0)} == set(map(tuple, np.round(pos.vertices, 12)))


def test_split_all_one_side():
    sq = geom2d.box_polygon([0, 0], [1, 1])
    neg, pos = geom2d.split_by_values(sq, [1.0, 2.0, 3.0, 4.0])
    assert neg is None and pos.area == pytest.approx(1.0)
    neg, pos = geom2d.split_by_values(sq, [-1.0, -2.0, -3.0, -4.0])
    assert pos is None and neg.area == pytest.approx(1.0)


def test_split_along_edge_keeps_single_part():
    # the switching line coincides with an edge: nothing of positive area on the negative side
    sq = geom2d.box_polygon([0, 0], [1, 1])
    neg, pos = geom2d.split_by_values(sq, sq.vertices[:, 0])  # value = x
    assert neg is None
    assert pos.area == pytest.approx(1.0)


def test_split_interpolates_attributes():
    sq = geom2d.box_polygon([0, 0], [2, 2])
    vals = sq.vertices[:, 0] - 1.0
    attrs = np.column_stack([sq.vertices[:, 0] * 10.0, sq.vertices[:, 1] * 3.0])
    (nv, na), (pv, pa) = geom2d.split_arrays(sq.vertices, vals, attrs)
    np.testing.assert_allclose(na, np.column_stack([nv[:, 0] * 10.0, nv[:, 1] * 3.0]), atol=1e-12)
    np.testing.assert_allclose(pa, np.column_stack([pv[:, 0] * 10.0, pv[:, 1] * 3.0]), atol=1e-12)


@settings(max_examples=200, deadline=None)
@given(
    seed=st.integers(0, 2**32 - 1),
    a=st.tuples(st.floats(-3, 3), st.floats(-3, 3)).filter(lambda v: abs(v[0]) + abs(v[1]) > 1e-2),
    b=st.floats(-2, 2),
)
def test_split_matches_shapely_and_conserves_area(seed, a, b):
    rng = np.random.default_rng(seed)
    verts = random_convex_polygon(rng, radius=2.0)
    poly = geom2d.plane_polygon(verts)
    vals = verts @ np.asarray(a) + b
    neg, pos = geom2d.split_by_values(poly, vals)
    an = 0.0 if neg is None else neg.area
    ap = 0.0 if pos is None else pos.area
    assert an + ap == pytest.approx(poly.area, rel=1e-9, abs=1e-9)
    ref_neg = shapely_halfplane_clip(verts, a, b, "le").area
    ref_pos = shapely_halfplane_clip(verts, a, b, "ge").area
    # parts dropped as slivers are at most tau_geo of the parent
    assert an == pytest.approx(ref_neg, abs=1e-6 * poly.area + 1e-9)
    assert ap == pytest.approx(ref_pos, abs=1e-6 * poly.area + 1e-9)
    # purity: every vertex of a part is on its side of the line
    scale = np.abs(vals).max()
    if neg is not None:
        assert (neg.vertices @ np.asarray(a) + b <= 1e-9 * (1 + scale)).all()
    if pos is not None:
        assert (pos.vertices @ np.asarray(a) + b >= -1e-9 * (1 + scale)).all()


@settings(max_examples=150, deadline=None)
@given(st.lists(st.tuples(st.integers(-6, 6), st.integers(-6, 6)), min_size=3, max_size=25))
def test_hull_matches_brute_force(points):
    pts = np.array(points, dtype=float)
    hull, degenerate = geom2d.convex_hull_2d(pts)
    ref = brute_force_hull(pts)
    if degenerate:
        assert len(ref) < 3 or geom2d.polygon_area(ref) == pytest.approx(0.0, abs=1e-12)
        return
    assert geom2d.polygon_area(hull) > 0
    # same vertex cycle up to rotation
    assert len(hull) == len(ref)
    ref = np.roll(ref, -int(np.lexsort((ref[:, 1], ref[:, 0]))[0]), axis=0)
    hull = np.roll(hull, -int(np.lexsort((hull[:, 1], hull[:, 0]))[0]), axis=0)
    np.testing.assert_array_equal(hull, ref)


def test_hull_of_collinear_points_is_degenerate():
    _, degenerate = geom2d.convex_hull_2d([[0, 0], [1, 1], [2, 2], [3, 3]])
    assert degenerate


def test_make_plane_polytope_in_r3():
    verts = [[0, 0, 1], [2, 0, 1], [2, 2, 1], [0, 2, 1]]
    poly = geom2d.make_plane_polytope(verts)
    assert poly.area == pytest.approx(4.0)
    amb = poly.ambient_vertices
    assert {tuple(np.round(v, 12)) for v in amb} == {tuple(map(float, v)) for v in verts}


def test_make_plane_polytope_rejects_bad_input():
    with pytest.raises(errors.TooFewVerticesError):
        geom2d.make_plane_polytope([[0, 0], [1, 1]])
    with pytest.raises(errors.NonPlanarError):
        geom2d.make_plane_polytope([[0, 0, 0], [1, 0, 0], [0, 1, 0], [0, 0, 1]])
    with pytest.raises(errors.DegenerateError):
        geom2d.make_plane_polytope([[0, 0], [1, 1], [2, 2]])


def test_embedding_must_be_orthonormal():
    with pytest.raises(ValueError):
        Embedding([0.0, 0.0, 0.0], [[1.0, 0.0, 0.0], [1.0, 1.0, 0.0]])


def test_embedding_roundtrip():
    rng = np.random.default_rng(3)
    q, _ = np.linalg.qr(rng.normal(size=(5, 2)))
    emb = Embedding(rng.normal(size=5), q.T)
    u = rng.normal(size=(10, 2))
    np.testing.assert_allclose(emb.project(emb.embed(u)), u, atol=1e-12)


def test_contains_points():
    sq = geom2d.box_polygon([0, 0], [1, 1])
    inside = geom2d.contains_points(sq.vertices, np.array([[0.5, 0.5], [1.0, 0.5], [1.1, 0.5]]))
    assert inside.tolist() == [True, True, False]


def test_argmax_region_rows():
    Y = HalfspaceSet.argmax_region(1, 3)
    # y_j - y_1 <= 0 for j = 0, 2
    assert Y.satisfied(np.array([[0.0, 1.0, 0.5]])).tolist() == [True]
    assert Y.satisfied(np.array([[2.0, 1.0, 0.5]])).tolist() == [False]
    assert len(Y) == 2


def test_polytope_json_roundtrip(tmp_path):
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(rng.normal(size=(4, 2)))
    poly = PlanePolytope(Embedding(rng.normal(size=4), q.T), [[0, 0], [1, 0], [0, 1]])
    obj = json.loads(json.dumps(geom2d.polytope_to_json(poly)))
    back = geom2d.polytope_from_json(obj)
    np.testing.assert_allclose(back.ambient_vertices, poly.ambient_vertices, atol=1e-12)
    assert geom2d.polytope_from_json({"box": [[0, 0], [2, 3]]}).area == pytest.approx(6.0)


def test_set_tolerances_roundtrip():
    saved = (geom2d.TOL.geo, geom2d.TOL.split)
    try:
        geom2d.set_tolerances(1e-5, 1e-8)
        assert (geom2d.TOL.geo, geom2d.TOL.split) == (1e-5, 1e-8)
    finally:
        geom2d.set_tolerances(*saved)
    assert (geom2d.TOL.geo, geom2d.TOL.split) == (1e-7, 1e-10)
