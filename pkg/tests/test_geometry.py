import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.spatial import ConvexHull

from geometry import (
    DegenerateInput,
    DuplicatePoint,
    Edge,
    Point2,
    Triangle,
    circumcircle_contains,
    convex_hull,
    delaunay_triangulate,
    incircle,
    longest_edge,
    orient2d,
    points_from_array,
)


def _random_points(seed: int, n: int, scale: float = 100.0):
    rng = np.random.default_rng(seed)
    return points_from_array(rng.uniform(0, scale, size=(n, 2)))


def _assert_delaunay(tri):
    for t in tri.triangles:
        for k, p in enumerate(tri.points):
            if k in t.vertices:
                continue
            assert not circumcircle_contains(t, p, tri.points), f"point {k} inside circumcircle of {t.vertices}"


def _assert_edge_manifold(tri):
    counts = {key: len(v) for key, v in tri.adjacency.items()}
    boundary = {key for key, n in counts.items() if n == 1}
    assert set(counts.values()) <= {1, 2}
    assert boundary == set(tri.hull_edges)


# =============================================================================
# Primitives
# =============================================================================

def test_point_rejects_non_finite():
    with pytest.raises(ValueError):
        Point2(float("nan"), 0.0)
    with pytest.raises(ValueError):
        Point2(0.0, float("inf"))


def test_edge_normalises_endpoints_and_rejects_loops():
    pts = [Point2(0, 0), Point2(3, 4)]
    e = Edge.between(1, 0, pts)
    assert e.endpoints == (0, 1)
    assert e.length == pytest.approx(5.0, rel=1e-12)
    assert e == Edge((0, 1), 123.0)
    with pytest.raises(ValueError):
        Edge((2, 2), 0.0)


def test_triangle_is_normalised_ccw():
    pts = [Point2(0, 0), Point2(0, 1), Point2(1, 0)]
    t = Triangle.from_vertices(0, 1, 2, pts)
    assert t.vertices == (0, 2, 1)
    assert t.area(pts) > 0
    assert [e.endpoints for e in t.edges] == [(0, 2), (1, 2), (0, 1)]


def test_collinear_triangle_is_degenerate():
    pts = [Point2(0, 0), Point2(1, 1), Point2(2, 2)]
    with pytest.raises(DegenerateInput):
        Triangle.from_vertices(0, 1, 2, pts)


def test_predicates_fall_back_to_exact_arithmetic():
    # nearly collinear beyond double precision of the naive determinant
    a, b = (0.5, 0.5), (12.0, 12.0)
    c = (24.0, 24.0 + 2.0 ** -48)
    assert orient2d(a, b, c) == 1
    assert orient2d(a, b, (24.0, 24.0)) == 0
    assert incircle((0, 0), (1, 0), (0, 1), (1, 1)) == 0


# =============================================================================
# convex_hull
# =============================================================================

def test_hull_of_unit_square():
    square = [Point2(0, 0), Point2(1, 0), Point2(1, 1), Point2(0, 1)]
    assert convex_hull(square) == [0, 1, 2, 3]


def test_hull_excludes_interior_point():
    pts = [Point2(0, 0), Point2(1, 0), Point2(1, 1), Point2(0, 1), Point2(0.5, 0.5)]
    assert convex_hull(pts) == [0, 1, 2, 3]


def test_hull_contains_every_point():
    pts = _random_points(3, 50)
    hull = convex_hull(pts)
    for k in range(len(hull)):
        a, b = pts[hull[k]], pts[hull[(k + 1) % len(hull)]]
        for p in pts:
            assert orient2d((a.x, a.y), (b.x, b.y), (p.x, p.y)) >= 0


@pytest.mark.parametrize("pts", [
    [Point2(0, 0), Point2(1, 1)],
    [Point2(0, 0), Point2(1, 1), Point2(2, 2), Point2(5, 5)],
])
def test_hull_degenerate_inputs(pts):
    with pytest.raises(DegenerateInput):
        convex_hull(pts)


# =============================================================================
# circumcircle_contains / longest_edge
# =============================================================================

@pytest.mark.parametrize("p, inside", [
    (Point2(0.5, 0.5), True),
    (Point2(1, 1), False),
    (Point2(2, 2), False),
])
def test_circumcircle_contains(p, inside):
    pts = [Point2(0, 0), Point2(1, 0), Point2(0, 1)]
    tri = Triangle.from_vertices(0, 1, 2, pts)
    assert circumcircle_contains(tri, p, pts) is inside


def test_longest_edge_of_345_triangle():
    pts = [Point2(0, 0), Point2(3, 0), Point2(0, 4)]
    e = longest_edge(Triangle.from_vertices(0, 1, 2, pts))
    assert e.endpoints == (1, 2)
    assert e.length == pytest.approx(5.0)


def test_longest_edge_tie_prefers_smallest_endpoints():
    pts = [Point2(0, 0), Point2(1, 0), Point2(0.5, math.sqrt(3) / 2)]
    assert longest_edge(Triangle.from_vertices(2, 1, 0, pts)).endpoints == (0, 1)


def test_longest_edge_right_isoceles():
    pts = [Point2(0, 0), Point2(1, 0), Point2(0, 1)]
    e = longest_edge(Triangle.from_vertices(0, 1, 2, pts))
    assert e.endpoints == (1, 2)
    assert e.length == pytest.approx(math.sqrt(2))


# =============================================================================
# delaunay_triangulate
# =============================================================================

def test_square_gives_two_triangles():
    square = [Point2(0, 0), Point2(1, 0), Point2(1, 1), Point2(0, 1)]
    tri = delaunay_triangulate(square)
    assert len(tri.triangles) == 2
    shared = [key for key, owners in tri.adjacency.items() if len(owners) == 2]
    assert len(shared) == 1 and shared[0] in {(0, 2), (1, 3)}
    assert tri.area() == pytest.approx(1.0)


def test_square_with_centre_uses_centre_everywhere():
    pts = [Point2(0, 0), Point2(1, 0), Point2(1, 1), Point2(0, 1), Point2(0.5, 0.5)]
    tri = delaunay_triangulate(pts)
    assert len(tri.triangles) == 4
    assert all(4 in t.vertices for t in tri.triangles)
    _assert_delaunay(tri)


def test_duplicate_points_are_rejected():
    pts = [Point2(0, 0), Point2(1, 0), Point2(0, 1), Point2(1e-12, 0)]
    with pytest.raises(DuplicatePoint):
        delaunay_triangulate(pts)


def test_collinear_points_are_rejected():
    with pytest.raises(DegenerateInput):
        delaunay_triangulate([Point2(k, 2 * k) for k in range(6)])


def test_cocircular_grid():
    pts = [Point2(x, y) for x in range(5) for y in range(5)]
    tri = delaunay_triangulate(pts)
    assert tri.area() == pytest.approx(16.0, rel=1e-12)
    assert len(tri.hull) == 16
    assert len(tri.triangles) == 2 * len(pts) - 2 - len(tri.hull)
    _assert_delaunay(tri)
    _assert_edge_manifold(tri)


def test_triangulation_is_deterministic():
    pts = _random_points(21, 80)
    a, b = delaunay_triangulate(pts), delaunay_triangulate(pts)
    assert a.triangles == b.triangles
    assert a.hull == b.hull
    assert dict(a.adjacency) == dict(b.adjacency)


@settings(max_examples=25)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(10, 200))
def test_random_triangulations_are_valid(seed, n):
    pts = _random_points(seed, n)
    tri = delaunay_triangulate(pts)

    _assert_delaunay(tri)
    _assert_edge_manifold(tri)
    assert len(tri.triangles) <= 2 * n - 2 - len(tri.hull)
    hull_area = ConvexHull(np.array([[p.x, p.y] for p in pts])).volume
    assert tri.area() == pytest.approx(hull_area, rel=1e-9)
    assert all(t.area(pts) > 0 for t in tri.triangles)
