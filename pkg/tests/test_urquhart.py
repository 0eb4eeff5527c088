import math

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, strategies as st

from geometry import Edge, Point2, Triangle, delaunay_triangulate, points_from_array, polygon_area
from urquhart import (
    Cycle,
    SharedEdgeMissing,
    build_hierarchy,
    build_urquhart,
    discard_boundary_polygons,
    filter_hanging_edges,
    phi,
    symmetric_difference_merge,
    urquhart_cycles,
)

SQUARE = [Point2(0, 0), Point2(1, 0), Point2(1, 1), Point2(0, 1)]


def _jittered_grid(seed: int = 7, side: int = 8, spacing: float = 2.0):
    rng = np.random.default_rng(seed)
    xy = np.array([(x, y) for x in range(side) for y in range(side)], dtype=float) * spacing
    xy += rng.uniform(-0.5, 0.5, size=xy.shape)
    return points_from_array(xy)


def _walk(vertices, points):
    """Cycle over an explicit closed vertex walk."""
    edges = tuple(Edge.between(vertices[k], vertices[k + 1], points) for k in range(len(vertices) - 1))
    return Cycle(edges, tuple(vertices), frozenset({0}))


@pytest.fixture(scope="module")
def grid_tessellation():
    pts = _jittered_grid()
    tri = delaunay_triangulate(pts)
    graph, hierarchy = build_urquhart(tri)
    return tri, graph, hierarchy


# =============================================================================
# Cycle operations
# =============================================================================

def test_merge_two_triangles_of_square():
    t0 = Triangle.from_vertices(0, 1, 2, SQUARE)
    t1 = Triangle.from_vertices(0, 2, 3, SQUARE)
    merged = symmetric_difference_merge(
        Cycle.from_triangle(t0, 0), Cycle.from_triangle(t1, 1), Edge.between(0, 2, SQUARE)
    )
    assert merged.vertex_sequence[0] == merged.vertex_sequence[-1]
    assert merged.vertex_count == 4
    assert len(merged.edge_sequence) == 4
    assert Edge.between(0, 2, SQUARE) not in merged.edge_sequence
    assert merged.constituent_triangles == {0, 1}
    assert merged.area(SQUARE) == pytest.approx(1.0)
    assert merged.is_simple and not merged.has_hanging_edge


def test_merge_keeps_walk_continuous():
    t0 = Triangle.from_vertices(0, 1, 2, SQUARE)
    t1 = Triangle.from_vertices(0, 2, 3, SQUARE)
    merged = symmetric_difference_merge(
        Cycle.from_triangle(t1, 1), Cycle.from_triangle(t0, 0), Edge.between(0, 2, SQUARE)
    )
    for u, v, edge in merged.steps():
        assert edge.endpoints == tuple(sorted((u, v)))


def test_merge_requires_shared_edge():
    t0 = Triangle.from_vertices(0, 1, 2, SQUARE)
    t1 = Triangle.from_vertices(0, 2, 3, SQUARE)
    with pytest.raises(SharedEdgeMissing):
        symmetric_difference_merge(
            Cycle.from_triangle(t0, 0), Cycle.from_triangle(t1, 1), Edge.between(1, 2, SQUARE)
        )


def test_filter_removes_hanging_edge():
    pts = [Point2(0, 0), Point2(2, 0), Point2(1, 2), Point2(1, 3)]
    cycle = _walk((0, 1, 2, 3, 2, 0), pts)
    assert cycle.has_hanging_edge

    kept = filter_hanging_edges(cycle)
    assert kept is not None
    assert kept.vertex_sequence == (0, 1, 2, 0)
    assert not kept.has_hanging_edge
    assert kept.constituent_triangles == cycle.constituent_triangles


def test_filter_returns_clean_cycle_unchanged():
    cycle = _walk((0, 1, 2, 3, 0), SQUARE)
    assert filter_hanging_edges(cycle) is cycle


def test_filter_rejects_degenerate_remainder():
    pts = [Point2(0, 0), Point2(1, 0)]
    assert filter_hanging_edges(_walk((0, 1, 0), pts)) is None


def test_filter_rejects_pinched_walk():
    # figure eight through vertex 0: two loops sharing one vertex
    pts = [Point2(0, 0), Point2(1, 1), Point2(1, -1), Point2(-1, 1), Point2(-1, -1)]
    assert filter_hanging_edges(_walk((0, 1, 2, 0, 4, 3, 0), pts)) is None


def test_boundary_polygons_are_discarded():
    square = _walk((0, 1, 2, 3, 0), SQUARE)
    assert discard_boundary_polygons([square], [0, 1, 2, 3]) == []
    flagged = Cycle(square.edge_sequence, square.vertex_sequence, square.constituent_triangles, boundary=True)
    assert discard_boundary_polygons([flagged], [5, 6, 7]) == []
    assert discard_boundary_polygons([square], [5, 6, 7]) == [square]


# =============================================================================
# Urquhart graph and cycle basis
# =============================================================================

def test_square_gives_single_quadrilateral():
    tri = delaunay_triangulate(SQUARE)
    graph, basis = urquhart_cycles(tri)
    assert len(basis) == 1
    assert basis[0].vertex_count == 4
    assert basis[0].constituent_triangles == {0, 1}
    assert len(graph.edges) == 4
    assert len(graph.removed) == 1

    _, hierarchy = build_urquhart(tri)
    assert hierarchy.h2 == ()
    assert len(hierarchy.discarded) == 1


def test_basis_partitions_triangles_and_conserves_area(grid_tessellation):
    tri, _, _ = grid_tessellation
    _, basis = urquhart_cycles(tri)
    covered = [t for c in basis for t in c.constituent_triangles]
    assert sorted(covered) == list(range(len(tri.triangles)))
    assert sum(c.area(tri.points) for c in basis) == pytest.approx(tri.area(), rel=1e-9)


def test_graph_keeps_every_edge_except_longest(grid_tessellation):
    tri, graph, _ = grid_tessellation
    assert set(graph.edges) | set(graph.removed) == set(tri.edges)
    assert not set(graph.edges) & set(graph.removed)


def test_bounded_faces_match_euler_count(grid_tessellation):
    tri, graph, _ = grid_tessellation
    g = nx.Graph()
    g.add_nodes_from(graph.vertices)
    g.add_edges_from(e.endpoints for e in graph.edges)
    assert nx.is_connected(g)
    assert nx.check_planarity(g)[0]

    _, basis = urquhart_cycles(tri)
    bounded = [c for c in basis if not c.boundary]
    assert len(bounded) == g.number_of_edges() - g.number_of_nodes() + 1


def _face_walks(graph, points):
    """Faces of the straight-line embedding of the Urquhart graph."""
    emb = nx.PlanarEmbedding()
    emb.add_nodes_from(graph.vertices)
    neighbours = {v: [] for v in graph.vertices}
    for e in graph.edges:
        i, j = e.endpoints
        neighbours[i].append(j)
        neighbours[j].append(i)
    for v, ws in neighbours.items():
        ws.sort(key=lambda w: math.atan2(points[w].y - points[v].y, points[w].x - points[v].x))
        for k, w in enumerate(ws):
            if k == 0:
                emb.add_half_edge_first(v, w)
            else:
                emb.add_half_edge_ccw(v, w, ws[k - 1])
    emb.check_structure()

    visited, faces = set(), []
    for u, v in emb.edges():
        if (u, v) not in visited:
            faces.append(emb.traverse_face(u, v, mark_half_edges=visited))
    return faces


def _edge_key(walk):
    return tuple(sorted(tuple(sorted((walk[k], walk[(k + 1) % len(walk)]))) for k in range(len(walk))))


def _assert_basis_matches_faces(points):
    tri = delaunay_triangulate(points)
    graph, basis = urquhart_cycles(tri)
    faces = _face_walks(graph, tri.points)

    # bounded faces share one orientation; the outer face has the other (or
    # zero area when the graph is a tree)
    areas = [polygon_area(tri.points, f) for f in faces]
    positive = sorted(_edge_key(f) for f, a in zip(faces, areas) if a > 1e-9)
    negative = sorted(_edge_key(f) for f, a in zip(faces, areas) if a < -1e-9)
    flat = sum(abs(a) <= 1e-9 for a in areas)
    expected = sorted(tuple(sorted(e.endpoints for e in c.edge_sequence)) for c in basis if not c.boundary)
    if expected == positive:
        assert len(negative) + flat == 1
    else:
        assert expected == negative
        assert len(positive) + flat == 1


@given(seed=st.integers(0, 2**32 - 1))
def test_basis_matches_faces_of_ten_points(seed):
    _assert_basis_matches_faces(points_from_array(np.random.default_rng(seed).uniform(0, 10, size=(10, 2))))


def test_basis_matches_faces_of_grid(grid_tessellation):
    tri, _, _ = grid_tessellation
    _assert_basis_matches_faces(tri.points)


def test_h2_polygons_are_simple_and_interior(grid_tessellation):
    tri, _, hierarchy = grid_tessellation
    assert hierarchy.h2
    hull = set(tri.hull_edges)
    for c in hierarchy.h2:
        assert c.is_simple
        assert c.vertex_count >= 3
        assert not c.boundary
        assert not any(e.endpoints in hull for e in c.edge_sequence)
        assert c.area(tri.points) > 0


def test_h2_triangle_sets_are_disjoint(grid_tessellation):
    _, _, hierarchy = grid_tessellation
    seen = set()
    for c in hierarchy.h2:
        assert not seen & c.constituent_triangles
        seen |= c.constituent_triangles


# =============================================================================
# Hierarchy and phi
# =============================================================================

def test_phi_maps(grid_tessellation):
    _, _, hierarchy = grid_tessellation
    polygon = hierarchy.h2[0]
    assert phi(hierarchy, polygon, 1) == polygon.constituent_triangles
    assert hierarchy.phi1[0] == polygon.constituent_triangles

    edges = phi(hierarchy, polygon, 0)
    assert set(polygon.edge_sequence) <= edges
    assert edges <= hierarchy.h0

    triangle = hierarchy.h1[0]
    assert phi(hierarchy, triangle, 0) == frozenset(triangle.edges)
    with pytest.raises(ValueError):
        phi(hierarchy, triangle, 1)
    with pytest.raises(ValueError):
        phi(hierarchy, polygon, 2)


def test_hierarchy_levels(grid_tessellation):
    tri, _, hierarchy = grid_tessellation
    assert hierarchy.h0 == frozenset(tri.edges)
    assert hierarchy.h1 == tri.triangles
    assert len(hierarchy.phi0) == len(tri.triangles)


@pytest.mark.parametrize("points", [
    [],
    [Point2(0, 0), Point2(1, 1)],
    [Point2(k, k) for k in range(5)],
])
def test_degenerate_observations_give_empty_hierarchy(points):
    hierarchy = build_hierarchy(points)
    assert hierarchy.h2 == ()
    assert hierarchy.h1 == ()
    assert hierarchy.h0 == frozenset()


def test_build_hierarchy_is_deterministic():
    pts = _jittered_grid(seed=11)
    a, b = build_hierarchy(pts), build_hierarchy(pts)
    assert a.h2 == b.h2
    assert a.h1 == b.h1
