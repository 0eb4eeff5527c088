"""
Urquhart tessellation module
----------------------------
Scope:
- Urquhart graph G_U: the Delaunay graph minus each triangle's longest edge
- Cycle basis of G_U built while edges are dropped (symmetric-difference
  merges of the cycles on both sides of each removed edge)
- Post-processing: hanging-edge filtering and boundary-polygon discarding
- Three-level hierarchy H(P) = (H0 edges, H1 triangles, H2 polygons) and the
  phi maps from a higher level to the elements it contains

Design:
- Triangles are processed in index order
- A cycle keeps its directed boundary walk (edges + vertices) and the set of
  triangles merged into it
- A longest edge on the hull has no cycle to merge with; the region is
  flagged ``boundary`` and never reaches H2
"""

from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass, replace
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple, Union

from geometry import (
    DegenerateInput,
    Edge,
    Point2,
    Triangle,
    Triangulation,
    delaunay_triangulate,
    longest_edge,
    polygon_area,
)

logger = logging.getLogger(__name__)


class SharedEdgeMissing(ValueError):
    """The edge to merge along is not in both cycles."""


# =============================================================================
# Data structures
# =============================================================================

@dataclass(frozen=True)
class Cycle:
    """
    Closed boundary walk of a tessellation polygon.

    ``edge_sequence[k]`` joins ``vertex_sequence[k]`` and
    ``vertex_sequence[k + 1]``; the vertex sequence is closed (v0 == vn).
    """
    edge_sequence: Tuple[Edge, ...]
    vertex_sequence: Tuple[int, ...]
    constituent_triangles: FrozenSet[int]
    boundary: bool = False

    @classmethod
    def from_triangle(cls, tri: Triangle, index: int) -> "Cycle":
        a, b, c = tri.vertices
        return cls(tri.edges, (a, b, c, a), frozenset({index}))

    @property
    def vertices(self) -> Tuple[int, ...]:
        return self.vertex_sequence[:-1]

    @property
    def vertex_count(self) -> int:
        """|N|: number of distinct vertices."""
        return len(set(self.vertices))

    @property
    def is_simple(self) -> bool:
        return len(self.vertices) == len(set(self.vertices))

    @property
    def has_hanging_edge(self) -> bool:
        return any(n > 1 for n in Counter(self.edge_sequence).values())

    def steps(self) -> List[Tuple[int, int, Edge]]:
        return [
            (self.vertex_sequence[k], self.vertex_sequence[k + 1], edge)
            for k, edge in enumerate(self.edge_sequence)
        ]

    def area(self, points: Sequence[Point2]) -> float:
        return polygon_area(points, self.vertex_sequence)


@dataclass(frozen=True)
class UrquhartGraph:
    vertices: Tuple[int, ...]
    edges: Tuple[Edge, ...]
    removed: Tuple[Edge, ...]


@dataclass(frozen=True)
class Hierarchy:
    """
    H(P) for one observation.

    ``phi1`` maps an h2 index to the h1 triangle indices it contains and
    ``phi0`` maps an h1 index to its three h0 edges. ``discarded`` holds the
    cycle-basis polygons that did not survive post-processing.
    """
    points: Tuple[Point2, ...]
    h0: FrozenSet[Edge]
    h1: Tuple[Triangle, ...]
    h2: Tuple[Cycle, ...]
    phi1: Mapping[int, FrozenSet[int]]
    phi0: Mapping[int, Tuple[Edge, Edge, Edge]]
    discarded: Tuple[Cycle, ...] = ()

    @classmethod
    def empty(cls, points: Sequence[Point2] = ()) -> "Hierarchy":
        return cls(tuple(points), frozenset(), (), (), {}, {})

    def phi(self, element: Union[Cycle, Triangle], target_level: int) -> FrozenSet:
        """
        Elements of ``target_level`` fully contained in ``element``.

        Cycle -> level 1: triangle indices; Cycle -> level 0: edges of those
        triangles (including removed longest edges); Triangle -> level 0: its
        three edges.
        """
        if isinstance(element, Cycle):
            if target_level == 1:
                return element.constituent_triangles
            if target_level == 0:
                return frozenset(e for t in element.constituent_triangles for e in self.phi0[t])
        elif isinstance(element, Triangle) and target_level == 0:
            return frozenset(element.edges)
        raise ValueError(f"phi cannot map {type(element).__name__} to level {target_level}")


# =============================================================================
# Cycle operations
# =============================================================================

def _from_steps(
    steps: List[Tuple[int, int, Edge]],
    triangles: FrozenSet[int],
    boundary: bool,
) -> Cycle:
    vertices = (steps[0][0],) + tuple(v for _, v, _ in steps)
    return Cycle(tuple(e for _, _, e in steps), vertices, triangles, boundary)


def symmetric_difference_merge(c_a: Cycle, c_b: Cycle, shared: Edge) -> Cycle:
    """
    Merge two cycles along a shared edge.

    ``shared`` is rotated to the last position of c_a and the first position
    of c_b; the walks are then concatenated without it, which keeps the
    boundary-walk order of the result.

    Raises
    ------
    SharedEdgeMissing
        If ``shared`` is not in both edge sequences.
    """
    try:
        ia = c_a.edge_sequence.index(shared)
        ib = c_b.edge_sequence.index(shared)
    except ValueError as e:
        raise SharedEdgeMissing(f"Edge {shared.endpoints} is not shared by both cycles") from e

    steps_a = c_a.steps()
    steps_b = c_b.steps()
    steps_a = steps_a[ia + 1:] + steps_a[:ia + 1]
    steps_b = steps_b[ib:] + steps_b[:ib]
    merged = steps_a[:-1] + steps_b[1:]
    return _from_steps(
        merged,
        c_a.constituent_triangles | c_b.constituent_triangles,
        c_a.boundary or c_b.boundary,
    )


def filter_hanging_edges(c: Cycle) -> Optional[Cycle]:
    """
    Remove edges walked twice (out and back) and re-close the walk.

    Returns None (rejected) when the remainder is not a simple closed walk
    of at least 3 edges.
    """
    counts = Counter(c.edge_sequence)
    steps = [s for s in c.steps() if counts[s[2]] == 1]
    if len(steps) < 3:
        return None
    for k, (_, v, _) in enumerate(steps):
        if steps[(k + 1) % len(steps)][0] != v:
            return None
    starts = [u for u, _, _ in steps]
    if len(starts) != len(set(starts)):
        return None
    if len(steps) == len(c.edge_sequence):
        return c
    return _from_steps(steps, c.constituent_triangles, c.boundary)


def discard_boundary_polygons(h2: Sequence[Cycle], hull: Sequence[int]) -> List[Cycle]:
    """
    Drop every polygon with a side on the hull of the tessellation.

    ``hull`` is the boundary walk of the triangulation (``Triangulation.hull``),
    so hull sides split by collinear points are matched edge by edge.
    """
    n = len(hull)
    hull_edges = {tuple(sorted((hull[k], hull[(k + 1) % n]))) for k in range(n)}
    return [
        c for c in h2
        if not c.boundary and not any(e.endpoints in hull_edges for e in c.edge_sequence)
    ]


# =============================================================================
# Public API
# =============================================================================

def urquhart_cycles(tri: Triangulation) -> Tuple[UrquhartGraph, List[Cycle]]:
    """
    Drop the longest edge of every triangle while merging cycles.

    Returns the Urquhart graph and the raw cycle basis (before hanging-edge
    filtering and boundary discarding), ordered by smallest triangle index.
    """
    cycles: Dict[int, Cycle] = {k: Cycle.from_triangle(t, k) for k, t in enumerate(tri.triangles)}
    owner = list(range(len(tri.triangles)))
    omega: Dict[Tuple[int, int], Edge] = {}

    for k, t in enumerate(tri.triangles):
        e_long = longest_edge(t)
        omega[e_long.endpoints] = e_long
        ca = owner[k]
        neighbor = tri.neighbor(k, e_long)
        if neighbor is None:
            cycles[ca] = replace(cycles[ca], boundary=True)
            continue
        cb = owner[neighbor]
        if ca == cb:
            # both sides already merged; a repeat of e_long is left to the hanging-edge filter
            continue
        merged = symmetric_difference_merge(cycles[ca], cycles[cb], e_long)
        for t_index in cycles[cb].constituent_triangles:
            owner[t_index] = ca
        del cycles[cb]
        cycles[ca] = merged

    kept = tuple(e for e in tri.edges if e.endpoints not in omega)
    removed = tuple(omega[key] for key in sorted(omega))
    graph = UrquhartGraph(tuple(range(len(tri.points))), kept, removed)
    basis = sorted(cycles.values(), key=lambda c: min(c.constituent_triangles))
    logger.debug("Urquhart: %d edges kept, %d removed, %d cycles", len(kept), len(removed), len(basis))
    return graph, basis


def build_urquhart(tri: Triangulation) -> Tuple[UrquhartGraph, Hierarchy]:
    """
    Urquhart graph and polygon hierarchy of a triangulation.

    h2 holds the filtered polygons, including triangles that were never
    merged (3-gons).
    """
    graph, basis = urquhart_cycles(tri)

    filtered: List[Cycle] = []
    discarded: List[Cycle] = []
    for cycle in basis:
        kept = filter_hanging_edges(cycle)
        if kept is None:
            logger.debug("Rejected non-simple cycle over triangles %s", sorted(cycle.constituent_triangles))
            discarded.append(cycle)
        else:
            filtered.append(kept)

    h2 = discard_boundary_polygons(filtered, tri.hull)
    retained = set(map(id, h2))
    discarded.extend(c for c in filtered if id(c) not in retained)

    hierarchy = Hierarchy(
        points=tri.points,
        h0=frozenset(tri.edges),
        h1=tri.triangles,
        h2=tuple(h2),
        phi1={k: c.constituent_triangles for k, c in enumerate(h2)},
        phi0={k: t.edges for k, t in enumerate(tri.triangles)},
        discarded=tuple(discarded),
    )
    return graph, hierarchy


def phi(hierarchy: Hierarchy, element: Union[Cycle, Triangle], target_level: int) -> FrozenSet:
    return hierarchy.phi(element, target_level)


def build_hierarchy(points: Sequence[Point2]) -> Hierarchy:
    """Triangulate and tessellate one observation; degenerate inputs give an empty hierarchy."""
    try:
        tri = delaunay_triangulate(points)
    except DegenerateInput as e:
        logger.warning("Empty hierarchy for %d points: %s", len(points), e)
        return Hierarchy.empty(points)
    return build_urquhart(tri)[1]


# =============================================================================
# Smoke test
# =============================================================================

if __name__ == "__main__":
    import numpy as np

    rng = np.random.default_rng(7)
    grid = [Point2(float(x + rng.uniform(-0.5, 0.5)), float(y + rng.uniform(-0.5, 0.5)))
            for x in range(0, 14, 2) for y in range(0, 14, 2)]
    dt = delaunay_triangulate(grid)
    g, h = build_urquhart(dt)
    _, basis = urquhart_cycles(dt)

    print("=== 7x7 jittered grid ===")
    print(f"Delaunay edges: {len(dt.edges)}  Urquhart edges: {len(g.edges)}")
    print(f"Cycle basis: {len(basis)}  h2 after filtering: {len(h.h2)}")
    print(f"Basis area {sum(c.area(grid) for c in basis):.6f} vs hull area {dt.area():.6f}")
    for c in h.h2[:5]:
        print(f"  |N|={c.vertex_count}  triangles={sorted(c.constituent_triangles)}")
