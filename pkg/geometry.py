"""
Geometry module
---------------
Scope:
- 2-D primitives for landmark sets (Point2, Edge, Triangle)
- Convex hull Q(P) of an observation
- Delaunay triangulation DT(P) with edge adjacency and hull boundary

Design:
- Orientation / in-circle predicates are evaluated in floating point and
  re-evaluated exactly (fractions.Fraction) whenever the float result lies
  inside the rounding error bound (static filters from Shewchuk's predicates)
- Bowyer-Watson insertion with a symbolic vertex at infinity in place of a
  finite super-triangle, so the result always covers the convex hull
- Points on a common circle are never flipped by a later insertion
  (strict in-circle test); this acts as a consistent index-order perturbation
- Every object is immutable; identical input order gives identical output
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Dict, FrozenSet, List, Mapping, Optional, Sequence, Tuple

import numpy as np
from scipy.spatial import ConvexHull, QhullError, cKDTree

logger = logging.getLogger(__name__)

DUPLICATE_TOLERANCE_M = 1e-9
LENGTH_TIE_TOLERANCE_M = 1e-12


class DegenerateInput(ValueError):
    """Fewer than 3 points, or all points collinear."""


class DuplicatePoint(ValueError):
    """Two input points closer than DUPLICATE_TOLERANCE_M."""


# =============================================================================
# Data structures
# =============================================================================

@dataclass(frozen=True)
class Point2:
    """A landmark position in meters, optionally tagged with its source index."""
    x: float
    y: float
    landmark_id: Optional[int] = None

    def __post_init__(self) -> None:
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError(f"Point2 coordinates must be finite, got ({self.x}, {self.y})")

    def distance_to(self, other: "Point2") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)


@dataclass(frozen=True)
class Edge:
    """Undirected edge between two vertex indices, with its cached length."""
    endpoints: Tuple[int, int]
    length: float = field(compare=False)

    def __post_init__(self) -> None:
        i, j = self.endpoints
        if i == j:
            raise ValueError(f"Edge endpoints must be distinct, got {self.endpoints}")
        if i > j:
            object.__setattr__(self, "endpoints", (j, i))

    @classmethod
    def between(cls, i: int, j: int, points: Sequence[Point2]) -> "Edge":
        return cls((i, j), points[i].distance_to(points[j]))

    def shares_vertex(self, other: "Edge") -> Optional[int]:
        common = set(self.endpoints) & set(other.endpoints)
        return common.pop() if len(common) == 1 else None


@dataclass(frozen=True)
class Triangle:
    """Three vertex indices in counter-clockwise order and their edges.

    ``edges[k]`` joins ``vertices[k]`` and ``vertices[(k + 1) % 3]``.
    """
    vertices: Tuple[int, int, int]
    edges: Tuple[Edge, Edge, Edge]

    @classmethod
    def from_vertices(cls, a: int, b: int, c: int, points: Sequence[Point2]) -> "Triangle":
        turn = orient2d(_xy(points[a]), _xy(points[b]), _xy(points[c]))
        if turn == 0:
            raise DegenerateInput(f"Triangle ({a}, {b}, {c}) is collinear")
        if turn < 0:
            b, c = c, b
        # smallest index first, keeps the cyclic (CCW) order
        while a != min(a, b, c):
            a, b, c = b, c, a
        edges = (Edge.between(a, b, points), Edge.between(b, c, points), Edge.between(c, a, points))
        return cls((a, b, c), edges)

    def area(self, points: Sequence[Point2]) -> float:
        return polygon_area(points, self.vertices)


@dataclass(frozen=True)
class Triangulation:
    """Delaunay triangulation DT(P) of a landmark set.

    ``adjacency`` maps an edge's endpoint pair to the indices of the one
    (hull edge) or two (internal edge) triangles using it. ``hull`` is the
    counter-clockwise boundary walk of Q(P); it keeps boundary vertices that
    lie on a hull side.
    """
    points: Tuple[Point2, ...]
    triangles: Tuple[Triangle, ...]
    adjacency: Mapping[Tuple[int, int], Tuple[int, ...]]
    hull: Tuple[int, ...]

    @cached_property
    def edges(self) -> Tuple[Edge, ...]:
        seen: Dict[Tuple[int, int], Edge] = {}
        for tri in self.triangles:
            for edge in tri.edges:
                seen.setdefault(edge.endpoints, edge)
        return tuple(seen[key] for key in sorted(seen))

    @cached_property
    def hull_edges(self) -> FrozenSet[Tuple[int, int]]:
        n = len(self.hull)
        return frozenset(
            tuple(sorted((self.hull[k], self.hull[(k + 1) % n])))  # type: ignore[misc]
            for k in range(n)
        )

    def neighbor(self, tri_index: int, edge: Edge) -> Optional[int]:
        """Triangle across ``edge`` from ``tri_index``, or None on the hull."""
        for other in self.adjacency.get(edge.endpoints, ()):
            if other != tri_index:
                return other
        return None

    def area(self) -> float:
        return sum(tri.area(self.points) for tri in self.triangles)


# =============================================================================
# Helpers
# =============================================================================

def _xy(p: Point2) -> Tuple[float, float]:
    return (p.x, p.y)


def as_array(points: Sequence[Point2]) -> np.ndarray:
    """(n, 2) float array of point coordinates."""
    if len(points) == 0:
        return np.zeros((0, 2))
    return np.array([[p.x, p.y] for p in points], dtype=float)


def points_from_array(coords: np.ndarray, landmark_ids: Optional[Sequence[int]] = None) -> List[Point2]:
    coords = np.asarray(coords, dtype=float).reshape(-1, 2)
    if landmark_ids is None:
        return [Point2(float(x), float(y)) for x, y in coords]
    return [Point2(float(x), float(y), int(lid)) for (x, y), lid in zip(coords, landmark_ids)]


def polygon_area(points: Sequence[Point2], vertices: Sequence[int]) -> float:
    """Signed shoelace area of the polygon walking ``vertices`` (open or closed)."""
    verts = list(vertices)
    if len(verts) > 1 and verts[0] == verts[-1]:
        verts = verts[:-1]
    total = 0.0
    for k, i in enumerate(verts):
        j = verts[(k + 1) % len(verts)]
        total += points[i].x * points[j].y - points[j].x * points[i].y
    return 0.5 * total


# =============================================================================
# Predicates (static filter + exact fallback)
# =============================================================================

_EPSILON = np.finfo(float).eps / 2.0
_CCW_ERRBOUND = (3.0 + 16.0 * _EPSILON) * _EPSILON
_ICC_ERRBOUND = (10.0 + 96.0 * _EPSILON) * _EPSILON


def _sign(value) -> int:
    return (value > 0) - (value < 0)


def orient2d(a: Tuple[float, float], b: Tuple[float, float], c: Tuple[float, float]) -> int:
    """+1 if a, b, c turn counter-clockwise, -1 clockwise, 0 collinear."""
    detleft = (a[0] - c[0]) * (b[1] - c[1])
    detright = (a[1] - c[1]) * (b[0] - c[0])
    det = detleft - detright
    errbound = _CCW_ERRBOUND * (abs(detleft) + abs(detright))
    if det > errbound:
        return 1
    if -det > errbound:
        return -1

    ax, ay, bx, by, cx, cy = (Fraction(v) for v in (*a, *b, *c))
    return _sign((ax - cx) * (by - cy) - (ay - cy) * (bx - cx))


def incircle(
    a: Tuple[float, float],
    b: Tuple[float, float],
    c: Tuple[float, float],
    d: Tuple[float, float],
) -> int:
    """+1 if d is strictly inside the circle through CCW a, b, c; 0 on it; -1 outside."""
    adx, ady = a[0] - d[0], a[1] - d[1]
    bdx, bdy = b[0] - d[0], b[1] - d[1]
    cdx, cdy = c[0] - d[0], c[1] - d[1]

    bdxcdy, cdxbdy = bdx * cdy, cdx * bdy
    cdxady, adxcdy = cdx * ady, adx * cdy
    adxbdy, bdxady = adx * bdy, bdx * ady
    alift = adx * adx + ady * ady
    blift = bdx * bdx + bdy * bdy
    clift = cdx * cdx + cdy * cdy

    det = alift * (bdxcdy - cdxbdy) + blift * (cdxady - adxcdy) + clift * (adxbdy - bdxady)
    permanent = (
        (abs(bdxcdy) + abs(cdxbdy)) * alift
        + (abs(cdxady) + abs(adxcdy)) * blift
        + (abs(adxbdy) + abs(bdxady)) * clift
    )
    errbound = _ICC_ERRBOUND * permanent
    if det > errbound:
        return 1
    if -det > errbound:
        return -1

    fa = [Fraction(v) for v in a]
    fb = [Fraction(v) for v in b]
    fc = [Fraction(v) for v in c]
    fd = [Fraction(v) for v in d]
    adx, ady = fa[0] - fd[0], fa[1] - fd[1]
    bdx, bdy = fb[0] - fd[0], fb[1] - fd[1]
    cdx, cdy = fc[0] - fd[0], fc[1] - fd[1]
    exact = (
        (adx * adx + ady * ady) * (bdx * cdy - cdx * bdy)
        + (bdx * bdx + bdy * bdy) * (cdx * ady - adx * cdy)
        + (cdx * cdx + cdy * cdy) * (adx * bdy - bdx * ady)
    )
    return _sign(exact)


# =============================================================================
# Public API
# =============================================================================

def convex_hull(points: Sequence[Point2]) -> List[int]:
    """
    Counter-clockwise convex hull Q(P) as vertex indices.

    Collinear points on a hull side are excluded. The walk starts at the
    smallest hull index.

    Raises
    ------
    DegenerateInput
        If fewer than 3 points are given or all points are collinear.
    """
    if len(points) < 3:
        raise DegenerateInput(f"Convex hull needs at least 3 points, got {len(points)}")
    try:
        hull = ConvexHull(as_array(points))
    except QhullError as e:
        raise DegenerateInput("All points are collinear (or otherwise degenerate)") from e

    order = [int(i) for i in hull.vertices]
    start = order.index(min(order))
    return order[start:] + order[:start]


def circumcircle_contains(tri: Triangle, p: Point2, points: Sequence[Point2]) -> bool:
    """True iff ``p`` lies strictly inside the circumcircle of ``tri``."""
    a, b, c = (_xy(points[v]) for v in tri.vertices)
    return incircle(a, b, c, _xy(p)) > 0


def longest_edge(tri: Triangle) -> Edge:
    """
    Longest edge of a triangle.

    Lengths equal within LENGTH_TIE_TOLERANCE_M are ties, resolved towards
    the lexicographically smaller endpoint pair.
    """
    best = tri.edges[0]
    for edge in tri.edges[1:]:
        if edge.length > best.length + LENGTH_TIE_TOLERANCE_M:
            best = edge
        elif abs(edge.length - best.length) <= LENGTH_TIE_TOLERANCE_M and edge.endpoints < best.endpoints:
            best = edge
    return best


def delaunay_triangulate(points: Sequence[Point2]) -> Triangulation:
    """
    Delaunay triangulation of a 2-D landmark set (Bowyer-Watson).

    Parameters
    ----------
    points : sequence of Point2
        Landmark positions; vertex indices in the result refer to this order.

    Returns
    -------
    Triangulation

    Raises
    ------
    DegenerateInput
        Fewer than 3 points or all points collinear.
    DuplicatePoint
        Two points closer than 1e-9 m.
    """
    points = tuple(points)
    if len(points) < 3:
        raise DegenerateInput(f"Triangulation needs at least 3 points, got {len(points)}")

    coords = as_array(points)
    close_pairs = cKDTree(coords).query_pairs(DUPLICATE_TOLERANCE_M)
    if close_pairs:
        i, j = min(close_pairs)
        raise DuplicatePoint(f"Points {i} and {j} are closer than {DUPLICATE_TOLERANCE_M} m")

    mesh = _GhostMesh([(float(x), float(y)) for x, y in coords])
    mesh.build(_insertion_order(coords))

    triangles = sorted(
        (Triangle.from_vertices(a, b, c, points) for a, b, c in mesh.real_triangles()),
        key=lambda t: t.vertices,
    )
    adjacency: Dict[Tuple[int, int], Tuple[int, ...]] = {}
    for index, tri in enumerate(triangles):
        for edge in tri.edges:
            adjacency[edge.endpoints] = adjacency.get(edge.endpoints, ()) + (index,)

    hull = mesh.hull_walk()
    logger.debug("Triangulated %d points into %d triangles (%d hull vertices)",
                 len(points), len(triangles), len(hull))
    return Triangulation(points=points, triangles=tuple(triangles), adjacency=adjacency, hull=hull)


# =============================================================================
# Bowyer-Watson with a vertex at infinity
# =============================================================================

_INF = -1


def _insertion_order(coords: np.ndarray) -> List[int]:
    """Deterministic snake order over a coarse grid; keeps point-location walks short."""
    n = len(coords)
    cells = max(1, int(math.sqrt(n / 4.0)))
    lo = coords.min(axis=0)
    span = np.maximum(coords.max(axis=0) - lo, 1e-12)
    gx = np.minimum(((coords[:, 0] - lo[0]) / span[0] * cells).astype(int), cells - 1)
    gy = np.minimum(((coords[:, 1] - lo[1]) / span[1] * cells).astype(int), cells - 1)
    snake = np.where(gy % 2 == 0, gx, cells - 1 - gx)
    return [int(i) for i in np.lexsort((np.arange(n), snake, gy))]


class _GhostMesh:
    """
    Triangles keyed by id. Real triangles are CCW (a, b, c). A ghost triangle
    (u, v, _INF) sits outside hull edge u->v (interior on the right of u->v).
    ``owner`` maps each directed edge to the triangle that walks it.
    """

    def __init__(self, coords: List[Tuple[float, float]]):
        self.coords = coords
        self.triangles: Dict[int, Tuple[int, int, int]] = {}
        self.owner: Dict[Tuple[int, int], int] = {}
        self._next_id = 0
        self._last_real: Optional[int] = None

    # -- bookkeeping ---------------------------------------------------------

    def _add(self, a: int, b: int, c: int) -> None:
        tid = self._next_id
        self._next_id += 1
        self.triangles[tid] = (a, b, c)
        for u, v in ((a, b), (b, c), (c, a)):
            self.owner[(u, v)] = tid
        if _INF not in (a, b, c):
            self._last_real = tid

    def _remove(self, tid: int) -> None:
        a, b, c = self.triangles.pop(tid)
        for u, v in ((a, b), (b, c), (c, a)):
            if self.owner.get((u, v)) == tid:
                del self.owner[(u, v)]

    # -- predicates ------------------------------------------------------------

    def _conflicts(self, tid: int, p: Tuple[float, float]) -> bool:
        a, b, c = self.triangles[tid]
        if c == _INF:
            u, v = self.coords[a], self.coords[b]
            turn = orient2d(u, v, p)
            if turn != 0:
                return turn > 0
            # on the hull line: conflict only strictly inside the hull side
            return ((p[0] - u[0]) * (v[0] - u[0]) + (p[1] - u[1]) * (v[1] - u[1]) > 0
                    and (p[0] - v[0]) * (u[0] - v[0]) + (p[1] - v[1]) * (u[1] - v[1]) > 0)
        return incircle(self.coords[a], self.coords[b], self.coords[c], p) > 0

    # -- construction ----------------------------------------------------------

    def build(self, order: List[int]) -> None:
        i0, i1 = order[0], order[1]
        seed = None
        for k in order[2:]:
            if orient2d(self.coords[i0], self.coords[i1], self.coords[k]) != 0:
                seed = k
                break
        if seed is None:
            raise DegenerateInput("All points are collinear")

        a, b, c = i0, i1, seed
        if orient2d(self.coords[a], self.coords[b], self.coords[c]) < 0:
            b, c = c, b
        self._add(a, b, c)
        self._add(b, a, _INF)
        self._add(c, b, _INF)
        self._add(a, c, _INF)

        for k in order:
            if k not in (i0, i1, seed):
                self._insert(k)

    def _locate(self, p: Tuple[float, float]) -> int:
        """Visibility walk to a triangle in conflict with ``p``."""
        tid = self._last_real
        for _ in range(4 * len(self.triangles) + 16):
            a, b, c = self.triangles[tid]
            for u, v in ((a, b), (b, c), (c, a)):
                if orient2d(self.coords[u], self.coords[v], p) < 0:
                    tid = self.owner[(v, u)]
                    break
            else:
                return tid
            if _INF in self.triangles[tid]:
                return tid
        # walks cannot cycle on a Delaunay mesh; scan as a last resort
        for tid in self.triangles:
            if self._conflicts(tid, p):
                return tid
        raise RuntimeError("Point location failed")

    def _insert(self, k: int) -> None:
        p = self.coords[k]
        start = self._locate(p)
        bad = [start]
        seen = {start}
        stack = [start]
        while stack:
            tid = stack.pop()
            a, b, c = self.triangles[tid]
            for u, v in ((a, b), (b, c), (c, a)):
                nb = self.owner.get((v, u))
                if nb is None or nb in seen:
                    continue
                seen.add(nb)
                if self._conflicts(nb, p):
                    bad.append(nb)
                    stack.append(nb)

        bad_set = set(bad)
        boundary = []
        for tid in bad:
            a, b, c = self.triangles[tid]
            for u, v in ((a, b), (b, c), (c, a)):
                if self.owner.get((v, u)) not in bad_set:
                    boundary.append((u, v))

        for tid in bad:
            self._remove(tid)
        for u, v in boundary:
            if u == _INF:
                self._add(v, k, _INF)
            elif v == _INF:
                self._add(k, u, _INF)
            else:
                self._add(u, v, k)

    # -- output ----------------------------------------------------------------

    def real_triangles(self) -> List[Tuple[int, int, int]]:
        return [tri for tri in self.triangles.values() if _INF not in tri]

    def hull_walk(self) -> Tuple[int, ...]:
        succ = {}
        for a, b, c in self.triangles.values():
            if c == _INF:
                succ[b] = a
        start = min(succ)
        walk = [start]
        while succ[walk[-1]] != start:
            walk.append(succ[walk[-1]])
        return tuple(walk)


# =============================================================================
# Smoke test
# =============================================================================

if __name__ == "__main__":
    square = [Point2(0, 0), Point2(1, 0), Point2(1, 1), Point2(0, 1), Point2(0.5, 0.5)]
    dt = delaunay_triangulate(square)
    print("=== Square + centre ===")
    for t in dt.triangles:
        print(f"  {t.vertices}  longest edge {longest_edge(t).endpoints}")
    print(f"  hull: {dt.hull}  area: {dt.area():.3f}")
