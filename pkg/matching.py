"""
Matching module
---------------
Scope:
- Per-observation features: hierarchy + descriptors for every h2 polygon and
  every h1 triangle
- gamma-budget sampling of h2 polygons
- Cascade matcher: polygon gate (tau, vertex gap) -> triangle validation
  (eta) -> edge permutation -> point correspondences
- estimate_transform: cascade followed by 2-point RANSAC

Design:
- Ambiguous candidates are resolved by greedy one-to-one assignment in
  ascending descriptor distance
- Descriptor distances are computed as whole matrices (scipy cdist)
- gamma sampling is seeded per observation from (cfg.seed, obs_index)
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field
from scipy.spatial.distance import cdist

from descriptor import (
    DEFAULT_STEP,
    LengthMismatch,
    PolygonDescriptor,
    describe_all,
    descriptor_matrix,
    samples_per_boundary,
)
from geometry import DuplicatePoint, Edge, Point2, Triangle, as_array
from registration import RansacConfig, RansacResult, RegistrationFailure, ransac_se2
from urquhart import Cycle, Hierarchy, build_hierarchy

logger = logging.getLogger(__name__)


# =============================================================================
# Configuration
# =============================================================================

class MatchConfig(BaseModel):
    """Cascade matcher parameters."""
    model_config = ConfigDict(extra="forbid")

    tau: float = Field(5.0, gt=0, description="Descriptor distance threshold (squared)")
    eta: float = Field(0.5, gt=0, le=1, description="Triangle validation ratio, compared strictly")
    gamma: Optional[int] = Field(None, ge=1, description="h2 polygon budget per observation; None = all")
    vertex_gap: int = Field(3, ge=0, description="Max |N| difference between compared polygons")
    step: float = Field(DEFAULT_STEP, gt=0, lt=1, description="Boundary resampling step")
    seed: int = 0


# =============================================================================
# Data structures
# =============================================================================

@dataclass(frozen=True, eq=False)
class ObservationFeatures:
    """
    Everything the matcher needs about one observation.

    ``polygon_descriptors[k]`` describes ``hierarchy.h2[k]`` and
    ``triangle_descriptors[k]`` describes ``hierarchy.h1[k]``. ``selected``
    lists the h2 indices taking part in matching (all of them unless a gamma
    budget is set).
    """
    hierarchy: Hierarchy
    polygon_descriptors: Tuple[PolygonDescriptor, ...]
    triangle_descriptors: Tuple[PolygonDescriptor, ...]
    landmark_positions: Tuple[Point2, ...]
    selected: Tuple[int, ...]
    polygon_matrix: np.ndarray
    triangle_matrix: np.ndarray
    vertex_counts: np.ndarray
    step: float

    @property
    def coords(self) -> np.ndarray:
        return as_array(self.landmark_positions)

    @property
    def is_empty(self) -> bool:
        return len(self.hierarchy.h1) == 0


@dataclass
class CorrespondenceSet:
    polygon_pairs: List[Tuple[int, int]] = field(default_factory=list)
    triangle_pairs: List[Tuple[int, int]] = field(default_factory=list)
    point_pairs: List[Tuple[int, int]] = field(default_factory=list)
    candidates: int = 0
    comparisons: int = 0


# =============================================================================
# Features
# =============================================================================

def build_features(points: Sequence[Point2], cfg: MatchConfig, obs_index: int = 0) -> ObservationFeatures:
    """
    Triangulation -> Urquhart hierarchy -> descriptors for one observation.

    Observations that cannot be triangulated (fewer than 3 points, collinear,
    duplicates) give empty features, which simply never match.
    """
    points = tuple(points)
    try:
        hierarchy = build_hierarchy(points)
    except DuplicatePoint as e:
        logger.warning("Observation %d has duplicate landmarks: %s", obs_index, e)
        hierarchy = Hierarchy.empty(points)

    m = samples_per_boundary(cfg.step)
    polygons = describe_all(hierarchy.h2, points, cfg.step)
    triangles = describe_all(hierarchy.h1, points, cfg.step)

    if cfg.gamma is None:
        selected = tuple(range(len(hierarchy.h2)))
    else:
        selected = tuple(sample_polygons(hierarchy.h2, cfg.gamma, (cfg.seed, obs_index)))

    return ObservationFeatures(
        hierarchy=hierarchy,
        polygon_descriptors=polygons,
        triangle_descriptors=triangles,
        landmark_positions=points,
        selected=selected,
        polygon_matrix=descriptor_matrix(polygons, m),
        triangle_matrix=descriptor_matrix(triangles, m),
        vertex_counts=np.array([c.vertex_count for c in hierarchy.h2], dtype=int),
        step=cfg.step,
    )


def sample_polygons(h2: Sequence[Cycle], gamma: int, rng_seed) -> List[int]:
    """
    Pick at most ``gamma`` h2 indices by priority tier.

    Tiers: 4 <= |N| <= 9, then |N| > 9, then triangles. A tier that fits the
    remaining budget is taken whole; otherwise a random subset fills it.
    """
    if gamma < 1:
        raise ValueError(f"gamma must be >= 1, got {gamma}")
    rng = np.random.default_rng(rng_seed)
    tiers = (
        [k for k, c in enumerate(h2) if 4 <= c.vertex_count <= 9],
        [k for k, c in enumerate(h2) if c.vertex_count > 9],
        [k for k, c in enumerate(h2) if c.vertex_count == 3],
    )
    selected: List[int] = []
    for tier in tiers:
        room = gamma - len(selected)
        if room <= 0:
            break
        if len(tier) <= room:
            selected.extend(tier)
        else:
            selected.extend(sorted(int(k) for k in rng.choice(tier, size=room, replace=False)))
    return selected


def comparison_count(a: ObservationFeatures, b: ObservationFeatures) -> int:
    """Polygon-level descriptor comparisons for one pair (bounded by g_i * g_j)."""
    return len(a.selected) * len(b.selected)


# =============================================================================
# Cascade
# =============================================================================

def _greedy_assignment(distances: np.ndarray, allowed: np.ndarray) -> List[Tuple[int, int]]:
    """One-to-one (row, col) pairs in ascending distance; ties by row then column."""
    rows, cols = np.nonzero(allowed)
    order = np.lexsort((cols, rows, distances[rows, cols]))
    used_rows, used_cols = set(), set()
    pairs = []
    for k in order:
        r, c = int(rows[k]), int(cols[k])
        if r in used_rows or c in used_cols:
            continue
        used_rows.add(r)
        used_cols.add(c)
        pairs.append((r, c))
    return pairs


def _check_lengths(a: ObservationFeatures, b: ObservationFeatures) -> None:
    if a.polygon_matrix.shape[1] != b.polygon_matrix.shape[1]:
        raise LengthMismatch(
            f"Descriptor lengths differ: {a.polygon_matrix.shape[1]} vs {b.polygon_matrix.shape[1]}"
        )


def match_polygons(a: ObservationFeatures, b: ObservationFeatures, cfg: MatchConfig) -> List[Tuple[int, int]]:
    """
    Candidate h2 pairs (index in a, index in b).

    A pair needs |N_a - N_b| <= vertex_gap and descriptor distance < tau;
    each polygon is used at most once, nearest pairs first.
    """
    _check_lengths(a, b)
    ia = np.array(a.selected, dtype=int)
    ib = np.array(b.selected, dtype=int)
    if ia.size == 0 or ib.size == 0:
        return []

    distances = cdist(a.polygon_matrix[ia], b.polygon_matrix[ib], "sqeuclidean")
    gap = np.abs(a.vertex_counts[ia][:, None] - b.vertex_counts[ib][None, :]) <= cfg.vertex_gap
    pairs = _greedy_assignment(distances, gap & (distances < cfg.tau))
    return [(int(ia[r]), int(ib[c])) for r, c in pairs]


def validate_via_triangles(
    pair: Tuple[int, int],
    a: ObservationFeatures,
    b: ObservationFeatures,
    cfg: MatchConfig,
) -> Optional[List[Tuple[int, int]]]:
    """
    Match the triangles inside a polygon pair.

    Returns the h1 pairs when (matched triangles) / |phi1(L_a)| > eta,
    otherwise None.
    """
    tri_a = sorted(a.hierarchy.phi1[pair[0]])
    tri_b = sorted(b.hierarchy.phi1[pair[1]])
    distances = cdist(a.triangle_matrix[tri_a], b.triangle_matrix[tri_b], "sqeuclidean")
    matches = _greedy_assignment(distances, distances < cfg.tau)
    ratio = len(matches) / len(tri_a)
    if ratio <= cfg.eta:
        logger.debug("Polygon pair %s rejected: triangle ratio %.2f", pair, ratio)
        return None
    return [(tri_a[r], tri_b[c]) for r, c in matches]


def match_triangle_edges(t_k: Triangle, t_l: Triangle) -> List[Tuple[Edge, Edge]]:
    """
    Pair the edges of two triangles.

    Tries the 6 permutations of t_l's edges and keeps the one with the least
    squared length difference; exact ties keep the earliest permutation in
    itertools order.
    """
    lengths_k = np.array([e.length for e in t_k.edges])
    best_perm, best_cost = None, np.inf
    for perm in itertools.permutations(range(3)):
        lengths_l = np.array([t_l.edges[p].length for p in perm])
        cost = float(np.sum((lengths_k - lengths_l) ** 2))
        if cost < best_cost:
            best_perm, best_cost = perm, cost
    return [(t_k.edges[i], t_l.edges[best_perm[i]]) for i in range(3)]


def derive_point_correspondences(edge_pairs: Sequence[Sequence[Tuple[Edge, Edge]]]) -> List[Tuple[int, int]]:
    """
    Point pairs from matched triangle edges.

    Within one triangle pair the vertex shared by two edges on side a maps to
    the vertex shared by their partners on side b. Across triangle pairs a
    point pair is kept one-to-one, most-supported first (first seen on ties).
    """
    votes: Dict[Tuple[int, int], int] = {}
    for pairs in edge_pairs:
        for (ea1, eb1), (ea2, eb2) in itertools.combinations(pairs, 2):
            va = ea1.shares_vertex(ea2)
            vb = eb1.shares_vertex(eb2)
            if va is None or vb is None:
                continue
            votes[(va, vb)] = votes.get((va, vb), 0) + 1

    used_a, used_b = set(), set()
    result = []
    for (va, vb), _ in sorted(votes.items(), key=lambda kv: -kv[1]):
        if va in used_a or vb in used_b:
            continue
        used_a.add(va)
        used_b.add(vb)
        result.append((va, vb))
    return result


# =============================================================================
# Public API
# =============================================================================

def match_observations(a: ObservationFeatures, b: ObservationFeatures, cfg: MatchConfig) -> CorrespondenceSet:
    """Run the full cascade between two observations."""
    result = CorrespondenceSet(comparisons=comparison_count(a, b))
    if a.is_empty or b.is_empty:
        return result

    candidates = match_polygons(a, b, cfg)
    result.candidates = len(candidates)
    for pair in candidates:
        triangle_pairs = validate_via_triangles(pair, a, b, cfg)
        if triangle_pairs is None:
            continue
        result.polygon_pairs.append(pair)
        result.triangle_pairs.extend(triangle_pairs)

    edge_pairs = [
        match_triangle_edges(a.hierarchy.h1[i], b.hierarchy.h1[j]) for i, j in result.triangle_pairs
    ]
    result.point_pairs = derive_point_correspondences(edge_pairs)
    logger.debug(
        "Cascade: %d candidates, %d validated polygons, %d triangles, %d points",
        result.candidates, len(result.polygon_pairs), len(result.triangle_pairs), len(result.point_pairs),
    )
    return result


def estimate_transform(
    a: ObservationFeatures,
    b: ObservationFeatures,
    match_cfg: MatchConfig,
    ransac_cfg: RansacConfig,
    min_correspondences: int = 2,
) -> Tuple[CorrespondenceSet, Optional[RansacResult]]:
    """
    Correspondences and, when RANSAC succeeds, H(a, b): maps b's frame into a's.

    Returns ``(correspondences, None)`` when there are too few point pairs or
    no consensus.
    """
    corrs = match_observations(a, b, match_cfg)
    if len(corrs.point_pairs) < max(2, min_correspondences):
        return corrs, None

    dst = a.coords[[i for i, _ in corrs.point_pairs]]
    src = b.coords[[j for _, j in corrs.point_pairs]]
    try:
        result = ransac_se2(src, dst, ransac_cfg, min_correspondences)
    except RegistrationFailure as e:
        logger.debug("RANSAC failed: %s", e)
        return corrs, None
    return corrs, result


# =============================================================================
# Smoke test
# =============================================================================

if __name__ == "__main__":
    from geometry import points_from_array
    from registration import Se2Transform

    rng = np.random.default_rng(11)
    scene = rng.uniform(-30, 30, size=(80, 2))
    moved = Se2Transform(np.radians(30), 4.0, -2.0).apply(scene) + rng.normal(0, 0.05, scene.shape)

    cfg = MatchConfig()
    fa = build_features(points_from_array(scene), cfg, 0)
    fb = build_features(points_from_array(moved), cfg, 1)
    corrs, ransac = estimate_transform(fa, fb, cfg, RansacConfig())

    print("=== Rotated + noisy copy of an 80-landmark scene ===")
    print(f"h2 polygons: {len(fa.hierarchy.h2)} / {len(fb.hierarchy.h2)}")
    print(f"polygon pairs: {len(corrs.polygon_pairs)}  triangle pairs: {len(corrs.triangle_pairs)}"
          f"  point pairs: {len(corrs.point_pairs)}")
    correct = sum(i == j for i, j in corrs.point_pairs)
    print(f"correct point pairs: {correct}/{len(corrs.point_pairs)}")
    if ransac is not None:
        print(f"H: theta={np.degrees(ransac.transform.theta):.2f} deg  "
              f"t=({ransac.transform.tx:.2f}, {ransac.transform.ty:.2f})  inliers={len(ransac.inliers)}")
