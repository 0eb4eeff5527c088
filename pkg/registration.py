"""
Registration module
-------------------
Scope:
- SE(2) rigid transforms (apply / compose / inverse)
- Closed-form rigid fits: exact from 2 correspondences, least squares from n
- 2-point RANSAC with early stop on inlier ratio

Design:
- theta is kept wrapped to (-pi, pi]
- compose(A, B) applies B first: A.compose(B).apply(p) == A.apply(B.apply(p))
- RANSAC hypotheses are scored in vectorised batches; the sampled sequence
  (and therefore the result) depends only on the seed
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

logger = logging.getLogger(__name__)

PAIR_SEPARATION_M = 1e-9
_BATCH = 512


class DegeneratePair(ValueError):
    """The two source points of a 2-point sample coincide."""


class RegistrationFailure(ValueError):
    """RANSAC produced no usable transform."""

    def __init__(self, reason: str):
        super().__init__(reason)
        self.reason = reason


def wrap_angle(theta: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    wrapped = math.remainder(theta, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


# =============================================================================
# Data structures
# =============================================================================

@dataclass(frozen=True)
class Se2Transform:
    """Planar rigid motion p -> R(theta) p + t."""
    theta: float = 0.0
    tx: float = 0.0
    ty: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "theta", wrap_angle(float(self.theta)))
        object.__setattr__(self, "tx", float(self.tx))
        object.__setattr__(self, "ty", float(self.ty))

    @classmethod
    def identity(cls) -> "Se2Transform":
        return cls()

    @classmethod
    def from_matrix(cls, matrix: np.ndarray) -> "Se2Transform":
        return cls(math.atan2(matrix[1, 0], matrix[0, 0]), matrix[0, 2], matrix[1, 2])

    @property
    def t(self) -> np.ndarray:
        return np.array([self.tx, self.ty])

    def rotation(self) -> np.ndarray:
        c, s = math.cos(self.theta), math.sin(self.theta)
        return np.array([[c, -s], [s, c]])

    def matrix(self) -> np.ndarray:
        m = np.eye(3)
        m[:2, :2] = self.rotation()
        m[:2, 2] = self.t
        return m

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform one (2,) point or an (n, 2) array."""
        pts = np.asarray(points, dtype=float)
        return pts @ self.rotation().T + self.t

    def compose(self, other: "Se2Transform") -> "Se2Transform":
        t = self.rotation() @ other.t + self.t
        return Se2Transform(self.theta + other.theta, t[0], t[1])

    def inverse(self) -> "Se2Transform":
        t = -(self.rotation().T @ self.t)
        return Se2Transform(-self.theta, t[0], t[1])


class RansacConfig(BaseModel):
    """2-point RANSAC parameters."""
    model_config = ConfigDict(extra="forbid")

    d: float = Field(0.5, gt=0, description="Inlier distance threshold, meters")
    r: float = Field(0.99, gt=0, le=1, description="Inlier-fraction early stop")
    s: int = Field(40000, ge=1, description="Maximum iterations")
    refit: bool = Field(True, description="Least-squares refit on the best model's inliers")
    seed: int = 0


@dataclass(frozen=True)
class RansacResult:
    transform: Se2Transform
    inliers: Tuple[int, ...]
    iterations: int
    n_correspondences: int

    @property
    def inlier_ratio(self) -> float:
        return len(self.inliers) / self.n_correspondences


# =============================================================================
# Rigid fits
# =============================================================================

def solve_rigid_2pt(pair1: Tuple[np.ndarray, np.ndarray], pair2: Tuple[np.ndarray, np.ndarray]) -> Se2Transform:
    """
    Exact SE(2) from two (source, target) correspondences.

    Rotation aligns the source difference vector with the target one; the
    translation maps the source midpoint onto the target midpoint.

    Raises
    ------
    DegeneratePair
        If the source points are within 1e-9 m of each other.
    """
    s1, d1 = (np.asarray(p, dtype=float) for p in pair1)
    s2, d2 = (np.asarray(p, dtype=float) for p in pair2)
    ds, dd = s2 - s1, d2 - d1
    if math.hypot(ds[0], ds[1]) <= PAIR_SEPARATION_M:
        raise DegeneratePair(f"Source points {s1} and {s2} coincide")

    theta = math.atan2(ds[0] * dd[1] - ds[1] * dd[0], ds[0] * dd[0] + ds[1] * dd[1])
    rot = Se2Transform(theta)
    t = (d1 + d2) / 2.0 - rot.apply((s1 + s2) / 2.0)
    return Se2Transform(theta, t[0], t[1])


def fit_rigid_lstsq(src: np.ndarray, dst: np.ndarray) -> Se2Transform:
    """Least-squares rigid alignment of src onto dst (centroids, then cross-covariance angle)."""
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    if len(src) == 0 or len(src) != len(dst):
        raise ValueError(f"Need matching non-empty point sets, got {len(src)} and {len(dst)}")

    mu_s, mu_d = src.mean(axis=0), dst.mean(axis=0)
    a, b = src - mu_s, dst - mu_d
    cross = float(np.sum(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0]))
    dot = float(np.sum(a * b))
    theta = math.atan2(cross, dot)
    t = mu_d - Se2Transform(theta).apply(mu_s)
    return Se2Transform(theta, t[0], t[1])


# =============================================================================
# RANSAC
# =============================================================================

def _inlier_mask(transform: Se2Transform, src: np.ndarray, dst: np.ndarray, d: float) -> np.ndarray:
    residual = transform.apply(src) - dst
    return np.einsum("ij,ij->i", residual, residual) < d * d


def ransac_se2(
    src: np.ndarray,
    dst: np.ndarray,
    cfg: RansacConfig,
    min_correspondences: int = 2,
) -> RansacResult:
    """
    Robust SE(2) mapping src points onto dst points.

    Parameters
    ----------
    src, dst : (n, 2) arrays
        Corresponding points; row k of src corresponds to row k of dst.
    cfg : RansacConfig
        Thresholds d (inlier distance), r (early-stop inlier fraction) and
        s (max iterations), plus the seed.
    min_correspondences : int
        Fewer pairs than this is an immediate failure.

    Returns
    -------
    RansacResult
        Best model (refit on its inliers when enabled and not worse), its
        inlier indices and the number of iterations used.

    Raises
    ------
    RegistrationFailure
        Too few correspondences, all source points coincide, or the best
        model has fewer than 4 inliers (2 beyond its own sample).
    """
    src = np.asarray(src, dtype=float).reshape(-1, 2)
    dst = np.asarray(dst, dtype=float).reshape(-1, 2)
    n = len(src)
    if n < max(2, min_correspondences):
        raise RegistrationFailure(f"{n} correspondences, need {max(2, min_correspondences)}")
    if np.ptp(src, axis=0).max() <= PAIR_SEPARATION_M:
        raise RegistrationFailure("All source points coincide")

    rng = np.random.default_rng(cfg.seed)
    threshold = cfg.d * cfg.d
    best_count, best_model, best_mask = -1, None, None
    iterations = 0
    draws = 0

    while iterations < cfg.s and draws < 100 * cfg.s:
        batch = min(_BATCH, cfg.s - iterations)
        i = rng.integers(0, n, size=batch)
        j = rng.integers(0, n - 1, size=batch)
        j = j + (j >= i)
        draws += batch

        ds = src[j] - src[i]
        valid = np.hypot(ds[:, 0], ds[:, 1]) > PAIR_SEPARATION_M
        if not valid.any():
            continue
        i, j, ds = i[valid], j[valid], ds[valid]
        dd = dst[j] - dst[i]

        theta = np.arctan2(ds[:, 0] * dd[:, 1] - ds[:, 1] * dd[:, 0], np.einsum("ij,ij->i", ds, dd))
        c, s = np.cos(theta), np.sin(theta)
        ms = (src[i] + src[j]) / 2.0
        md = (dst[i] + dst[j]) / 2.0
        tx = md[:, 0] - (c * ms[:, 0] - s * ms[:, 1])
        ty = md[:, 1] - (s * ms[:, 0] + c * ms[:, 1])

        px = c[:, None] * src[None, :, 0] - s[:, None] * src[None, :, 1] + tx[:, None]
        py = s[:, None] * src[None, :, 0] + c[:, None] * src[None, :, 1] + ty[:, None]
        inliers = (px - dst[None, :, 0]) ** 2 + (py - dst[None, :, 1]) ** 2 < threshold
        counts = inliers.sum(axis=1)

        stops = np.nonzero(counts >= cfg.r * n)[0]
        used = int(stops[0]) + 1 if stops.size else len(counts)
        k = int(np.argmax(counts[:used]))
        if counts[k] > best_count:
            best_count = int(counts[k])
            best_model = Se2Transform(float(theta[k]), float(tx[k]), float(ty[k]))
            best_mask = inliers[k]
        iterations += used
        if stops.size:
            break

    if best_model is None or best_count < 4:
        raise RegistrationFailure(f"No consensus: best model has {max(best_count, 0)} inliers")

    if cfg.refit:
        refit = fit_rigid_lstsq(src[best_mask], dst[best_mask])
        refit_mask = _inlier_mask(refit, src, dst, cfg.d)
        if refit_mask.sum() >= best_count:
            best_model, best_mask = refit, refit_mask

    logger.debug("RANSAC: %d/%d inliers after %d iterations", int(best_mask.sum()), n, iterations)
    return RansacResult(
        transform=best_model,
        inliers=tuple(int(k) for k in np.nonzero(best_mask)[0]),
        iterations=iterations,
        n_correspondences=n,
    )


# =============================================================================
# Smoke test
# =============================================================================

if __name__ == "__main__":
    rng = np.random.default_rng(5)
    truth = Se2Transform(math.radians(40), 12.0, -7.0)
    src = rng.uniform(-50, 50, size=(100, 2))
    dst = truth.apply(src) + rng.normal(0, 0.1, size=src.shape)
    outliers = rng.choice(100, size=30, replace=False)
    dst[outliers] = rng.uniform(-50, 50, size=(30, 2))

    result = ransac_se2(src, dst, RansacConfig())
    est = result.transform
    print("=== 100 correspondences, 30% outliers, sigma 0.1 ===")
    print(f"theta: {math.degrees(est.theta):.3f} deg (truth 40)")
    print(f"t: ({est.tx:.3f}, {est.ty:.3f}) (truth 12, -7)")
    print(f"inliers: {len(result.inliers)}  iterations: {result.iterations}")
