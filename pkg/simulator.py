"""
Forest simulator module
-----------------------
Scope:
- Synthetic forests: Bridson Poisson-disc sampling + Gaussian jitter
- Circular robot trajectory repeated over several laps
- Noisy observations: sensor-radius crop, Bernoulli detection dropout,
  Gaussian position noise, random frame rotation

Design:
- Every random draw comes from a numpy Generator seeded with a
  SeedSequence entropy tuple (seed, stream, index), so the map and every
  observation can be regenerated independently
- Ground-truth landmark ids and poses travel with each observation for
  evaluation only
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.spatial import cKDTree

from geometry import Point2, points_from_array
from registration import Se2Transform

logger = logging.getLogger(__name__)

_STREAM_BRIDSON = 0
_STREAM_JITTER = 1
_STREAM_OBSERVE = 2


class SceneDoesNotFit(ValueError):
    """Forest or trajectory parameters that do not fit the configured extent."""


# =============================================================================
# Configuration
# =============================================================================

class SimConfig(BaseModel):
    """Forest, trajectory and sensor-noise parameters."""
    model_config = ConfigDict(extra="forbid")

    extent: Tuple[float, float] = (1000.0, 1000.0)
    r_min: float = Field(7.0, gt=0, description="Poisson-disc minimum distance, meters")
    jitter_sigma: float = Field(3.0, ge=0, description="Std of the per-tree jitter, meters")
    sensor_radius: float = Field(50.0, gt=0)
    omega: float = Field(1.0, gt=0, le=1, description="Detection probability")
    sigma: float = Field(0.0, ge=0, description="Per-axis position noise std, meters")
    laps: int = Field(4, ge=1)
    steps_per_lap: int = Field(36, ge=1)
    circle_radius: float = Field(300.0, gt=0)
    circle_center: Optional[Tuple[float, float]] = None
    rotation_range: Tuple[float, float] = (0.0, math.pi / 2)
    bridson_k: int = Field(30, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def _check_ranges(self) -> "SimConfig":
        if min(self.extent) <= 0:
            raise ValueError(f"extent must be positive, got {self.extent}")
        lo, hi = self.rotation_range
        if lo > hi:
            raise ValueError(f"rotation_range must be ordered, got {self.rotation_range}")
        return self

    @property
    def center(self) -> Tuple[float, float]:
        if self.circle_center is not None:
            return self.circle_center
        return (self.extent[0] / 2.0, self.extent[1] / 2.0)

    @classmethod
    def desk_scale(cls, **overrides) -> "SimConfig":
        """400 x 400 m forest, 120 m circle, 2 laps."""
        base = dict(extent=(400.0, 400.0), circle_radius=120.0, laps=2, steps_per_lap=36)
        return cls(**{**base, **overrides})

    @classmethod
    def full_scale(cls, **overrides) -> "SimConfig":
        """1 km^2 forest, 300 m circle, 4 laps."""
        return cls(**overrides)


# =============================================================================
# Data structures
# =============================================================================

@dataclass(frozen=True, eq=False)
class ForestMap:
    landmarks: np.ndarray
    landmark_ids: np.ndarray
    extent: Tuple[float, float]

    @cached_property
    def tree(self) -> cKDTree:
        return cKDTree(self.landmarks)

    def __len__(self) -> int:
        return len(self.landmarks)

    def points(self) -> List[Point2]:
        return points_from_array(self.landmarks, self.landmark_ids)


@dataclass(frozen=True, eq=False)
class Observation:
    """
    Landmarks seen at one time step, in the observation frame.

    The observation frame is the robot pose followed by the applied random
    rotation: ``frame.apply(points)`` gives map coordinates (exact for sigma 0).
    """
    time_index: int
    true_pose: Se2Transform
    points: np.ndarray
    landmark_ids: np.ndarray
    applied_rotation: float

    @property
    def frame(self) -> Se2Transform:
        return self.true_pose.compose(Se2Transform(self.applied_rotation))

    def as_points(self) -> List[Point2]:
        return points_from_array(self.points, self.landmark_ids)

    def __len__(self) -> int:
        return len(self.points)


def _rng(*entropy: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(list(entropy)))


# =============================================================================
# Public API
# =============================================================================

def bridson_poisson_disc(
    extent: Tuple[float, float],
    r_min: float,
    seed,
    k: int = 30,
) -> np.ndarray:
    """
    Maximal Poisson-disc sample of a rectangle [0, w) x [0, h).

    Parameters
    ----------
    extent : (w, h)
        Rectangle size in meters; both sides must exceed 2 * r_min.
    r_min : float
        Minimum pairwise distance.
    seed : int or sequence of int
        Generator seed.
    k : int
        Candidates tried around an active sample before it is retired.

    Returns
    -------
    (n, 2) ndarray in generation order.
    """
    width, height = extent
    if width <= 2 * r_min or height <= 2 * r_min:
        raise SceneDoesNotFit(f"Extent {extent} must exceed 2 * r_min = {2 * r_min}")

    rng = np.random.default_rng(seed)
    cell = r_min / math.sqrt(2.0)
    nx, ny = int(math.ceil(width / cell)), int(math.ceil(height / cell))
    grid = -np.ones((nx, ny), dtype=int)
    samples: List[Tuple[float, float]] = []
    r2 = r_min * r_min

    def fits(x: float, y: float) -> bool:
        gx, gy = int(x / cell), int(y / cell)
        for i in range(max(gx - 2, 0), min(gx + 3, nx)):
            for j in range(max(gy - 2, 0), min(gy + 3, ny)):
                idx = grid[i, j]
                if idx >= 0:
                    sx, sy = samples[idx]
                    if (sx - x) ** 2 + (sy - y) ** 2 < r2:
                        return False
        return True

    def add(x: float, y: float) -> None:
        grid[int(x / cell), int(y / cell)] = len(samples)
        samples.append((x, y))

    add(float(rng.uniform(0, width)), float(rng.uniform(0, height)))
    active = [0]
    while active:
        slot = int(rng.integers(len(active)))
        px, py = samples[active[slot]]
        # uniform by area on the annulus [r, 2r]
        radii = r_min * np.sqrt(3.0 * rng.random(k) + 1.0)
        angles = 2.0 * math.pi * rng.random(k)
        for radius, angle in zip(radii, angles):
            x = px + radius * math.cos(angle)
            y = py + radius * math.sin(angle)
            if 0.0 <= x < width and 0.0 <= y < height and fits(x, y):
                add(x, y)
                active.append(len(samples) - 1)
                break
        else:
            active[slot] = active[-1]
            active.pop()

    return np.array(samples)


def generate_forest(cfg: SimConfig) -> ForestMap:
    """Bridson sample plus per-tree Gaussian jitter; the jittered map is kept as-is."""
    base = bridson_poisson_disc(cfg.extent, cfg.r_min, [cfg.seed, _STREAM_BRIDSON], cfg.bridson_k)
    jitter = _rng(cfg.seed, _STREAM_JITTER).normal(0.0, cfg.jitter_sigma, size=base.shape)
    forest = ForestMap(base + jitter, np.arange(len(base)), tuple(cfg.extent))
    logger.info("Forest: %d trees on %.0f x %.0f m, mean NN distance %.2f m",
                len(forest), cfg.extent[0], cfg.extent[1], mean_nearest_neighbour_distance(forest.landmarks))
    return forest


def mean_nearest_neighbour_distance(points: np.ndarray) -> float:
    if len(points) < 2:
        return float("nan")
    distances, _ = cKDTree(points).query(points, k=2)
    return float(distances[:, 1].mean())


def circular_trajectory(cfg: SimConfig) -> List[Se2Transform]:
    """
    laps x steps_per_lap poses on a circle, heading along the tangent (CCW).

    Raises
    ------
    SceneDoesNotFit
        If the circle plus the sensor radius does not fit in the extent.
    """
    cx, cy = cfg.center
    reach = cfg.circle_radius + cfg.sensor_radius
    if cx - reach < 0 or cy - reach < 0 or cx + reach > cfg.extent[0] or cy + reach > cfg.extent[1]:
        raise SceneDoesNotFit(
            f"Circle of radius {cfg.circle_radius} at {cfg.center} with sensor margin "
            f"{cfg.sensor_radius} does not fit in {cfg.extent}"
        )

    poses = []
    for _ in range(cfg.laps):
        for step in range(cfg.steps_per_lap):
            angle = 2.0 * math.pi * step / cfg.steps_per_lap
            poses.append(Se2Transform(
                angle + math.pi / 2.0,
                cx + cfg.circle_radius * math.cos(angle),
                cy + cfg.circle_radius * math.sin(angle),
            ))
    return poses


def observe(forest: ForestMap, pose: Se2Transform, cfg: SimConfig, seed, time_index: int = 0) -> Observation:
    """
    One noisy observation from ``pose``.

    Landmarks within sensor_radius are each kept with probability omega,
    expressed in the observation frame (pose then a uniform random rotation
    from rotation_range) and perturbed with N(0, sigma^2) per axis.
    """
    rng = np.random.default_rng(seed)
    in_range = np.array(sorted(forest.tree.query_ball_point([pose.tx, pose.ty], cfg.sensor_radius)), dtype=int)
    kept = in_range[rng.random(len(in_range)) < cfg.omega]
    rotation = float(rng.uniform(*cfg.rotation_range))

    frame = pose.compose(Se2Transform(rotation))
    local = frame.inverse().apply(forest.landmarks[kept]) if len(kept) else np.zeros((0, 2))
    noise = rng.normal(0.0, cfg.sigma, size=local.shape)
    return Observation(
        time_index=time_index,
        true_pose=pose,
        points=local + noise,
        landmark_ids=forest.landmark_ids[kept],
        applied_rotation=rotation,
    )


def simulate_observations(forest: ForestMap, cfg: SimConfig) -> List[Observation]:
    """Observations along the circular trajectory, one seed stream per time index."""
    observations = [
        observe(forest, pose, cfg, [cfg.seed, _STREAM_OBSERVE, k], time_index=k)
        for k, pose in enumerate(circular_trajectory(cfg))
    ]
    stats = observation_size_stats(observations)
    logger.info("Simulated %d observations (omega=%.2f, sigma=%.2f), median size %s",
                len(observations), cfg.omega, cfg.sigma, stats["median"])
    return observations


def simulate(cfg: SimConfig) -> Tuple[ForestMap, List[Observation]]:
    forest = generate_forest(cfg)
    return forest, simulate_observations(forest, cfg)


def observation_size_stats(observations: Sequence[Observation]) -> Dict[str, float]:
    sizes = np.array([len(o) for o in observations])
    if sizes.size == 0:
        return {"count": 0, "median": 0.0, "mean": 0.0, "min": 0, "max": 0}
    return {
        "count": int(sizes.size),
        "median": float(np.median(sizes)),
        "mean": round(float(sizes.mean()), 2),
        "min": int(sizes.min()),
        "max": int(sizes.max()),
    }


# =============================================================================
# Smoke test
# =============================================================================

if __name__ == "__main__":
    cfg = SimConfig.desk_scale(sigma=0.1, omega=0.9)
    forest, observations = simulate(cfg)
    print("=== Desk-scale forest ===")
    print(f"trees: {len(forest)}  mean NN: {mean_nearest_neighbour_distance(forest.landmarks):.2f} m")
    print(f"observations: {len(observations)}  sizes: {observation_size_stats(observations)}")
    first, revisit = observations[0], observations[cfg.steps_per_lap]
    print(f"revisit shares {len(set(first.landmark_ids) & set(revisit.landmark_ids))} landmarks")
