"""
Observation file formats
------------------------
Scope:
- forest.csv         landmark_id,x,y
- observations.csv   obs_id,landmark_id,x,y   (landmark_id = -1 when unknown)
- poses.csv          obs_id,theta_rad,x,y,pose_theta_rad,applied_rotation_rad
- transforms.csv     i,j,theta_rad,tx,ty,n_inliers,n_corrs
- merged_map.csv     landmark_id,x,y,n_sources
- manifest.json / merge_report.json

Notes:
- Floats are written with Python's shortest round-trip repr and read back
  with pandas' round_trip parser, so a write/read cycle is exact
- theta_rad/x/y in poses.csv describe the observation frame (robot pose
  followed by the applied random rotation)
"""

from __future__ import annotations

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Sequence, Tuple

import numpy as np
import pandas as pd

from registration import Se2Transform
from simulator import ForestMap, Observation

logger = logging.getLogger(__name__)

UNKNOWN_LANDMARK = -1

FOREST_COLUMNS = ["landmark_id", "x", "y"]
OBSERVATION_COLUMNS = ["obs_id", "landmark_id", "x", "y"]
POSE_COLUMNS = ["obs_id", "theta_rad", "x", "y", "pose_theta_rad", "applied_rotation_rad"]
TRANSFORM_COLUMNS = ["i", "j", "theta_rad", "tx", "ty", "n_inliers", "n_corrs"]


def _read(path: Path, columns: Sequence[str]) -> pd.DataFrame:
    df = pd.read_csv(path, float_precision="round_trip")
    missing = [c for c in columns if c not in df.columns]
    if missing:
        raise KeyError(f"{path}: missing columns {missing}")
    return df


def _write(df: pd.DataFrame, path: Path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=False, lineterminator="\n")
    logger.debug("Wrote %d rows to %s", len(df), path)


# =============================================================================
# Forest
# =============================================================================

def write_forest(path: Path, forest: ForestMap) -> int:
    _write(pd.DataFrame({
        "landmark_id": forest.landmark_ids.astype(int),
        "x": forest.landmarks[:, 0],
        "y": forest.landmarks[:, 1],
    }), path)
    return len(forest)


def read_forest(path: Path, extent: Tuple[float, float]) -> ForestMap:
    df = _read(path, FOREST_COLUMNS)
    return ForestMap(df[["x", "y"]].to_numpy(dtype=float), df["landmark_id"].to_numpy(dtype=int), tuple(extent))


# =============================================================================
# Observations and poses
# =============================================================================

def write_observations(path: Path, observations: Sequence[Observation]) -> int:
    frames = [
        pd.DataFrame({
            "obs_id": np.full(len(o), o.time_index, dtype=int),
            "landmark_id": o.landmark_ids.astype(int),
            "x": o.points[:, 0],
            "y": o.points[:, 1],
        })
        for o in observations
    ]
    df = pd.concat(frames, ignore_index=True) if frames else pd.DataFrame(columns=OBSERVATION_COLUMNS)
    _write(df[OBSERVATION_COLUMNS], path)
    return len(df)


def write_poses(path: Path, observations: Sequence[Observation]) -> int:
    rows = []
    for o in observations:
        frame = o.frame
        rows.append({
            "obs_id": o.time_index,
            "theta_rad": frame.theta,
            "x": frame.tx,
            "y": frame.ty,
            "pose_theta_rad": o.true_pose.theta,
            "applied_rotation_rad": o.applied_rotation,
        })
    _write(pd.DataFrame(rows, columns=POSE_COLUMNS), path)
    return len(rows)


def read_observation_points(path: Path) -> Dict[int, Tuple[np.ndarray, np.ndarray]]:
    """obs_id -> (points (n, 2), landmark_ids (n,)) in file order."""
    df = _read(path, OBSERVATION_COLUMNS)
    return {
        int(obs_id): (group[["x", "y"]].to_numpy(dtype=float), group["landmark_id"].to_numpy(dtype=int))
        for obs_id, group in df.groupby("obs_id", sort=True)
    }


def read_observations(observations_path: Path, poses_path: Path) -> List[Observation]:
    """
    Rebuild Observation objects from observations.csv + poses.csv.

    Poses without points become empty observations.
    """
    points = read_observation_points(observations_path)
    poses = _read(poses_path, POSE_COLUMNS)
    observations = []
    for row in poses.itertuples(index=False):
        xy, ids = points.get(int(row.obs_id), (np.zeros((0, 2)), np.zeros(0, dtype=int)))
        # the stored frame position equals the pose position
        pose = Se2Transform(row.pose_theta_rad, row.x, row.y)
        observations.append(Observation(int(row.obs_id), pose, xy, ids, float(row.applied_rotation_rad)))
    return observations


# =============================================================================
# Results
# =============================================================================

def write_transforms(path: Path, rows: Sequence[Dict[str, Any]]) -> int:
    _write(pd.DataFrame(list(rows), columns=TRANSFORM_COLUMNS), path)
    return len(rows)


def read_transforms(path: Path) -> pd.DataFrame:
    return _read(path, TRANSFORM_COLUMNS)


def write_merged_map(path: Path, landmarks: np.ndarray, provenance: Sequence[Sequence]) -> int:
    _write(pd.DataFrame({
        "landmark_id": np.arange(len(landmarks)),
        "x": landmarks[:, 0] if len(landmarks) else [],
        "y": landmarks[:, 1] if len(landmarks) else [],
        "n_sources": [len(p) for p in provenance],
    }), path)
    return len(landmarks)


def write_table(path: Path, df: pd.DataFrame, index: bool = False) -> int:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    df.to_csv(path, index=index, lineterminator="\n")
    return len(df)


def write_json(path: Path, payload: Dict[str, Any]) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")


def read_json(path: Path) -> Dict[str, Any]:
    return json.loads(Path(path).read_text())


# =============================================================================
# Smoke test
# =============================================================================

if __name__ == "__main__":
    import tempfile

    from simulator import SimConfig, simulate

    cfg = SimConfig.desk_scale(laps=1, steps_per_lap=4, sigma=0.1)
    forest, observations = simulate(cfg)
    with tempfile.TemporaryDirectory() as tmp:
        out = Path(tmp)
        write_forest(out / "forest.csv", forest)
        write_observations(out / "observations.csv", observations)
        write_poses(out / "poses.csv", observations)
        back = read_observations(out / "observations.csv", out / "poses.csv")
        same = all(np.array_equal(a.points, b.points) for a, b in zip(observations, back))
        print("=== Round trip ===")
        print(f"observations: {len(back)}  identical points: {same}")
