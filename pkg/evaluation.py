"""
Evaluation module
-----------------
Scope:
- Loop-closure detection experiment: all observation pairs of a simulated
  run, TP/FP/FN/TN labels, precision / recall / F1 per min-correspondence
  threshold, F1 grid over (omega, sigma)
- tau / gamma parameter sweeps
- Map merging: sub-map construction, chronological fold with DBSCAN
  de-duplication, alignment and transform errors
- Timing benchmark of the descriptor and matching stages

Design:
- RANSAC runs once per pair; each min_corrs threshold gates the stored
  result on the number of point correspondences
- Pairs i < j are evaluated once; H(i, j) maps observation j into i
- Grid cells (and seeds) are independent and run in a process pool
- Summaries are pandas DataFrames or plain dicts with rounded values
"""

from __future__ import annotations

import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, field_validator
from sklearn.cluster import DBSCAN

from descriptor import describe_all
from geometry import delaunay_triangulate, points_from_array
from matching import (
    MatchConfig,
    ObservationFeatures,
    build_features,
    comparison_count,
    estimate_transform,
    match_observations,
)
from registration import RansacConfig, Se2Transform, wrap_angle
from simulator import Observation, SimConfig, simulate
from urquhart import build_urquhart

logger = logging.getLogger(__name__)

TP_POSITION_ERROR_M2 = 10.0
TP_ROTATION_ERROR_DEG = 20.0


# =============================================================================
# Configuration
# =============================================================================

class EvalConfig(BaseModel):
    """Experiment grid, sweeps and map-merging parameters."""
    model_config = ConfigDict(extra="forbid")

    omegas: List[float] = [0.8, 0.9, 0.95, 1.0]
    sigmas: List[float] = [0.0, 0.1, 0.2, 0.3, 0.4]
    min_corrs: List[int] = [4, 8, 16, 32, 64]
    n_seeds: int = Field(5, ge=1, description="Repetitions per (omega, sigma) cell")
    tau_values: List[float] = [1.0, 2.0, 5.0, 10.0, 20.0]
    gamma_values: List[Optional[int]] = [10, 20, None]
    sweep_cells: List[Tuple[float, float]] = [(1.0, 0.1), (0.9, 0.2)]
    merge_eps: float = Field(0.5, gt=0)
    merge_min_pts: int = Field(1, ge=1)
    merge_min_corrs: int = Field(4, ge=2)
    window: int = Field(6, ge=1, description="Observations per sub-map")
    overlap: float = Field(0.5, ge=0, lt=1)
    bench_observations: int = Field(30, ge=1)

    @field_validator("min_corrs")
    @classmethod
    def _positive_sorted(cls, v: List[int]) -> List[int]:
        if not v or min(v) < 2:
            raise ValueError("min_corrs needs values >= 2")
        return sorted(v)


# =============================================================================
# Data structures
# =============================================================================

class Label(str, Enum):
    TP = "TP"
    FP = "FP"
    FN = "FN"
    TN = "TN"


@dataclass(frozen=True)
class MatchDecision:
    obs_i: int
    obs_j: int
    estimated: Optional[Se2Transform]
    n_point_corrs: int
    label: Optional[Label] = None

    def __post_init__(self) -> None:
        if self.obs_i == self.obs_j:
            raise ValueError(f"Trivial pair ({self.obs_i}, {self.obs_j}) is excluded")


@dataclass(frozen=True)
class PairOutcome:
    """Matcher + RANSAC result for one pair, before thresholding."""
    obs_i: int
    obs_j: int
    n_point_corrs: int
    estimated: Optional[Se2Transform]
    n_inliers: int


@dataclass(frozen=True)
class PrPoint:
    min_corrs: int
    precision: float
    recall: float
    f1: float
    tp: int = 0
    fp: int = 0
    fn: int = 0
    tn: int = 0


@dataclass
class ExperimentResult:
    runs: pd.DataFrame
    pr_curves: pd.DataFrame
    f1_grid: pd.DataFrame
    f1_grid_std: pd.DataFrame
    f1_grid_min_corrs: pd.DataFrame


@dataclass(frozen=True, eq=False)
class SubMap:
    index: int
    points: np.ndarray
    landmark_ids: np.ndarray
    frame: Se2Transform


class MergeFailure(RuntimeError):
    def __init__(self, index: int, reason: str = "no valid transform"):
        super().__init__(f"Sub-map {index}: {reason}")
        self.index = index


@dataclass
class MergedMap:
    """
    Accumulated map in the frame of sub-map 0.

    ``transforms[k]`` maps sub-map k into that frame (None when the merge
    failed); ``provenance[m]`` lists the (sub-map, local index) sources of
    merged landmark m.
    """
    landmarks: np.ndarray
    transforms: List[Optional[Se2Transform]]
    provenance: List[List[Tuple[int, int]]]
    failures: List[int] = field(default_factory=list)
    inliers: List[int] = field(default_factory=list)
    correspondences: List[int] = field(default_factory=list)


# =============================================================================
# Loop-closure classification
# =============================================================================

def transform_error(estimated: Se2Transform, truth: Se2Transform) -> Tuple[float, float]:
    """(translation error in m, absolute rotation error in degrees)."""
    dt = math.hypot(estimated.tx - truth.tx, estimated.ty - truth.ty)
    dtheta = abs(wrap_angle(estimated.theta - truth.theta))
    return dt, math.degrees(dtheta)


def classify_match(
    decision: MatchDecision,
    gt_frame_i: Se2Transform,
    gt_frame_j: Se2Transform,
    sensor_radius: float,
) -> Label:
    """
    Label one decision against ground truth.

    The frames are the observation frames (pose plus applied rotation). With
    a transform: TP when the squared position error is below 10 m^2 and the
    rotation error below 20 degrees, FP otherwise. Without: FN when the poses
    are closer than the sensor radius, TN otherwise.
    """
    if decision.estimated is not None:
        truth = gt_frame_i.inverse().compose(gt_frame_j)
        dt, dtheta = transform_error(decision.estimated, truth)
        if dt * dt < TP_POSITION_ERROR_M2 and dtheta < TP_ROTATION_ERROR_DEG:
            return Label.TP
        return Label.FP
    distance = math.hypot(gt_frame_i.tx - gt_frame_j.tx, gt_frame_i.ty - gt_frame_j.ty)
    return Label.FN if distance < sensor_radius else Label.TN


def pr_point(labels: Sequence[Label], min_corrs: int) -> PrPoint:
    counts = {label: 0 for label in Label}
    for label in labels:
        counts[label] += 1
    tp, fp, fn, tn = counts[Label.TP], counts[Label.FP], counts[Label.FN], counts[Label.TN]
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return PrPoint(min_corrs, precision, recall, f1, tp, fp, fn, tn)


def decide(outcome: PairOutcome, min_corrs: int) -> MatchDecision:
    accepted = outcome.estimated if outcome.n_point_corrs >= min_corrs else None
    return MatchDecision(outcome.obs_i, outcome.obs_j, accepted, outcome.n_point_corrs)


def label_decisions(
    outcomes: Sequence[PairOutcome],
    frames: Sequence[Se2Transform],
    min_corrs: int,
    sensor_radius: float,
) -> List[MatchDecision]:
    """Gate every outcome at ``min_corrs`` and attach its ground-truth label."""
    decisions = []
    for outcome in outcomes:
        decision = decide(outcome, min_corrs)
        label = classify_match(decision, frames[decision.obs_i], frames[decision.obs_j], sensor_radius)
        decisions.append(replace(decision, label=label))
    return decisions


# =============================================================================
# Loop-closure experiment
# =============================================================================

def evaluate_pairs(
    features: Sequence[ObservationFeatures],
    match_cfg: MatchConfig,
    ransac_cfg: RansacConfig,
    min_correspondences: int = 2,
) -> List[PairOutcome]:
    """Matcher + RANSAC on every pair i < j."""
    outcomes = []
    for i in range(len(features)):
        for j in range(i + 1, len(features)):
            corrs, result = estimate_transform(features[i], features[j], match_cfg, ransac_cfg, min_correspondences)
            outcomes.append(PairOutcome(
                obs_i=i,
                obs_j=j,
                n_point_corrs=len(corrs.point_pairs),
                estimated=result.transform if result else None,
                n_inliers=len(result.inliers) if result else 0,
            ))
    return outcomes


def run_single(
    sim_cfg: SimConfig,
    match_cfg: MatchConfig,
    ransac_cfg: RansacConfig,
    min_corrs: Sequence[int],
) -> List[PrPoint]:
    """One simulated run: PR point per min_corrs threshold."""
    _, observations = simulate(sim_cfg)
    features = [build_features(o.as_points(), match_cfg, o.time_index) for o in observations]
    outcomes = evaluate_pairs(features, match_cfg, ransac_cfg, min(min_corrs))
    frames = [o.frame for o in observations]

    points = []
    for threshold in min_corrs:
        decisions = label_decisions(outcomes, frames, threshold, sim_cfg.sensor_radius)
        points.append(pr_point([d.label for d in decisions], threshold))
    return points


def _run_cell(task: Tuple[SimConfig, MatchConfig, RansacConfig, List[int], int]) -> List[Dict]:
    sim_cfg, match_cfg, ransac_cfg, min_corrs, rep = task
    rows = []
    for p in run_single(sim_cfg, match_cfg, ransac_cfg, min_corrs):
        rows.append({
            "omega": sim_cfg.omega, "sigma": sim_cfg.sigma, "seed": rep, "min_corrs": p.min_corrs,
            "tp": p.tp, "fp": p.fp, "fn": p.fn, "tn": p.tn,
            "precision": p.precision, "recall": p.recall, "f1": p.f1,
        })
    logger.info("Cell omega=%.2f sigma=%.2f seed=%d: best F1 %.3f",
                sim_cfg.omega, sim_cfg.sigma, rep, max(r["f1"] for r in rows))
    return rows


def _map_tasks(tasks: List, jobs: int) -> List[List[Dict]]:
    if jobs <= 1 or len(tasks) <= 1:
        return [_run_cell(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_cell, tasks))


def summarise_runs(runs: pd.DataFrame) -> ExperimentResult:
    """Mean/std PR curves per (omega, sigma, min_corrs) and best-F1 grids (rows sigma, cols omega)."""
    keys = ["omega", "sigma", "min_corrs"]
    grouped = runs.groupby(keys)[["precision", "recall", "f1"]]
    pr = grouped.mean().join(grouped.std(ddof=0).add_suffix("_std")).reset_index()

    best = pr.loc[pr.groupby(["omega", "sigma"])["f1"].idxmax()]
    f1_grid = best.pivot(index="sigma", columns="omega", values="f1")
    f1_std = best.pivot(index="sigma", columns="omega", values="f1_std")
    f1_mc = best.pivot(index="sigma", columns="omega", values="min_corrs")
    return ExperimentResult(runs, pr, f1_grid, f1_std, f1_mc)


def run_loop_closure_experiment(
    sim_cfg: SimConfig,
    match_cfg: MatchConfig,
    ransac_cfg: RansacConfig,
    eval_cfg: EvalConfig,
    jobs: int = 1,
    cells: Optional[Sequence[Tuple[float, float]]] = None,
) -> ExperimentResult:
    """
    PR / F1 over the (omega, sigma) grid.

    Parameters
    ----------
    sim_cfg, match_cfg, ransac_cfg : configs
        Base configs; omega, sigma and the seeds are overridden per task.
    eval_cfg : EvalConfig
        Grid axes, min_corrs thresholds and repetitions per cell.
    jobs : int
        Worker processes.
    cells : optional list of (omega, sigma)
        Restrict the run to these cells instead of the full grid.

    Returns
    -------
    ExperimentResult
        Per-run rows, mean/std PR curves and the best-F1 grid.
    """
    if cells is None:
        cells = [(omega, sigma) for sigma in eval_cfg.sigmas for omega in eval_cfg.omegas]
    tasks = []
    for omega, sigma in cells:
        for rep in range(eval_cfg.n_seeds):
            tasks.append((
                sim_cfg.model_copy(update={"omega": omega, "sigma": sigma, "seed": sim_cfg.seed + rep}),
                match_cfg.model_copy(update={"seed": match_cfg.seed + rep}),
                ransac_cfg.model_copy(update={"seed": ransac_cfg.seed + rep}),
                list(eval_cfg.min_corrs),
                rep,
            ))
    logger.info("Loop-closure experiment: %d cells x %d seeds on %d workers", len(cells), eval_cfg.n_seeds, jobs)
    rows = [row for chunk in _map_tasks(tasks, jobs) for row in chunk]
    return summarise_runs(pd.DataFrame(rows))


def sweep_parameter(
    name: str,
    values: Sequence,
    sim_cfg: SimConfig,
    match_cfg: MatchConfig,
    ransac_cfg: RansacConfig,
    eval_cfg: EvalConfig,
    jobs: int = 1,
) -> pd.DataFrame:
    """
    Re-run the experiment on eval_cfg.sweep_cells for each value of a
    MatchConfig field (``tau`` or ``gamma``).

    Precision and recall are averaged over the cells per min_corrs; the row
    for each value reports the best F1 of the averaged curve.
    """
    if name not in ("tau", "gamma"):
        raise KeyError(f"Unknown sweep parameter: {name}")
    rows = []
    for value in values:
        cfg = MatchConfig.model_validate({**match_cfg.model_dump(), name: value})
        result = run_loop_closure_experiment(sim_cfg, cfg, ransac_cfg, eval_cfg, jobs, eval_cfg.sweep_cells)
        curve = result.pr_curves.groupby("min_corrs")[["precision", "recall"]].mean()
        p, r = curve["precision"], curve["recall"]
        f1 = (2 * p * r / (p + r)).fillna(0.0)
        rows.append({
            name: value,
            "best_f1": float(f1.max()),
            "best_min_corrs": int(f1.idxmax()),
            "precision": float(p[f1.idxmax()]),
            "recall": float(r[f1.idxmax()]),
        })
        logger.info("Sweep %s=%s: best F1 %.3f", name, value, rows[-1]["best_f1"])
    return pd.DataFrame(rows)


# =============================================================================
# Map merging
# =============================================================================

def dbscan(points: np.ndarray, eps: float, min_pts: int = 1) -> np.ndarray:
    """DBSCAN cluster labels; with min_pts=1 every point is in a cluster."""
    if eps <= 0:
        raise ValueError(f"eps must be positive, got {eps}")
    points = np.asarray(points, dtype=float).reshape(-1, 2)
    if len(points) == 0:
        return np.zeros(0, dtype=int)
    return DBSCAN(eps=eps, min_samples=min_pts).fit(points).labels_


def _cluster_until_stable(
    points: np.ndarray,
    provenance: List[List[Tuple[int, int]]],
    eps: float,
    min_pts: int,
) -> Tuple[np.ndarray, List[List[Tuple[int, int]]]]:
    """Replace clusters by their centroids until no two landmarks are within eps."""
    while len(points) > 1:
        labels = dbscan(points, eps, min_pts)
        # noise points (min_pts > 1) stay as their own landmark
        next_label = labels.max() + 1
        labels = labels.copy()
        for k in np.nonzero(labels < 0)[0]:
            labels[k] = next_label
            next_label += 1
        clusters = np.unique(labels)
        if len(clusters) == len(points):
            break
        points = np.array([points[labels == c].mean(axis=0) for c in clusters])
        provenance = [
            sorted(src for k in np.nonzero(labels == c)[0] for src in provenance[k]) for c in clusters
        ]
    return points, provenance


def build_submaps(
    observations: Sequence[Observation],
    window: int,
    overlap: float,
    eps: float = 0.5,
) -> List[SubMap]:
    """
    Sub-maps from consecutive observations.

    Each sub-map is expressed in the frame of its first observation and spans
    ``window`` observations; consecutive windows share round(window * overlap)
    of them. Views of a known landmark (id >= 0) are averaged per id. Points
    with unknown id (-1) are kept and repeated sightings are merged by DBSCAN
    with radius ``eps`` in the sub-map frame; they keep id -1.
    """
    if window < 1 or not 0 <= overlap < 1:
        raise ValueError(f"Invalid window {window} / overlap {overlap}")
    if not observations:
        return []
    stride = max(1, int(round(window * (1.0 - overlap))))
    starts = list(range(0, max(len(observations) - window, 0) + 1, stride))

    submaps = []
    for index, start in enumerate(starts):
        chunk = observations[start:start + window]
        frame = chunk[0].frame
        to_local = frame.inverse()
        views = []
        for obs in chunk:
            local = to_local.compose(obs.frame).apply(obs.points).reshape(-1, 2)
            views.append(pd.DataFrame({"landmark_id": obs.landmark_ids, "x": local[:, 0], "y": local[:, 1]}))
        views = pd.concat(views, ignore_index=True)

        known = views[views["landmark_id"] >= 0]
        mean = known.groupby("landmark_id", sort=True)[["x", "y"]].mean()
        unknown = views.loc[views["landmark_id"] < 0, ["x", "y"]].to_numpy()
        if len(unknown):
            unknown, _ = _cluster_until_stable(unknown, [[(0, k)] for k in range(len(unknown))], eps, 1)

        points = np.vstack([mean.to_numpy(), unknown.reshape(-1, 2)])
        ids = np.concatenate([mean.index.to_numpy(dtype=int), np.full(len(unknown), -1, dtype=int)])
        submaps.append(SubMap(index, points, ids, frame))
    return submaps


def merge_submaps(
    submaps: Sequence[np.ndarray],
    match_cfg: MatchConfig,
    ransac_cfg: RansacConfig,
    eps: float = 0.5,
    min_pts: int = 1,
    min_correspondences: int = 4,
) -> MergedMap:
    """
    Fold sub-maps chronologically into one map.

    For each next sub-map the features of the accumulated map are rebuilt,
    the sub-map is matched and registered onto it, transformed in and
    de-duplicated with DBSCAN. Sub-maps that fail to register are recorded
    and skipped.
    """
    if len(submaps) < 1:
        raise ValueError("Need at least one sub-map")

    first = np.asarray(submaps[0], dtype=float).reshape(-1, 2)
    acc, provenance = _cluster_until_stable(first, [[(0, k)] for k in range(len(first))], eps, min_pts)
    merged = MergedMap(acc, [Se2Transform.identity()], provenance,
                       inliers=[len(first)], correspondences=[len(first)])

    for k in range(1, len(submaps)):
        sub = np.asarray(submaps[k], dtype=float).reshape(-1, 2)
        fa = build_features(points_from_array(merged.landmarks), match_cfg, obs_index=2 * k)
        fb = build_features(points_from_array(sub), match_cfg, obs_index=2 * k + 1)
        corrs, result = estimate_transform(fa, fb, match_cfg, ransac_cfg, min_correspondences)
        merged.correspondences.append(len(corrs.point_pairs))
        if result is None:
            failure = MergeFailure(k)
            logger.warning("%s", failure)
            merged.failures.append(k)
            merged.transforms.append(None)
            merged.inliers.append(0)
            continue

        stacked = np.vstack([merged.landmarks, result.transform.apply(sub)])
        sources = merged.provenance + [[(k, m)] for m in range(len(sub))]
        merged.landmarks, merged.provenance = _cluster_until_stable(stacked, sources, eps, min_pts)
        merged.transforms.append(result.transform)
        merged.inliers.append(len(result.inliers))
        logger.info("Merged sub-map %d: %d inliers, map now %d landmarks",
                    k, len(result.inliers), len(merged.landmarks))
    return merged


def alignment_error(source: np.ndarray, target: np.ndarray, transform: Se2Transform) -> Tuple[float, float, float]:
    """(mean, min, max) distance between paired landmarks after moving source by transform."""
    source = np.asarray(source, dtype=float).reshape(-1, 2)
    target = np.asarray(target, dtype=float).reshape(-1, 2)
    if len(source) == 0 or len(source) != len(target):
        raise ValueError(f"Need at least one annotated pair, got {len(source)} / {len(target)}")
    distances = np.linalg.norm(transform.apply(source) - target, axis=1)
    return float(distances.mean()), float(distances.min()), float(distances.max())


def merge_report(submaps: Sequence[SubMap], merged: MergedMap) -> Dict:
    """
    Ground-truth errors of a merge.

    Per merged sub-map: transform error against the true relative frame, and
    the post-alignment distance between landmarks shared with the previous
    successfully merged sub-map. Also the final map's distance to the true
    landmark positions.
    """
    steps = []
    previous = 0
    for k in range(1, len(submaps)):
        estimated = merged.transforms[k]
        if estimated is None:
            continue
        truth = submaps[0].frame.inverse().compose(submaps[k].frame)
        dt, dtheta = transform_error(estimated, truth)
        step = {"submap": k, "translation_error_m": round(dt, 4), "rotation_error_deg": round(dtheta, 4),
                "inliers": merged.inliers[k]}

        prev = submaps[previous]
        common, ik, ip = np.intersect1d(submaps[k].landmark_ids, prev.landmark_ids, return_indices=True)
        known = common >= 0
        common, ik, ip = common[known], ik[known], ip[known]
        if len(common):
            relative = merged.transforms[previous].inverse().compose(estimated)
            mean, lo, hi = alignment_error(submaps[k].points[ik], prev.points[ip], relative)
            step.update({"duplicates": int(len(common)), "dup_mean_m": round(mean, 4),
                         "dup_min_m": round(lo, 4), "dup_max_m": round(hi, 4)})
        steps.append(step)
        previous = k

    duplicate_means = [s["dup_mean_m"] for s in steps if "dup_mean_m" in s]
    return {
        "n_submaps": len(submaps),
        "failures": list(merged.failures),
        "n_landmarks": int(len(merged.landmarks)),
        "merges": steps,
        "mean_duplicate_distance_m": round(float(np.mean(duplicate_means)), 4) if duplicate_means else None,
    }


def ground_truth_error(submaps: Sequence[SubMap], merged: MergedMap, forest_landmarks: np.ndarray) -> Dict[str, float]:
    """Distance from each merged landmark to the mean true position of its sources (sub-map 0 frame)."""
    truth = submaps[0].frame.inverse().apply(forest_landmarks)
    errors = []
    for position, sources in zip(merged.landmarks, merged.provenance):
        ids = [submaps[k].landmark_ids[m] for k, m in sources if submaps[k].landmark_ids[m] >= 0]
        if not ids:
            continue
        errors.append(np.linalg.norm(position - truth[ids].mean(axis=0)))
    if not errors:
        return {"mean_m": None, "max_m": None, "within_eps": None}
    errors = np.array(errors)
    return {"mean_m": round(float(errors.mean()), 4), "max_m": round(float(errors.max()), 4),
            "within_eps": round(float(np.mean(errors <= 0.5)), 4)}


def run_merge_experiment(
    sim_cfg: SimConfig,
    match_cfg: MatchConfig,
    ransac_cfg: RansacConfig,
    eval_cfg: EvalConfig,
) -> Tuple[List[SubMap], MergedMap, Dict]:
    """Simulate one lap, cut it into overlapping sub-maps and merge them."""
    forest, observations = simulate(sim_cfg)
    lap = observations[:sim_cfg.steps_per_lap]
    submaps = build_submaps(lap, eval_cfg.window, eval_cfg.overlap, eval_cfg.merge_eps)
    merged = merge_submaps(
        [s.points for s in submaps], match_cfg, ransac_cfg,
        eps=eval_cfg.merge_eps, min_pts=eval_cfg.merge_min_pts, min_correspondences=eval_cfg.merge_min_corrs,
    )
    report = merge_report(submaps, merged)
    report["ground_truth"] = ground_truth_error(submaps, merged, forest.landmarks)
    return submaps, merged, report


# =============================================================================
# Benchmarks
# =============================================================================

def benchmark_timings(
    observations: Sequence[Observation],
    match_cfg: MatchConfig,
) -> Tuple[pd.DataFrame, Dict]:
    """
    Median per-stage wall time in milliseconds, single process.

    Stages: triangulation, Urquhart tessellation, descriptors (per
    observation), feature build end to end, and matching of consecutive
    observation pairs. Also checks the polygon comparison count of every
    pair against g_i * g_j.
    """
    samples: Dict[str, List[float]] = {k: [] for k in
                                       ("triangulation", "urquhart", "descriptors", "features", "matching")}
    features = []
    for obs in observations:
        points = obs.as_points()
        t0 = time.perf_counter()
        tri = delaunay_triangulate(points)
        t1 = time.perf_counter()
        _, hierarchy = build_urquhart(tri)
        t2 = time.perf_counter()
        describe_all(hierarchy.h2, points, match_cfg.step)
        describe_all(hierarchy.h1, points, match_cfg.step)
        t3 = time.perf_counter()
        feats = build_features(points, match_cfg, obs.time_index)
        t4 = time.perf_counter()
        samples["triangulation"].append((t1 - t0) * 1e3)
        samples["urquhart"].append((t2 - t1) * 1e3)
        samples["descriptors"].append((t3 - t2) * 1e3)
        samples["features"].append((t4 - t3) * 1e3)
        features.append(feats)

    within_bound = True
    comparisons = []
    for a, b in zip(features, features[1:]):
        t0 = time.perf_counter()
        match_observations(a, b, match_cfg)
        samples["matching"].append((time.perf_counter() - t0) * 1e3)
        count = comparison_count(a, b)
        comparisons.append(count)
        if match_cfg.gamma is not None and count > match_cfg.gamma ** 2:
            within_bound = False

    table = pd.DataFrame([
        {"stage": stage, "median_ms": float(np.median(v)), "mean_ms": float(np.mean(v)), "count": len(v)}
        for stage, v in samples.items() if v
    ])
    summary = {
        "observations": len(observations),
        "median_size": float(np.median([len(o) for o in observations])) if observations else 0.0,
        "max_comparisons": int(max(comparisons)) if comparisons else 0,
        "comparisons_within_gamma_bound": within_bound,
    }
    return table, summary


# =============================================================================
# Smoke test
# =============================================================================

if __name__ == "__main__":
    logging.basicConfig(level=logging.INFO)
    sim = SimConfig.desk_scale(laps=1, steps_per_lap=12, sigma=0.1)
    points = run_single(sim, MatchConfig(), RansacConfig(), [4, 8, 16])
    print("=== One desk-scale lap, 12 observations ===")
    for p in points:
        print(f"  min_corrs={p.min_corrs:>3}  P={p.precision:.2f}  R={p.recall:.2f}  F1={p.f1:.2f}"
              f"  (TP {p.tp} FP {p.fp} FN {p.fn} TN {p.tn})")
