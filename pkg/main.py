"""
Command-line entry point
------------------------
Subcommands:
- simulate   forest.csv, observations.csv, poses.csv, manifest.json
- match      cascade + RANSAC between two observations of a file
- eval       loop-closure PR / F1 grid (+ optional tau / gamma sweeps)
- merge      sub-map construction and chronological merging
- bench      per-stage timings

Exit codes: 0 success / match, 1 no match, 2 configuration error,
3 input / output error.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field, ValidationError
from rich.console import Console
from rich.logging import RichHandler
from rich.panel import Panel
from rich.table import Table

import observation_io as io
import plots
from evaluation import (
    EvalConfig,
    benchmark_timings,
    build_submaps,
    ground_truth_error,
    merge_report,
    merge_submaps,
    run_loop_closure_experiment,
    sweep_parameter,
)
from geometry import points_from_array
from matching import MatchConfig, build_features, estimate_transform
from registration import RansacConfig
from simulator import SceneDoesNotFit, SimConfig, generate_forest, observation_size_stats, simulate, simulate_observations

logger = logging.getLogger("main")
console = Console()

EXIT_OK = 0
EXIT_NO_MATCH = 1
EXIT_CONFIG = 2
EXIT_IO = 3


class CliError(Exception):
    exit_code = EXIT_IO


class ConfigError(CliError):
    exit_code = EXIT_CONFIG


# =============================================================================
# Configuration
# =============================================================================

class RunConfig(BaseModel):
    """Everything a run needs; a manifest's ``config`` entry loads back into this model."""
    model_config = ConfigDict(extra="forbid")

    sim: SimConfig = Field(default_factory=SimConfig.desk_scale)
    match: MatchConfig = Field(default_factory=MatchConfig)
    ransac: RansacConfig = Field(default_factory=RansacConfig)
    evaluation: EvalConfig = Field(default_factory=EvalConfig)
    seed: int = 0
    jobs: int = Field(1, ge=1)
    observations_path: Optional[Path] = None
    poses_path: Optional[Path] = None
    out_dir: Path = Path("out")

    def seeded(self) -> "RunConfig":
        """Push the global seed into every sub-config."""
        return self.model_copy(update={
            "sim": self.sim.model_copy(update={"seed": self.seed}),
            "match": self.match.model_copy(update={"seed": self.seed}),
            "ransac": self.ransac.model_copy(update={"seed": self.seed}),
        })


def load_config(path: Optional[Path]) -> RunConfig:
    """
    Parse a JSON RunConfig; no path gives the defaults.

    Raises
    ------
    ConfigError
        Unreadable file, JSON syntax error (with line / column) or a value
        that fails validation (with its field path).
    """
    if path is None:
        return RunConfig()
    try:
        text = Path(path).read_text()
    except OSError as e:
        raise ConfigError(f"Cannot read config {path}: {e}") from e
    try:
        return RunConfig.model_validate_json(text)
    except ValidationError as e:
        lines = []
        for err in e.errors():
            where = ".".join(str(p) for p in err["loc"]) or "<root>"
            lines.append(f"{where}: {err['msg']}")
        raise ConfigError(f"Invalid config {path}:\n  " + "\n  ".join(lines)) from e


def apply_overrides(cfg: RunConfig, args: argparse.Namespace) -> RunConfig:
    update: Dict[str, Any] = {}
    if args.seed is not None:
        update["seed"] = args.seed
    if args.jobs is not None:
        if args.jobs < 1:
            raise ConfigError(f"--jobs must be >= 1, got {args.jobs}")
        update["jobs"] = args.jobs
    if args.out is not None:
        update["out_dir"] = Path(args.out)
    if getattr(args, "observations", None) is not None:
        update["observations_path"] = Path(args.observations)
    if getattr(args, "poses", None) is not None:
        update["poses_path"] = Path(args.poses)
    return cfg.model_copy(update=update).seeded()


def configure_logging(verbose: bool) -> None:
    logging.basicConfig(
        level=logging.DEBUG if verbose else logging.INFO,
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(console=Console(stderr=True), rich_tracebacks=True, show_path=False)],
        force=True,
    )


def write_manifest(cfg: RunConfig, command: str, files: Dict[str, int], extra: Optional[Dict] = None) -> None:
    manifest = {
        "command": command,
        "config": cfg.model_dump(mode="json"),
        "seeds": {"global": cfg.seed, "sim": cfg.sim.seed, "match": cfg.match.seed, "ransac": cfg.ransac.seed},
        "files": files,
    }
    if extra:
        manifest.update(extra)
    io.write_json(cfg.out_dir / "manifest.json", manifest)


def _print_rows(title: str, rows: Dict[str, Any]) -> None:
    table = Table(title=title, show_header=False)
    for key, value in rows.items():
        table.add_row(key, str(value))
    console.print(table)


# =============================================================================
# Commands
# =============================================================================

def cmd_simulate(cfg: RunConfig, args: argparse.Namespace) -> int:
    forest, observations = simulate(cfg.sim)
    out = cfg.out_dir
    files = {
        "forest.csv": io.write_forest(out / "forest.csv", forest),
        "observations.csv": io.write_observations(out / "observations.csv", observations),
        "poses.csv": io.write_poses(out / "poses.csv", observations),
    }
    stats = observation_size_stats(observations)
    write_manifest(cfg, "simulate", files, {"observation_sizes": stats})
    _print_rows("simulate", {"trees": len(forest), "observations": len(observations),
                             "median size": stats["median"], "out": str(out)})
    return EXIT_OK


def _load_observations(cfg: RunConfig) -> Dict[int, np.ndarray]:
    if cfg.observations_path is None:
        raise ConfigError("No observations file: pass --observations or set observations_path")
    return {k: xy for k, (xy, _) in io.read_observation_points(cfg.observations_path).items()}


def cmd_match(cfg: RunConfig, args: argparse.Namespace) -> int:
    observations = _load_observations(cfg)
    for obs_id in (args.i, args.j):
        if obs_id not in observations:
            raise ConfigError(f"Observation {obs_id} not in {cfg.observations_path}")

    min_corrs = args.min_corrs if args.min_corrs is not None else min(cfg.evaluation.min_corrs)
    fa = build_features(points_from_array(observations[args.i]), cfg.match, args.i)
    fb = build_features(points_from_array(observations[args.j]), cfg.match, args.j)
    corrs, result = estimate_transform(fa, fb, cfg.match, cfg.ransac, min_corrs)

    report = {
        "polygon pairs": len(corrs.polygon_pairs),
        "triangle pairs": len(corrs.triangle_pairs),
        "point pairs": len(corrs.point_pairs),
    }
    if result is None:
        report["transform"] = "none (no match)"
    else:
        h = result.transform
        report.update({"theta (deg)": f"{math.degrees(h.theta):.4f}", "tx": f"{h.tx:.4f}",
                       "ty": f"{h.ty:.4f}", "inliers": len(result.inliers)})
    _print_rows(f"match {args.i} <- {args.j}", report)

    if args.csv is not None and result is not None:
        h = result.transform
        io.write_transforms(Path(args.csv), [{
            "i": args.i, "j": args.j, "theta_rad": h.theta, "tx": h.tx, "ty": h.ty,
            "n_inliers": len(result.inliers), "n_corrs": len(corrs.point_pairs),
        }])
    return EXIT_OK if result is not None else EXIT_NO_MATCH


def cmd_eval(cfg: RunConfig, args: argparse.Namespace) -> int:
    out = cfg.out_dir
    result = run_loop_closure_experiment(cfg.sim, cfg.match, cfg.ransac, cfg.evaluation, jobs=cfg.jobs)
    files = {
        "runs.csv": io.write_table(out / "runs.csv", result.runs),
        "pr_curves.csv": io.write_table(out / "pr_curves.csv", result.pr_curves),
        "f1_grid.csv": io.write_table(out / "f1_grid.csv", result.f1_grid, index=True),
        "f1_grid_std.csv": io.write_table(out / "f1_grid_std.csv", result.f1_grid_std, index=True),
        "f1_grid_min_corrs.csv": io.write_table(out / "f1_grid_min_corrs.csv", result.f1_grid_min_corrs, index=True),
    }
    plots.plot_pr_curves(result.pr_curves, out / "pr_curves.svg")
    plots.plot_f1_grid(result.f1_grid, out / "f1_grid.svg")

    if args.sweeps:
        for name, values in (("tau", cfg.evaluation.tau_values), ("gamma", cfg.evaluation.gamma_values)):
            sweep = sweep_parameter(name, values, cfg.sim, cfg.match, cfg.ransac, cfg.evaluation, cfg.jobs)
            files[f"sweep_{name}.csv"] = io.write_table(out / f"sweep_{name}.csv", sweep)
            plots.plot_sweep(sweep, name, out / f"sweep_{name}.svg")

    write_manifest(cfg, "eval", files)
    console.print(Panel(result.f1_grid.round(3).to_string(), title="F1 (rows sigma, columns omega)"))
    return EXIT_OK


def cmd_merge(cfg: RunConfig, args: argparse.Namespace) -> int:
    out = cfg.out_dir
    ev = cfg.evaluation
    forest = None
    if cfg.observations_path is not None:
        if cfg.poses_path is None:
            raise ConfigError("Merging an observations file also needs --poses")
        observations = io.read_observations(cfg.observations_path, cfg.poses_path)
    else:
        forest = generate_forest(cfg.sim)
        observations = simulate_observations(forest, cfg.sim)[:cfg.sim.steps_per_lap]

    submaps = build_submaps(observations, ev.window, ev.overlap, ev.merge_eps)
    if len(submaps) < 2:
        raise ConfigError(f"{len(observations)} observations give {len(submaps)} sub-map(s); need at least 2")
    merged = merge_submaps(
        [s.points for s in submaps], cfg.match, cfg.ransac,
        eps=ev.merge_eps, min_pts=ev.merge_min_pts, min_correspondences=ev.merge_min_corrs,
    )
    report = merge_report(submaps, merged)
    if forest is not None:
        report["ground_truth"] = ground_truth_error(submaps, merged, forest.landmarks)

    transform_rows = [
        {"i": 0, "j": k, "theta_rad": h.theta, "tx": h.tx, "ty": h.ty,
         "n_inliers": merged.inliers[k], "n_corrs": merged.correspondences[k]}
        for k, h in enumerate(merged.transforms) if h is not None
    ]
    submap_rows = pd.concat([
        pd.DataFrame({"submap_id": s.index, "landmark_id": s.landmark_ids, "x": s.points[:, 0], "y": s.points[:, 1]})
        for s in submaps
    ], ignore_index=True)
    submap_poses = pd.DataFrame([
        {"submap_id": s.index, "theta_rad": s.frame.theta, "x": s.frame.tx, "y": s.frame.ty} for s in submaps
    ])
    files = {
        "merged_map.csv": io.write_merged_map(out / "merged_map.csv", merged.landmarks, merged.provenance),
        "transforms.csv": io.write_transforms(out / "transforms.csv", transform_rows),
        "submaps.csv": io.write_table(out / "submaps.csv", submap_rows),
        "submap_poses.csv": io.write_table(out / "submap_poses.csv", submap_poses),
    }
    io.write_json(out / "merge_report.json", report)
    truth = submaps[0].frame.inverse().apply(forest.landmarks) if forest is not None else None
    plots.plot_merged_map(merged.landmarks, out / "merged_map.svg", truth=truth)
    write_manifest(cfg, "merge", files)

    _print_rows("merge", {"sub-maps": len(submaps), "failures": report["failures"],
                          "landmarks": report["n_landmarks"],
                          "mean duplicate distance (m)": report["mean_duplicate_distance_m"]})
    if len(merged.failures) == len(submaps) - 1:
        logger.warning("No sub-map could be registered onto sub-map 0")
        return EXIT_NO_MATCH
    return EXIT_OK


def cmd_bench(cfg: RunConfig, args: argparse.Namespace) -> int:
    _, observations = simulate(cfg.sim)
    observations = observations[:cfg.evaluation.bench_observations]
    table, summary = benchmark_timings(observations, cfg.match)
    files = {"timings.csv": io.write_table(cfg.out_dir / "timings.csv", table)}
    write_manifest(cfg, "bench", files, {"benchmark": summary})

    rich_table = Table(title=f"median ms over {summary['observations']} observations")
    for column in ("stage", "median_ms", "mean_ms", "count"):
        rich_table.add_column(column)
    for row in table.itertuples(index=False):
        rich_table.add_row(row.stage, f"{row.median_ms:.2f}", f"{row.mean_ms:.2f}", str(row.count))
    console.print(rich_table)
    return EXIT_OK


COMMANDS = {
    "simulate": cmd_simulate,
    "match": cmd_match,
    "eval": cmd_eval,
    "merge": cmd_merge,
    "bench": cmd_bench,
}


# =============================================================================
# Entry point
# =============================================================================

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="RunConfig JSON file")
    common.add_argument("--seed", type=int, help="global seed override")
    common.add_argument("--jobs", type=int, help="worker processes for pair evaluation")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--verbose", "-v", action="store_true", help="debug logging")

    parser = argparse.ArgumentParser(description="Urquhart-tessellation place recognition for point-landmark maps")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="simulate a forest and its observations")

    match = sub.add_parser("match", parents=[common], help="match two observations")
    match.add_argument("--observations", type=Path, help="observations.csv")
    match.add_argument("i", type=int, help="target observation id")
    match.add_argument("j", type=int, help="source observation id")
    match.add_argument("--min-corrs", type=int, help="minimum point correspondences")
    match.add_argument("--csv", type=Path, help="write the transform row here")

    ev = sub.add_parser("eval", parents=[common], help="loop-closure PR / F1 experiment")
    ev.add_argument("--sweeps", action="store_true", help="also sweep tau and gamma")

    merge = sub.add_parser("merge", parents=[common], help="sub-map merging")
    merge.add_argument("--observations", type=Path, help="observations.csv (default: simulate)")
    merge.add_argument("--poses", type=Path, help="poses.csv for --observations")

    sub.add_parser("bench", parents=[common], help="per-stage timings")
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(args.verbose)

    try:
        cfg = apply_overrides(load_config(args.config), args)
        return COMMANDS[args.command](cfg, args)
    except CliError as e:
        console.print(f"[red]{type(e).__name__}:[/red] {e}")
        return e.exit_code
    except ValidationError as e:
        console.print(f"[red]Invalid configuration:[/red] {e}")
        return EXIT_CONFIG
    except (OSError, KeyError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        console.print(f"[red]I/O error:[/red] {e}")
        return EXIT_IO
    except SceneDoesNotFit as e:
        console.print(f"[red]Invalid configuration:[/red] {e}")
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
