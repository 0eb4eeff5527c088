import json
import math

import numpy as np
import pandas as pd
import pytest

from descriptor import LengthMismatch
from main import COMMANDS, EXIT_CONFIG, EXIT_IO, EXIT_NO_MATCH, EXIT_OK, ConfigError, RunConfig, load_config, main
from registration import Se2Transform
from simulator import bridson_poisson_disc

SMALL_SIM = {"sim": {"extent": [400.0, 400.0], "circle_radius": 120.0, "laps": 1, "steps_per_lap": 4}}


def _config(tmp_path, payload, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(payload))
    return str(path)


def _write_observations(path, clouds, known_ids=True):
    frames = [
        pd.DataFrame({"obs_id": k, "landmark_id": np.arange(len(xy)) if known_ids else -1, "x": xy[:, 0], "y": xy[:, 1]})
        for k, xy in enumerate(clouds)
    ]
    pd.concat(frames, ignore_index=True).to_csv(path, index=False)
    return str(path)


def _write_poses(path, n):
    pd.DataFrame({
        "obs_id": range(n), "theta_rad": 0.0, "x": 0.0, "y": 0.0,
        "pose_theta_rad": 0.0, "applied_rotation_rad": 0.0,
    }).to_csv(path, index=False)
    return str(path)


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    root = tmp_path_factory.mktemp("sim")
    config = _config(root, SMALL_SIM)
    assert main(["simulate", "--config", config, "--out", str(root / "out")]) == EXIT_OK
    return root / "out"


# =============================================================================
# Configuration
# =============================================================================

def test_default_config():
    cfg = load_config(None)
    assert cfg.sim.extent == (400.0, 400.0)
    assert cfg.jobs == 1


def test_seed_reaches_every_sub_config():
    cfg = RunConfig(seed=42).seeded()
    assert cfg.sim.seed == cfg.match.seed == cfg.ransac.seed == 42


def test_malformed_json_reports_position(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text('{"sim": {"laps": 2,}}')
    with pytest.raises(ConfigError, match="line 1 column"):
        load_config(path)
    assert main(["simulate", "--config", str(path), "--out", str(tmp_path / "out")]) == EXIT_CONFIG


def test_invalid_values_name_the_field(tmp_path):
    path = _config(tmp_path, {"match": {"tau": -1}})
    with pytest.raises(ConfigError, match="match.tau"):
        load_config(path)


@pytest.mark.parametrize("payload", [
    {"sim": {"unknown": 1}},
    {"evaluation": {"min_corrs": [1]}},
    {"sim": {**SMALL_SIM["sim"], "circle_radius": 190.0}},
])
def test_config_errors_exit_2(tmp_path, payload):
    config = _config(tmp_path, payload)
    assert main(["simulate", "--config", config, "--out", str(tmp_path / "out")]) == EXIT_CONFIG


def test_missing_config_file_exits_2(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.json")]) == EXIT_CONFIG


# =============================================================================
# simulate
# =============================================================================

def test_simulate_writes_files_and_manifest(simulated):
    manifest = json.loads((simulated / "manifest.json").read_text())
    assert manifest["command"] == "simulate"
    for name, rows in manifest["files"].items():
        assert len(pd.read_csv(simulated / name)) == rows
    assert manifest["files"]["poses.csv"] == 4
    assert RunConfig.model_validate(manifest["config"]).sim.steps_per_lap == 4


def test_simulate_is_byte_identical(tmp_path, simulated):
    config = _config(tmp_path, SMALL_SIM)
    assert main(["simulate", "--config", config, "--out", str(tmp_path / "again")]) == EXIT_OK
    for name in ("forest.csv", "observations.csv", "poses.csv"):
        assert (tmp_path / "again" / name).read_bytes() == (simulated / name).read_bytes()


# =============================================================================
# match
# =============================================================================

def test_self_match_is_identity(tmp_path, simulated):
    csv = tmp_path / "h.csv"
    code = main(["match", "--observations", str(simulated / "observations.csv"), "0", "0", "--csv", str(csv)])
    assert code == EXIT_OK
    row = pd.read_csv(csv).iloc[0]
    assert abs(row["theta_rad"]) < 1e-6
    assert math.hypot(row["tx"], row["ty"]) < 1e-6


def test_disjoint_observations_do_not_match(tmp_path):
    forest = bridson_poisson_disc((80.0, 80.0), 3.0, 0)
    obs = _write_observations(tmp_path / "obs.csv", [forest, np.array([[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]])])
    assert main(["match", "--observations", obs, "0", "1"]) == EXIT_NO_MATCH


def test_unknown_observation_id(simulated):
    assert main(["match", "--observations", str(simulated / "observations.csv"), "0", "99"]) == EXIT_CONFIG


def test_missing_observations_file(tmp_path):
    assert main(["match", "--observations", str(tmp_path / "missing.csv"), "0", "1"]) == EXIT_IO


def test_observations_file_without_columns(tmp_path):
    path = tmp_path / "obs.csv"
    path.write_text("a,b\n1,2\n")
    assert main(["match", "--observations", str(path), "0", "1"]) == EXIT_IO


# =============================================================================
# merge / eval / bench
# =============================================================================

def test_merge_with_rigid_copy(tmp_path):
    forest = bridson_poisson_disc((60.0, 60.0), 3.0, 4)
    copy = Se2Transform(math.radians(20), 3.0, 1.0).apply(forest)
    obs = _write_observations(tmp_path / "obs.csv", [forest, copy])
    poses = _write_poses(tmp_path / "poses.csv", 2)
    config = _config(tmp_path, {"evaluation": {"window": 1, "overlap": 0.0}})
    out = tmp_path / "out"

    assert main(["merge", "--config", config, "--observations", obs, "--poses", poses, "--out", str(out)]) == EXIT_OK
    assert len(pd.read_csv(out / "merged_map.csv")) == len(forest)
    assert len(pd.read_csv(out / "transforms.csv")) == 2
    assert json.loads((out / "merge_report.json").read_text())["failures"] == []
    assert (out / "merged_map.svg").exists()


def test_merge_with_unknown_landmark_ids(tmp_path):
    forest = bridson_poisson_disc((60.0, 60.0), 3.0, 4)
    copy = Se2Transform(math.radians(20), 3.0, 1.0).apply(forest)
    obs = _write_observations(tmp_path / "obs.csv", [forest, copy], known_ids=False)
    poses = _write_poses(tmp_path / "poses.csv", 2)
    config = _config(tmp_path, {"evaluation": {"window": 1, "overlap": 0.0}})
    out = tmp_path / "out"

    assert main(["merge", "--config", config, "--observations", obs, "--poses", poses, "--out", str(out)]) == EXIT_OK
    submaps = pd.read_csv(out / "submaps.csv")
    assert submaps.groupby("submap_id").size().tolist() == [len(forest), len(forest)]
    assert (submaps["landmark_id"] == -1).all()
    assert len(pd.read_csv(out / "merged_map.csv")) == len(forest)
    assert json.loads((out / "merge_report.json").read_text())["failures"] == []


def test_merge_with_nothing_registered_exits_1(tmp_path):
    forest = bridson_poisson_disc((60.0, 60.0), 3.0, 4)
    obs = _write_observations(tmp_path / "obs.csv", [forest, np.array([[0.0, 0.0], [5.0, 0.0], [0.0, 5.0]])])
    poses = _write_poses(tmp_path / "poses.csv", 2)
    config = _config(tmp_path, {"evaluation": {"window": 1, "overlap": 0.0}})
    code = main(["merge", "--config", config, "--observations", obs, "--poses", poses, "--out", str(tmp_path / "out")])
    assert code == EXIT_NO_MATCH
    assert json.loads((tmp_path / "out" / "merge_report.json").read_text())["failures"] == [1]


def test_merge_needs_poses(tmp_path, simulated):
    code = main(["merge", "--observations", str(simulated / "observations.csv"), "--out", str(tmp_path)])
    assert code == EXIT_CONFIG


def test_eval_writes_grid(tmp_path):
    payload = {**SMALL_SIM, "evaluation": {"omegas": [1.0], "sigmas": [0.0, 0.1], "min_corrs": [4], "n_seeds": 1}}
    out = tmp_path / "out"
    assert main(["eval", "--config", _config(tmp_path, payload), "--out", str(out)]) == EXIT_OK

    grid = pd.read_csv(out / "f1_grid.csv", index_col=0)
    assert grid.shape == (2, 1)
    assert ((grid >= 0) & (grid <= 1)).all().all()
    assert (out / "pr_curves.svg").exists()
    assert (out / "f1_grid.svg").exists()


def test_bench_writes_timings(tmp_path):
    payload = {**SMALL_SIM, "evaluation": {"bench_observations": 3}}
    out = tmp_path / "out"
    assert main(["bench", "--config", _config(tmp_path, payload), "--out", str(out)]) == EXIT_OK
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["benchmark"]["observations"] == 3
    assert "triangulation" in set(pd.read_csv(out / "timings.csv")["stage"])


def test_internal_errors_are_not_config_errors(monkeypatch):
    def broken(cfg, args):
        raise LengthMismatch("Descriptor lengths differ: 25 vs 20")

    monkeypatch.setitem(COMMANDS, "bench", broken)
    with pytest.raises(LengthMismatch):
        main(["bench"])
