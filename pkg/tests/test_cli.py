import json
import subprocess
import sys

import numpy as np
import pytest

from crosswalk.cli import run, scene_index, stem
from crosswalk.config import RunConfig, load_config
from crosswalk.evaluation import evaluate, format_report, scene_corruption
from crosswalk.featuremaps import CorruptionConfig, corrupt, read_grids, render_oracle
from crosswalk.inference import infer_scene, load_predictions
from crosswalk.scene import GeneratorConfig, generate_scene, load_scene

FAST = {"generator": {"resolution": 0.1}, "corruption": {"blur_sigma": 1.0, "hole_rate": 0.1, "noise_sigma": 0.05}}


@pytest.fixture(scope="module")
def cfg_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("cfg") / "fast.json"
    path.write_text(json.dumps(FAST))
    return path


def pipeline(root, cfg_file, jobs):
    c, j = ["--config", str(cfg_file)], ["--jobs", str(jobs)]
    steps = [
        ["gen", "--seed", "11", "--count", "3", "--out", f"{root}/scenes"],
        ["render", f"{root}/scenes", "--out", f"{root}/oracle"],
        ["corrupt", f"{root}/oracle", "--seed", "4", "--out", f"{root}/maps"],
        ["infer", f"{root}/scenes", f"{root}/maps", "--out", f"{root}/preds"],
        ["eval", f"{root}/scenes", f"{root}/preds", "--out", f"{root}/report.csv"],
    ]
    for argv in steps:
        assert run(argv + c + j) == 0, argv


def snapshot(root):
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def pipeline_dir(tmp_path_factory, cfg_file):
    root = tmp_path_factory.mktemp("run1")
    pipeline(root, cfg_file, 1)
    return root


def test_stem_and_index(tmp_path):
    assert stem(tmp_path / "scene_00007.pred.json") == "scene_00007"
    assert scene_index(tmp_path / "scene_00007.cwg") == 7
    assert scene_index(tmp_path / "custom.cwg", 3) == 3


def test_pipeline_is_deterministic(pipeline_dir, tmp_path, cfg_file):
    first = snapshot(pipeline_dir)
    assert len(first) == 3 * 4 + 1
    pipeline(tmp_path / "again", cfg_file, 1)
    pipeline(tmp_path / "jobs", cfg_file, 2)
    assert snapshot(tmp_path / "again") == first
    assert snapshot(tmp_path / "jobs") == first


def test_pipeline_matches_library(pipeline_dir, cfg_file):
    cfg = load_config(cfg_file)
    gen = GeneratorConfig(seed=11, resolution=0.1)
    corr = CorruptionConfig(**{**FAST["corruption"], "seed": 4})
    scenes, preds = [], []
    for i in range(3):
        s = generate_scene(gen, i)
        assert load_scene(pipeline_dir / f"scenes/scene_{i:05d}.json") == s
        maps = corrupt(render_oracle(s), scene_corruption(corr, i))
        assert np.array_equal(read_grids(pipeline_dir / f"maps/scene_{i:05d}.cwg"), maps.stack())
        p = infer_scene(s, maps, cfg.energy)
        assert load_predictions(pipeline_dir / f"preds/scene_{i:05d}.pred.json") == p
        scenes.append(s)
        preds.append(p)
    report = format_report([("eval", evaluate(scenes, preds))])
    assert (pipeline_dir / "report.csv").read_text() == report


def test_repro_line(tmp_path, capsys, cfg_file):
    assert run(["gen", "--seed", "5", "--out", str(tmp_path), "--config", str(cfg_file)]) == 0
    err = capsys.readouterr().err
    assert err.startswith("crosswalk 0.1.0 gen seed=5 config=")
    digest = err.split("config=")[1].strip()
    assert len(digest) == 16
    assert run(["gen", "--seed", "6", "--out", str(tmp_path), "--config", str(cfg_file)]) == 0
    assert capsys.readouterr().err.split("config=")[1].strip() != digest


def test_grid_mismatch_exit_code(tmp_path, pipeline_dir, capsys, cfg_file):
    other = tmp_path / "other"
    assert run(["gen", "--seed", "11", "--out", str(other)]) == 0  # default resolution: a different grid
    code = run(["infer", str(other / "scene_00000.json"), str(pipeline_dir / "maps/scene_00000.cwg"), "--out", str(tmp_path / "p.json")])
    assert code == 2
    assert "GridMismatch" in capsys.readouterr().err


def test_usage_errors(tmp_path, capsys):
    assert run(["gen"]) == 1  # missing --out
    assert run(["frobnicate"]) == 1
    assert run(["gen", "--out", str(tmp_path), "--count", "0"]) == 1
    assert run(["gen", "--out", str(tmp_path), "--jobs", "0"]) == 1
    assert "error:" in capsys.readouterr().err


def test_missing_input_exit_code(tmp_path, pipeline_dir):
    assert run(["render", str(tmp_path / "nope.json"), "--out", str(tmp_path / "x.cwg")]) == 2
    assert run(["infer", str(pipeline_dir / "scenes"), str(tmp_path), "--out", str(tmp_path / "p")]) == 2


def test_bad_config_exit_code(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"generator": {"no_such_field": 1}}))
    assert run(["gen", "--config", str(bad), "--out", str(tmp_path)]) == 2


def test_config_precedence(tmp_path, capsys):
    cfgp = tmp_path / "c.json"
    cfgp.write_text(json.dumps({"generator": {"seed": 3, "resolution": 0.1}}))
    assert run(["gen", "--config", str(cfgp), "--out", str(tmp_path / "a")]) == 0
    assert "seed=3 " in capsys.readouterr().err
    assert run(["gen", "--config", str(cfgp), "--seed", "9", "--out", str(tmp_path / "b")]) == 0
    assert "seed=9 " in capsys.readouterr().err
    s = load_scene(tmp_path / "b/scene_00000.json")
    assert s == generate_scene(GeneratorConfig(seed=9, resolution=0.1), 0)
    assert load_config(cfgp).corruption == RunConfig().corruption


def test_loss_and_export(pipeline_dir, tmp_path, capsys):
    out = tmp_path / "loss.csv"
    assert run(["loss", str(pipeline_dir / "oracle"), str(pipeline_dir / "oracle"), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "name,seg,dt,align,total"
    assert len(lines) == 5 and lines[-1].startswith("mean,")
    assert all(float(v) <= 1.2e-6 for line in lines[1:] for v in line.split(",")[1:])

    pgm = tmp_path / "dt.pgm"
    assert run(["export-pgm", str(pipeline_dir / "oracle/scene_00000.cwg"), "--out", str(pgm)]) == 0
    assert pgm.read_bytes().startswith(b"P5")
    assert run(["export-pgm", str(pipeline_dir / "oracle/scene_00000.cwg"), "--channel", "depth", "--out", str(pgm)]) == 1


def test_ablate_small(tmp_path, cfg_file):
    out = tmp_path / "t2.csv"
    assert run(["ablate", "--scenes", "2", "--seed", "3", "--config", str(cfg_file), "--out", str(out)]) == 0
    rows = out.read_text().splitlines()
    assert len(rows) == 9
    assert [r.split(",")[0] for r in rows[1:]][:2] == ["Ours", "No Ang Search"]


def test_console_entry_point(tmp_path):
    proc = subprocess.run(
        [sys.executable, "-m", "crosswalk.cli", "gen", "--out", str(tmp_path), "--seed", "1"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "scene_00000.json").exists()
    proc = subprocess.run([sys.executable, "-m", "crosswalk.cli", "--version"], capture_output=True, text=True)
    assert proc.returncode == 0 and "0.1.0" in proc.stdout
