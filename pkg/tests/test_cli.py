import csv
import json
import shutil
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from firegs.camera import Camera, load_cameras, look_at, save_cameras
from firegs.cli import PIPELINE, load_schema, main
from firegs.fileio import read_image, read_scene
from firegs.render import RenderRequest, render

ROOT = Path(__file__).resolve().parents[1]
SMALL_SYNTH = {"n_static": 400, "n_dynamic": 40, "camera_count": 3, "frame_count": 6}


def _config(tmp, **extra):
    cfg = {"bundle": str(tmp / "bundle"), "workdir": str(tmp / "work"), "holdout_every": 3,
           "synth": dict(SMALL_SYNTH), "fit_static": {"iters": 3}, "fit_dynamic": {"iters": 3}}
    cfg.update(extra)
    path = tmp / "config.json"
    path.write_text(json.dumps(cfg))
    return str(path)


def _tree(root):
    return {p.relative_to(root): p.read_bytes() for p in sorted(Path(root).rglob("*")) if p.is_file()}


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    tmp = tmp_path_factory.mktemp("cli")
    cfg = _config(tmp)
    assert main(["synth-generate", "--config", cfg]) == 0
    for stage in PIPELINE:
        assert main([stage, "--config", cfg]) == 0, stage
    return tmp, cfg


def test_pipeline_outputs(pipeline):
    tmp, _ = pipeline
    work = tmp / "work"
    for name in ("background/cam00.png", "masks/cam02/0005.png", "depth/alignment.json", "pointcloud.ply",
                 "flow/frames.json", "scene_init.ply", "scene_static.ply", "scene_final.ply",
                 "trace_static.csv", "trace_dynamic.csv", "eval/report.json", "eval/report.csv"):
        assert (work / name).is_file(), name
    report = json.loads((work / "eval" / "report.json").read_text())
    # frames 2 and 5 are held out, one row per camera each
    assert {(f["camera"], f["frame"]) for f in report["frames"]} == {(c, k) for c in range(3) for k in (2, 5)}
    assert report["psnr"] > 0


def test_stages_are_rerun_identical(pipeline, tmp_path):
    tmp, cfg = pipeline
    before = _tree(tmp / "work")
    for stage in PIPELINE:
        assert main([stage, "--config", cfg]) == 0
    assert _tree(tmp / "work") == before


def test_fit_static_zero_iters_is_identity(pipeline, tmp_path):
    tmp, cfg = pipeline
    work = tmp_path / "w0"
    shutil.copytree(tmp / "work", work)
    assert main(["fit-static", "--config", cfg, "--workdir", str(work), "--iters", "0"]) == 0
    assert (work / "scene_static.ply").read_bytes() == (work / "scene_init.ply").read_bytes()


def test_render_novel_view(pipeline, tmp_path):
    tmp, cfg = pipeline
    base = read_scene(tmp / "bundle" / "ground_truth.ply")
    cam0 = load_cameras(tmp / "bundle" / "cameras.json")[0]
    novel = Camera(cam0.intrinsics, look_at((0.4, 0.9, -2.2), (0.0, 0.4, 0.0)))
    save_cameras(tmp_path / "novel.json", [novel])
    code = main(["render", "--config", cfg, "--scene", str(tmp / "bundle" / "ground_truth.ply"),
                 "--cameras", str(tmp_path / "novel.json"), "--time", "0.004", "--out", str(tmp_path / "view")])
    assert code == 0
    img = read_image(tmp_path / "view.png")
    direct = render(base, RenderRequest(novel, 0.004)).color
    assert np.abs(img - direct).max() <= 0.5 / 255 + 1e-9
    assert (tmp_path / "view_depth.pfm").is_file()


def test_exit_code_validation_pointer(tmp_path, capsys):
    cfg = _config(tmp_path, flow={"alpha0": -1})
    assert main(["fuse-flow", "--config", cfg]) == 2
    assert "/flow/alpha0" in capsys.readouterr().err
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["fuse-flow", "--config", str(bad)]) == 2


def test_exit_code_missing_input(tmp_path, capsys):
    cfg = _config(tmp_path)
    assert main(["remove-fire", "--config", cfg]) == 3
    assert "bundle" in capsys.readouterr().err
    assert main(["fuse-flow", "--config", str(tmp_path / "nope.json")]) == 3


def test_exit_code_numeric_failure(tmp_path):
    cfg = _config(tmp_path, gradient_check={"tolerance": 1e-300})
    assert main(["gradient-check", "--config", cfg, "--probe", "single"]) == 4
    assert main(["gradient-check", "--config", _config(tmp_path), "--probe", "single"]) == 0
    worst = json.loads((tmp_path / "work" / "gradient_check.json").read_text())["worst"]["single"]
    assert worst < 1e-3


def test_decode_sync_matches_truth(tmp_path):
    synth = {"n_static": 200, "n_dynamic": 10, "camera_count": 2, "frame_count": 5, "shutter": "rolling",
             "line_time": 2e-5, "led_overlay": True, "camera_offsets": [0.0, 1e-4]}
    cfg = _config(tmp_path, synth=synth)
    assert main(["synth-generate", "--config", cfg]) == 0
    assert main(["decode-sync", "--config", cfg]) == 0
    truth = json.loads((tmp_path / "bundle" / "manifest.json").read_text())["sync_truth"]
    for ci in range(2):
        rows = list(csv.DictReader(open(tmp_path / "work" / "sync" / f"cam{ci:02d}.csv")))
        assert [int(r["frame_index"]) for r in rows] == [t["frame_index"] for t in truth[ci]]
    rel = json.loads((tmp_path / "work" / "sync" / "offsets.json").read_text())["relative_to_cam00_s"]
    # camera 1 starts exposing 100 us later relative to the ticks
    assert abs(rel["cam01"] - 1e-4) <= 2e-5 * 5


def test_schema_shipped_in_docs():
    assert json.loads((ROOT / "docs" / "config.schema.json").read_text()) == load_schema()


def test_console_script_help():
    res = subprocess.run([sys.executable, "-m", "firegs.cli", "--help"], capture_output=True, text=True)
    assert res.returncode == 0 and "decode-sync" in res.stdout
    res = subprocess.run([sys.executable, "-m", "firegs.cli", "render"], capture_output=True, text=True)
    assert res.returncode == 2
