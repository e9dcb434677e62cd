import json

import numpy as np
import pytest

from firegs.camera import project_points
from firegs.errors import ValidationError
from firegs.fileio import read_flow, read_image, read_scene
from firegs.flowfuse import backproject_flow
from firegs.synth import (PLUME, RIGID, SynthSpec, build_scene, camera_dir, generate, holdout_frames, write_bundle)

SMALL = dict(n_static=300, camera_count=2, frame_count=3)


def test_spec_validation():
    with pytest.raises(ValidationError):
        SynthSpec(n_dynamic=-1)
    with pytest.raises(ValidationError):
        SynthSpec(frame_rate=0)
    with pytest.raises(ValidationError):
        SynthSpec(shutter="rolling")
    with pytest.raises(ValidationError):
        SynthSpec.from_dict({"colour": 1})
    spec = SynthSpec(seed=4, rigid_velocity=[0, 0.1, 0])
    assert SynthSpec.from_dict(json.loads(json.dumps(spec.to_dict()))) == spec


def test_defaults_follow_capture_setup():
    spec = SynthSpec()
    assert (spec.camera_count, spec.frame_rate, spec.width, spec.height, spec.frame_count) == (3, 400.0, 64, 64, 20)
    assert spec.motion_model == PLUME


def test_holdout_frames():
    assert holdout_frames(20) == [7, 15]
    assert holdout_frames(5, 1) == [0, 1, 2, 3, 4]
    with pytest.raises(ValidationError):
        holdout_frames(5, 0)


def test_static_scene_is_constant():
    b = generate(SynthSpec(n_dynamic=0, **SMALL))
    for ci in range(2):
        for k in range(1, 3):
            np.testing.assert_array_equal(b.frames[ci][k], b.frames[ci][0])
        for f in b.flows[ci]:
            assert np.all(f.values == 0.0)
        assert not any(m.any() for m in b.masks[ci])


def _single_rigid(**kw):
    spec = SynthSpec(n_dynamic=1, motion_model=RIGID, **{**SMALL, **kw})
    return spec, generate(spec)


def test_rigid_flow_at_center():
    spec, b = _single_rigid()
    g = b.scene.dynamics
    d = np.asarray(spec.rigid_velocity)
    for ci, cam in enumerate(b.cameras):
        uv, _ = project_points(cam, np.stack([g.position[0], g.position[0] + d]))
        expected = uv[1] - uv[0]
        col, row = np.round(uv[0]).astype(int)
        flow = b.flows[ci][0]
        assert flow.valid[row, col] and b.masks[ci][0][row, col]
        np.testing.assert_allclose(flow.values[row, col], expected, atol=1e-6)


def test_flow_backprojection_round_trip():
    spec, b = _single_rigid()
    g = b.scene.dynamics
    for ci, cam in enumerate(b.cameras):
        u = backproject_flow(cam, b.flows[ci][0], g.position[0])
        np.testing.assert_allclose(u, spec.rigid_velocity, atol=1e-4)


def test_generate_is_deterministic(tmp_path):
    spec = SynthSpec(seed=11, n_dynamic=30, **SMALL)
    a, b = generate(spec), generate(spec)
    assert a.scene.equal(b.scene)
    for ci in range(2):
        for k in range(3):
            assert np.array_equal(a.frames[ci][k], b.frames[ci][k])
            assert np.array_equal(a.mono[ci][k].values, b.mono[ci][k].values)
    write_bundle(a, tmp_path / "a")
    write_bundle(b, tmp_path / "b")
    files_a = sorted(p.relative_to(tmp_path / "a") for p in (tmp_path / "a").rglob("*") if p.is_file())
    files_b = sorted(p.relative_to(tmp_path / "b") for p in (tmp_path / "b").rglob("*") if p.is_file())
    assert files_a == files_b
    assert all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes() for f in files_a)


def test_seed_changes_scene():
    assert not build_scene(SynthSpec(seed=1)).equal(build_scene(SynthSpec(seed=2)))


def test_bundle_layout(tmp_path):
    spec = SynthSpec(n_dynamic=20, **SMALL)
    b = generate(spec)
    out = write_bundle(b, tmp_path / "bundle")
    for name in ("cameras.json", "manifest.json", "ground_truth.ply"):
        assert (out / name).is_file()
    cd = camera_dir(1)
    assert cd == "cam01"
    assert sorted(p.name for p in (out / "frames" / cd).iterdir()) == ["0000.png", "0001.png", "0002.png"]
    assert sorted(p.name for p in (out / "flows" / cd).glob("*.flo")) == ["0000.flo", "0001.flo"]
    assert (out / "depths" / cd / "stereo.pfm").is_file() and (out / "depths" / cd / "mono.pfm").is_file()
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["frame_count"] == 3 and manifest["camera_count"] == 2
    assert SynthSpec.from_dict(manifest["spec"]) == spec
    assert read_scene(out / "ground_truth.ply").equal(b.scene)
    np.testing.assert_allclose(read_image(out / "frames" / cd / "0001.png"), b.frames[1][1], atol=0.5 / 255 + 1e-12)
    flo = read_flow(out / "flows" / cd / "0000.flo")
    np.testing.assert_array_equal(flo.valid, b.flows[1][0].valid)


def test_mono_depth_is_affine_distortion():
    spec = SynthSpec(n_dynamic=10, mono_noise=0.0, **SMALL)
    b = generate(spec)
    a, off = b.mono_affine[0]
    d = b.depths[0][1]
    np.testing.assert_allclose(b.mono[0][1].values[d.valid], a * d.values[d.valid] + off, atol=1e-12)


def test_rolling_led_bundle_counter_matches_truth():
    from firegs.sync import decode_frame

    spec = SynthSpec(n_static=100, n_dynamic=5, camera_count=1, frame_count=4, shutter="rolling", line_time=2e-5,
                     led_overlay=True)
    b = generate(spec)
    for k, truth in enumerate(b.sync_truth[0]):
        r = decode_frame(b.frames[0][k], b.led_layout, b.cameras[0].readout)
        assert r.frame_index == truth["frame_index"]
        assert abs(r.subframe_offset) <= 2e-5 * 5
