"""Pinhole projection, back-projection and readout delays.

Expected values are hand pinhole arithmetic: ``u = fx X / Z + cx`` and its
inverse ``X = (u - cx) Z / fx``.
"""

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from firegs.camera import (BOTTOM_TO_TOP, Camera, Intrinsics, Pose, ReadoutSchedule, backproject,
                           backproject_points, camera_from_dict, camera_to_dict, delay_gradient, load_cameras,
                           look_at, pixel_delay, project, project_points, save_cameras)
from firegs.errors import InvalidDepthError, NonProjectableError, ValidationError

from conftest import random_rotation, simple_camera


def test_project_principal_axis(cam100):
    np.testing.assert_array_equal(project(cam100, (0, 0, 1)), [50, 50, 1])


def test_project_offset_point(cam100):
    np.testing.assert_allclose(project(cam100, (0.1, 0, 1)), [60, 50, 1], atol=1e-12)


def test_project_behind_camera(cam100):
    with pytest.raises(NonProjectableError):
        project(cam100, (0, 0, -1))


def test_backproject_examples(cam100):
    np.testing.assert_allclose(backproject(cam100, (50, 50), 1.0), [0, 0, 1], atol=1e-12)
    np.testing.assert_allclose(backproject(cam100, (60, 50), 2.0), [0.2, 0, 2], atol=1e-12)


@pytest.mark.parametrize("depth", [0.0, -1.0])
def test_backproject_rejects_nonpositive_depth(cam100, depth):
    with pytest.raises(InvalidDepthError):
        backproject(cam100, (10, 10), depth)


def test_round_trip_random_points(rng):
    cam = simple_camera(pose=Pose(random_rotation(rng), rng.normal(size=3)))
    uv = rng.uniform(0, 100, (100, 2))
    z = rng.uniform(0.2, 20, 100)
    x = backproject_points(cam, uv, z)
    uv2, z2 = project_points(cam, x)
    assert np.abs(uv2 - uv).max() < 1e-6
    assert np.abs(z2 - z).max() < 1e-9


@settings(max_examples=50, deadline=None)
@given(u=st.floats(0, 100), v=st.floats(0, 100), z=st.floats(0.05, 1e3), seed=st.integers(0, 2**31))
def test_round_trip_property(u, v, z, seed):
    rng = np.random.default_rng(seed)
    cam = simple_camera(pose=Pose(random_rotation(rng), rng.normal(size=3)))
    x = backproject(cam, (u, v), z)
    p = project(cam, x)
    assert abs(p[0] - u) < 1e-6 and abs(p[1] - v) < 1e-6
    assert abs(p[2] - z) <= 1e-9 * max(1.0, z)


def test_project_points_marks_behind_as_nan(cam100):
    uv, z = project_points(cam100, np.array([[0, 0, 1.0], [0, 0, -1.0]]))
    assert np.isfinite(uv[0]).all() and np.isnan(uv[1]).all()
    np.testing.assert_array_equal(z, [1, -1])


def test_pose_inverse_composes_to_identity(rng):
    pose = Pose(random_rotation(rng), rng.normal(size=3))
    ident = pose.compose(pose.inverse())
    np.testing.assert_allclose(ident.rotation, np.eye(3), atol=1e-9)
    np.testing.assert_allclose(ident.translation, 0.0, atol=1e-9)
    ident = pose.inverse().compose(pose)
    np.testing.assert_allclose(ident.rotation, np.eye(3), atol=1e-9)
    np.testing.assert_allclose(ident.translation, 0.0, atol=1e-9)


def test_pose_rejects_improper_rotation():
    with pytest.raises(ValidationError):
        Pose(np.diag([1.0, 1.0, -1.0]), np.zeros(3))
    with pytest.raises(ValidationError):
        Pose(np.eye(3) * 1.01, np.zeros(3))


@pytest.mark.parametrize("kw", [dict(fx=0), dict(fy=-1), dict(cx=101), dict(cy=-0.5)])
def test_intrinsics_invariants(kw):
    args = dict(fx=100.0, fy=100.0, cx=50.0, cy=50.0, width=101, height=101)
    args.update(kw)
    with pytest.raises(ValidationError):
        Intrinsics(**args)


def test_look_at_center_and_axis():
    pose = look_at((1.0, 2.0, -3.0), (1.0, 2.0, 0.0))
    np.testing.assert_allclose(pose.center, [1, 2, -3], atol=1e-12)
    # the target lies on the optical axis, and world up maps to image up (negative v)
    cam = Camera(Intrinsics(100, 100, 50, 50, 101, 101), pose)
    np.testing.assert_allclose(project(cam, (1, 2, 0))[:2], [50, 50], atol=1e-9)
    assert project(cam, (1, 2.1, 0))[1] < 50


def test_pixel_delay_global_is_zero():
    sched = ReadoutSchedule()
    rows = np.array([[0, 0], [10, 500], [3, 999]], dtype=float)
    np.testing.assert_array_equal(pixel_delay(sched, rows, 1000), 0.0)


def test_pixel_delay_paper_line_time():
    # 500 rows at 2.85 us per row
    sched = ReadoutSchedule(2.85e-6)
    assert pixel_delay(sched, (7.0, 500.0), 1000) == pytest.approx(1.425e-3, rel=1e-12)


def test_pixel_delay_bottom_to_top_origin():
    sched = ReadoutSchedule(2.85e-6, scan_direction=BOTTOM_TO_TOP)
    assert pixel_delay(sched, (0.0, 999.0), 1000) == 0.0
    assert pixel_delay(sched, (0.0, 0.0), 1000) == pytest.approx(999 * 2.85e-6)


def test_pixel_delay_affine_and_clamped():
    sched = ReadoutSchedule(3e-6, first_line_offset=1e-4)
    rows = np.linspace(0, 99, 37)
    d = pixel_delay(sched, np.c_[np.zeros_like(rows), rows], 100)
    np.testing.assert_allclose(np.diff(d) / np.diff(rows), 3e-6, rtol=1e-9)
    assert pixel_delay(sched, (0, -5.0), 100) == pytest.approx(1e-4)
    assert pixel_delay(sched, (0, 150.0), 100) == pytest.approx(1e-4 + 99 * 3e-6)


def test_delay_gradient_sign():
    np.testing.assert_array_equal(delay_gradient(ReadoutSchedule(2e-6)), [0, 2e-6])
    np.testing.assert_array_equal(delay_gradient(ReadoutSchedule(2e-6, scan_direction=BOTTOM_TO_TOP)), [0, -2e-6])


def test_readout_validation():
    with pytest.raises(ValidationError):
        ReadoutSchedule(-1e-6)
    with pytest.raises(ValidationError):
        ReadoutSchedule(1e-6, scan_direction="sideways")


def test_camera_json_round_trip(tmp_path, rng):
    cams = [simple_camera(pose=Pose(random_rotation(rng), rng.normal(size=3)),
                          readout=ReadoutSchedule(2.85e-6, 1e-5, BOTTOM_TO_TOP)), simple_camera()]
    save_cameras(tmp_path / "cams.json", cams)
    back = load_cameras(tmp_path / "cams.json")
    assert back == cams
    d = json.loads((tmp_path / "cams.json").read_text())["cameras"][0]
    assert set(d) == {"fx", "fy", "cx", "cy", "width", "height", "R", "t", "line_time_s",
                      "first_line_offset_s", "scan_direction"}
    assert len(d["R"]) == 9


def test_camera_from_dict_missing_field():
    d = camera_to_dict(simple_camera())
    del d["fx"]
    with pytest.raises(ValidationError):
        camera_from_dict(d)
