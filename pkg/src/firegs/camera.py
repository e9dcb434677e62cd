"""Pinhole cameras with a linear rolling-shutter readout schedule.

Conventions: the pose maps world to camera coordinates, ``p = R x + t``.
Camera axes are x right, y down, z forward. Pixel ``(row i, col j)`` is
sampled at image coordinates ``(u, v) = (j, i)``. Inputs are assumed to be
undistorted already.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InvalidDepthError, NonProjectableError, ValidationError

TOP_TO_BOTTOM = "top-to-bottom"
BOTTOM_TO_TOP = "bottom-to-top"
_ORTHO_TOL = 1e-9


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise ValidationError(f"focal lengths must be positive, got {self.fx}, {self.fy}")
        if not (0 <= self.cx < self.width and 0 <= self.cy < self.height):
            raise ValidationError("principal point outside the image")

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])


@dataclass(frozen=True, eq=False)
class Pose:
    """World-to-camera rigid transform."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.array(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.array(self.translation, dtype=np.float64).reshape(3)
        if np.abs(R.T @ R - np.eye(3)).max() > _ORTHO_TOL or abs(np.linalg.det(R) - 1.0) > _ORTHO_TOL:
            raise ValidationError("pose rotation is not a proper rotation matrix")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    def inverse(self) -> "Pose":
        R = self.rotation.T
        return Pose(R, -R @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        """Return the pose applying ``other`` first, then ``self``."""
        return Pose(self.rotation @ other.rotation, self.rotation @ other.translation + self.translation)

    def apply(self, x: np.ndarray) -> np.ndarray:
        return np.asarray(x, dtype=np.float64) @ self.rotation.T + self.translation

    @property
    def center(self) -> np.ndarray:
        """Camera center in world coordinates."""
        return -self.rotation.T @ self.translation

    def __eq__(self, other):
        if not isinstance(other, Pose):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(self.translation, other.translation)


@dataclass(frozen=True)
class ReadoutSchedule:
    """Row-sequential capture timing. ``line_time == 0`` is a global shutter."""

    line_time: float = 0.0
    first_line_offset: float = 0.0
    scan_direction: str = TOP_TO_BOTTOM

    def __post_init__(self):
        if not self.line_time >= 0:
            raise ValidationError(f"line_time must be >= 0, got {self.line_time}")
        if self.scan_direction not in (TOP_TO_BOTTOM, BOTTOM_TO_TOP):
            raise ValidationError(f"unknown scan direction {self.scan_direction!r}")

    @property
    def is_global(self) -> bool:
        return self.line_time == 0.0


def pixel_delay(schedule: ReadoutSchedule, p, height: int):
    """Capture delay in seconds of image point(s) ``p`` relative to frame start.

    Rows are continuous (sub-pixel) and clamped to ``[0, height - 1]``.
    Works on a single point ``(u, v)`` or an ``(N, 2)`` array.
    """
    v = np.asarray(p, dtype=np.float64)[..., 1]
    row = np.clip(v, 0.0, height - 1.0)
    if schedule.scan_direction == BOTTOM_TO_TOP:
        row = (height - 1.0) - row
    delay = schedule.first_line_offset + row * schedule.line_time
    return float(delay) if np.ndim(delay) == 0 else delay


def delay_gradient(schedule: ReadoutSchedule) -> np.ndarray:
    """Gradient of the delay w.r.t. image coordinates, seconds per pixel."""
    sign = 1.0 if schedule.scan_direction == TOP_TO_BOTTOM else -1.0
    return np.array([0.0, sign * schedule.line_time])


@dataclass(frozen=True)
class Camera:
    intrinsics: Intrinsics
    pose: Pose = field(default_factory=Pose.identity)
    readout: ReadoutSchedule = field(default_factory=ReadoutSchedule)

    @property
    def width(self) -> int:
        return self.intrinsics.width

    @property
    def height(self) -> int:
        return self.intrinsics.height

    def to_camera(self, x) -> np.ndarray:
        return self.pose.apply(x)

    def project(self, x):
        """Project a world point. Returns ``(u, v, z)`` with z the camera-frame depth."""
        return project(self, x)

    def backproject(self, p, depth):
        return backproject(self, p, depth)

    def pixel_delay(self, p):
        return pixel_delay(self.readout, p, self.height)

    def in_bounds(self, uv) -> np.ndarray:
        uv = np.asarray(uv, dtype=np.float64)
        u, v = uv[..., 0], uv[..., 1]
        return (u >= 0) & (u <= self.width - 1) & (v >= 0) & (v <= self.height - 1)

    def with_readout(self, readout: ReadoutSchedule) -> "Camera":
        return Camera(self.intrinsics, self.pose, readout)


def project_points(camera: Camera, x: np.ndarray):
    """Vectorized projection of ``(N, 3)`` world points.

    Returns ``(uv, z)``; entries with ``z <= 0`` are NaN in ``uv``.
    """
    pc = camera.pose.apply(np.asarray(x, dtype=np.float64).reshape(-1, 3))
    z = pc[:, 2]
    k = camera.intrinsics
    with np.errstate(divide="ignore", invalid="ignore"):
        uv = np.stack([k.fx * pc[:, 0] / z + k.cx, k.fy * pc[:, 1] / z + k.cy], axis=1)
    uv[z <= 0] = np.nan
    return uv, z


def project(camera: Camera, x):
    pc = camera.pose.apply(np.asarray(x, dtype=np.float64).reshape(3))
    if not pc[2] > 0:
        raise NonProjectableError(f"point {tuple(np.ravel(x))} is behind the camera (z={pc[2]:.6g})")
    k = camera.intrinsics
    return np.array([k.fx * pc[0] / pc[2] + k.cx, k.fy * pc[1] / pc[2] + k.cy, pc[2]])


def backproject_points(camera: Camera, uv: np.ndarray, depth: np.ndarray) -> np.ndarray:
    """Vectorized inverse of :func:`project_points` at camera-frame depth ``depth``."""
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    z = np.asarray(depth, dtype=np.float64).reshape(-1)
    k = camera.intrinsics
    pc = np.stack([(uv[:, 0] - k.cx) * z / k.fx, (uv[:, 1] - k.cy) * z / k.fy, z], axis=1)
    return (pc - camera.pose.translation) @ camera.pose.rotation


def backproject(camera: Camera, p, depth: float) -> np.ndarray:
    if not depth > 0:
        raise InvalidDepthError(f"depth must be positive, got {depth}")
    return backproject_points(camera, np.asarray(p)[:2], np.array([depth]))[0]


def look_at(eye, target, up=(0.0, 1.0, 0.0)) -> Pose:
    """World-to-camera pose for a camera at ``eye`` looking at ``target``.

    ``up`` is the world up direction; image rows grow against it.
    """
    eye = np.asarray(eye, dtype=np.float64)
    forward = np.asarray(target, dtype=np.float64) - eye
    forward /= np.linalg.norm(forward)
    down = -np.asarray(up, dtype=np.float64)
    down = down - forward * (down @ forward)
    down /= np.linalg.norm(down)
    right = np.cross(down, forward)
    R = np.stack([right, down, forward])
    return Pose(R, -R @ eye)


# -- JSON -------------------------------------------------------------------

def camera_to_dict(camera: Camera) -> dict:
    k, pose, ro = camera.intrinsics, camera.pose, camera.readout
    return {
        "fx": k.fx, "fy": k.fy, "cx": k.cx, "cy": k.cy,
        "width": k.width, "height": k.height,
        "R": [float(v) for v in pose.rotation.reshape(-1)],
        "t": [float(v) for v in pose.translation],
        "line_time_s": ro.line_time,
        "first_line_offset_s": ro.first_line_offset,
        "scan_direction": ro.scan_direction,
    }


def camera_from_dict(d: dict) -> Camera:
    try:
        k = Intrinsics(float(d["fx"]), float(d["fy"]), float(d["cx"]), float(d["cy"]),
                       int(d["width"]), int(d["height"]))
        R = np.array(d["R"], dtype=np.float64)
        if R.size != 9:
            raise ValidationError("camera R must have 9 entries")
        pose = Pose(R.reshape(3, 3), np.array(d["t"], dtype=np.float64))
        ro = ReadoutSchedule(float(d.get("line_time_s", 0.0)), float(d.get("first_line_offset_s", 0.0)),
                             d.get("scan_direction", TOP_TO_BOTTOM))
    except KeyError as exc:
        raise ValidationError(f"camera entry missing field {exc.args[0]!r}") from None
    return Camera(k, pose, ro)


def save_cameras(path, cameras) -> None:
    payload = {"cameras": [camera_to_dict(c) for c in cameras]}
    Path(path).write_text(json.dumps(payload, indent=2) + "\n")


def load_cameras(path) -> list[Camera]:
    data = json.loads(Path(path).read_text())
    entries = data["cameras"] if isinstance(data, dict) else data
    return [camera_from_dict(e) for e in entries]
