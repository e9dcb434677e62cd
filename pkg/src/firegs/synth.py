"""Synthetic ground truth: small fire scenes rendered from a few cameras.

The scene is a textured back wall (z = +1) and floor (y = 0) made of static
Gaussians, with a cluster of dynamic Gaussians at the origin. World y points
up. Cameras sit on a circle of radius 2.5 m at height 0.5 m and look at
``(0, 0.5, 0)``.

Flows, masks and the flame depth hint come from compositing per-Gaussian
quantities with the renderer's own blending weights: per pixel, the
dynamic-weighted mean 3D position and per-frame displacement are projected
into the image, which gives the screen displacement of the rendered
dynamic content.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .camera import Camera, Intrinsics, ReadoutSchedule, look_at, project_points, save_cameras
from .errors import ValidationError
from .fileio import write_depth, write_flow, write_image, write_mask, write_scene
from .gaussians import DynamicGaussians, GaussianScene, StaticGaussians, make_dynamic, make_static
from .rasters import DepthMap, FlowMap
from .render import GLOBAL, ROLLING, Rasterization, RenderRequest
from .sync import LedLayout, default_layout, paint_leds

RIGID = "rigid-translation"
PLUME = "buoyant-plume"
HOLDOUT_EVERY = 8

MASK_WEIGHT = 0.25  # dynamic compositing weight above which a pixel is flame
FLOW_WEIGHT = 1e-3  # below this the dynamic content is too faint for a defined flow

LOOK_TARGET = (0.0, 0.5, 0.0)
CAMERA_RADIUS = 2.5
CAMERA_HEIGHT = 0.5
BACKGROUND = (0.05, 0.05, 0.08)


@dataclass(frozen=True)
class SynthSpec:
    seed: int = 0
    n_static: int = 1200
    n_dynamic: int = 120
    camera_count: int = 3
    frame_count: int = 20
    frame_rate: float = 400.0
    motion_model: str = PLUME
    shutter: str = GLOBAL
    line_time: float = 0.0
    led_overlay: bool = False
    strip_toggle_period: float = 2.5e-4
    width: int = 64
    height: int = 64
    focal: float = 60.0
    rigid_velocity: tuple = (0.0, 0.05, 0.0)  # meters per frame
    camera_offsets: Optional[tuple] = None  # seconds added to each camera's frame clock
    mono_noise: float = 0.004
    stereo_noise: float = 0.002
    stereo_holes: float = 0.1

    def __post_init__(self):
        for name in ("n_static", "n_dynamic", "frame_count"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be >= 0")
        if self.camera_count < 1:
            raise ValidationError("camera_count must be >= 1")
        if not self.frame_rate > 0:
            raise ValidationError("frame_rate must be positive")
        if self.motion_model not in (RIGID, PLUME):
            raise ValidationError(f"unknown motion model {self.motion_model!r}")
        if self.shutter not in (GLOBAL, ROLLING):
            raise ValidationError(f"unknown shutter {self.shutter!r}")
        if self.shutter == ROLLING and not self.line_time > 0:
            raise ValidationError("a rolling shutter needs line_time > 0")
        if self.camera_offsets is not None and len(self.camera_offsets) != self.camera_count:
            raise ValidationError("camera_offsets needs one entry per camera")
        if min(self.width, self.height) < 16:
            raise ValidationError("images must be at least 16x16")
        object.__setattr__(self, "rigid_velocity", tuple(float(v) for v in self.rigid_velocity))
        if self.camera_offsets is not None:
            object.__setattr__(self, "camera_offsets", tuple(float(v) for v in self.camera_offsets))

    @property
    def frame_time(self) -> float:
        return 1.0 / self.frame_rate

    def frame_times(self, camera: int = 0) -> np.ndarray:
        offset = 0.0 if self.camera_offsets is None else self.camera_offsets[camera]
        return np.arange(self.frame_count) * self.frame_time + offset

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict) -> "SynthSpec":
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValidationError(f"unknown synth settings {sorted(unknown)}")
        d = dict(d)
        for key in ("rigid_velocity", "camera_offsets"):
            if d.get(key) is not None:
                d[key] = tuple(d[key])
        return cls(**d)


def holdout_frames(frame_count: int, every: int = HOLDOUT_EVERY) -> list[int]:
    """Every ``every``-th frame (1-based), i.e. indices ``every-1, 2*every-1, ...``."""
    if every < 1:
        raise ValidationError("holdout interval must be >= 1")
    return [k for k in range(frame_count) if k % every == every - 1]


def make_cameras(spec: SynthSpec) -> list[Camera]:
    n = spec.camera_count
    azimuths = np.zeros(1) if n == 1 else np.linspace(-30.0, 30.0, n)
    intr = Intrinsics(spec.focal, spec.focal, (spec.width - 1) / 2, (spec.height - 1) / 2, spec.width, spec.height)
    readout = ReadoutSchedule(spec.line_time if spec.shutter == ROLLING else 0.0)
    cams = []
    for az in np.radians(azimuths):
        eye = (CAMERA_RADIUS * math.sin(az), CAMERA_HEIGHT, -CAMERA_RADIUS * math.cos(az))
        cams.append(Camera(intr, look_at(eye, LOOK_TARGET), readout))
    return cams


def _texture(u, v, phase):
    """Smooth color pattern on a surface parameterized by ``(u, v)`` meters."""
    r = 0.35 + 0.15 * np.sin(2.1 * u + phase[0]) * np.cos(1.7 * v + phase[1])
    g = 0.30 + 0.12 * np.sin(1.3 * u + 2.0 * v + phase[2])
    b = 0.25 + 0.10 * np.cos(2.7 * v - 0.8 * u + phase[3])
    return np.stack([r, g, b], axis=-1)


def static_layer(n: int, rng: np.random.Generator) -> StaticGaussians:
    """Wall ``x in [-4.5, 4.5], y in [0, 3.2]`` at z = 1 and floor ``z in [-1.8, 1]`` at y = 0."""
    if n == 0:
        return StaticGaussians.empty()
    wall_area, floor_area = 9.0 * 3.2, 9.0 * 2.8
    n_wall = int(round(n * wall_area / (wall_area + floor_area)))
    n_floor = n - n_wall
    phase = rng.uniform(0, 2 * np.pi, 4)

    def grid(count, w, h):
        nx = max(1, int(round(math.sqrt(count * w / h))))
        ny = max(1, -(-count // nx))
        a, b = np.meshgrid((np.arange(nx) + 0.5) / nx * w, (np.arange(ny) + 0.5) / ny * h)
        pts = np.stack([a.ravel(), b.ravel()], axis=1)[:count]
        return pts, max(w / nx, h / ny)

    wall, ws = grid(n_wall, 9.0, 3.2)
    floor, fs = grid(n_floor, 9.0, 2.8)
    wall_pos = np.stack([wall[:, 0] - 4.5, wall[:, 1], np.full(len(wall), 1.0)], axis=1)
    floor_pos = np.stack([floor[:, 0] - 4.5, np.zeros(len(floor)), floor[:, 1] - 1.8], axis=1)
    # flat discs: thin along the surface normal
    wall_scale = np.tile([0.6 * ws, 0.6 * ws, 0.01], (len(wall), 1))
    floor_scale = np.tile([0.6 * fs, 0.01, 0.6 * fs], (len(floor), 1))
    pos = np.concatenate([wall_pos, floor_pos])
    color = np.concatenate([_texture(wall_pos[:, 0], wall_pos[:, 1], phase),
                            _texture(floor_pos[:, 0], floor_pos[:, 2] + 5.0, phase)])
    return make_static(pos, np.concatenate([wall_scale, floor_scale]), color, 0.95)


def dynamic_layer(spec: SynthSpec, rng: np.random.Generator) -> DynamicGaussians:
    n = spec.n_dynamic
    if n == 0:
        return DynamicGaussians.empty()
    ft = spec.frame_time
    duration = max(spec.frame_count - 1, 1) * ft
    if spec.motion_model == RIGID:
        pos = np.c_[rng.normal(0, 0.08, n), rng.uniform(0.1, 0.4, n), rng.normal(0, 0.08, n)]
        scale = rng.uniform(0.03, 0.05, n)
        color = np.c_[np.ones(n), rng.uniform(0.5, 0.8, n), rng.uniform(0.1, 0.3, n)]
        velocity = np.asarray(spec.rigid_velocity) / ft
        # long lifespan: constant opacity over the sequence
        return make_dynamic(pos, scale, color, 0.7, 0.0, 1e3 * max(duration, ft), velocity)
    # buoyant plume: rising blobs with a per-Gaussian sinusoidal sway
    t_mu = rng.uniform(-3 * ft, duration + 3 * ft, n)
    t_sigma = np.full(n, 3.0 * ft)
    rise = rng.uniform(0.006, 0.012, n) / ft  # m/s
    phase = rng.uniform(0, 2 * np.pi, n)
    sway = 0.003 / ft
    velocity = np.c_[sway * np.sin(phase), rise, sway * np.cos(phase)]
    pos = np.c_[rng.normal(0, 0.06, n), rng.uniform(0.05, 0.5, n), rng.normal(0, 0.06, n)]
    scale = rng.uniform(0.035, 0.06, n)
    color = np.c_[np.ones(n), rng.uniform(0.45, 0.8, n), rng.uniform(0.05, 0.25, n)]
    return make_dynamic(pos, scale, color, 0.75, t_mu, t_sigma, velocity)


def build_scene(spec: SynthSpec) -> GaussianScene:
    rng = np.random.default_rng(spec.seed)
    statics = static_layer(spec.n_static, rng)
    dynamics = dynamic_layer(spec, rng)
    return GaussianScene(statics, dynamics, BACKGROUND)


@dataclass(eq=False)
class FrameRender:
    color: np.ndarray
    depth: DepthMap
    flame_depth: DepthMap
    mask: np.ndarray
    flow: FlowMap


def render_frame(scene: GaussianScene, camera: Camera, t: float, frame_time: float, shutter: str = GLOBAL) -> FrameRender:
    """Color, depth, dynamic mask, flame depth hint and forward flow to ``t + frame_time``."""
    req = RenderRequest(camera, t, shutter)
    raster = Rasterization(scene, req)
    out = raster.output
    ns, nd = len(scene.statics), len(scene.dynamics)
    h, w = camera.height, camera.width
    if nd == 0:
        empty = np.zeros((h, w), dtype=bool)
        return FrameRender(out.color, out.depth, DepthMap(np.zeros((h, w)), empty), empty,
                           FlowMap(np.zeros((h, w, 2)), np.ones((h, w), dtype=bool)))
    dyn = scene.dynamics
    times = raster.times
    x = dyn.position + np.nan_to_num(times - dyn.t_mu)[:, None] * dyn.velocity
    feat = np.zeros((ns + nd, 7))
    feat[ns:, 0] = 1.0
    feat[ns:, 1:4] = x
    feat[ns:, 4:7] = dyn.velocity * frame_time
    acc = raster.composite(feat)
    weight = acc[..., 0]
    have = weight >= FLOW_WEIGHT
    safe = np.where(have, weight, 1.0)[..., None]
    x_bar = acc[..., 1:4] / safe
    d_bar = acc[..., 4:7] / safe
    uv0, z0 = project_points(camera, x_bar.reshape(-1, 3))
    uv1, z1 = project_points(camera, (x_bar + d_bar).reshape(-1, 3))
    flow = (uv1 - uv0).reshape(h, w, 2)
    ok = have & np.isfinite(flow).all(axis=2) & (z0.reshape(h, w) > 0) & (z1.reshape(h, w) > 0)
    flow = np.where(ok[..., None], flow, 0.0)
    flame = DepthMap(np.where(ok, z0.reshape(h, w), 0.0), ok)
    mask = weight >= MASK_WEIGHT
    return FrameRender(out.color, out.depth, flame, mask, FlowMap(flow, ok))


def distort_depth(depth: DepthMap, a: float, b: float, noise: float, rng: np.random.Generator) -> DepthMap:
    """``a * depth + b`` plus Gaussian noise, as a monocular estimator would report it."""
    values = a * depth.values + b + rng.normal(0.0, noise, depth.shape)
    return DepthMap(np.where(depth.valid, values, 0.0), depth.valid)


@dataclass(eq=False)
class SynthBundle:
    spec: SynthSpec
    scene: GaussianScene
    cameras: list
    frames: list  # [camera][frame] -> HxWx3
    depths: list
    flame_depths: list
    masks: list
    flows: list  # [camera][frame] for frame -> frame + 1
    mono: list  # [camera][frame] affine-distorted composite depth
    stereo: list  # [camera] background depth with holes
    mono_static: list  # [camera] affine-distorted background depth
    mono_affine: list  # [camera] (a, b)
    led_layout: Optional[LedLayout] = None
    sync_truth: list = field(default_factory=list)


def generate(spec: SynthSpec) -> SynthBundle:
    """Render the full multi-view sequence with exact auxiliary rasters. Deterministic in ``spec.seed``."""
    scene = build_scene(spec)
    cameras = make_cameras(spec)
    aux_rng = np.random.default_rng([spec.seed, 1])
    static_scene = GaussianScene(scene.statics, DynamicGaussians.empty(), scene.background_color)
    layout = default_layout(spec.height, spec.width, spec.strip_toggle_period) if spec.led_overlay else None
    bundle = SynthBundle(spec, scene, cameras, [], [], [], [], [], [], [], [], [], layout)
    for ci, cam in enumerate(cameras):
        a_c, b_c = aux_rng.uniform(0.4, 0.8), aux_rng.uniform(0.2, 0.6)
        bundle.mono_affine.append((a_c, b_c))
        bg = Rasterization(static_scene, RenderRequest(cam, 0.0)).output.depth
        holes = aux_rng.uniform(size=bg.shape) < spec.stereo_holes
        noisy = bg.values + aux_rng.normal(0.0, spec.stereo_noise, bg.shape)
        bundle.stereo.append(DepthMap(np.where(bg.valid, noisy, 0.0), bg.valid & ~holes))
        bundle.mono_static.append(distort_depth(bg, a_c, b_c, spec.mono_noise, aux_rng))
        per = {"frames": [], "depths": [], "flame": [], "masks": [], "flows": [], "mono": []}
        for k, t in enumerate(spec.frame_times(ci)):
            fr = render_frame(scene, cam, float(t), spec.frame_time, spec.shutter)
            color = fr.color
            if layout is not None:
                color = paint_leds(color, layout, cam.readout, float(t), spec.frame_time, blur_rows=0.7)
            per["frames"].append(color)
            per["depths"].append(fr.depth)
            per["flame"].append(fr.flame_depth)
            per["masks"].append(fr.mask)
            if k < spec.frame_count - 1:
                per["flows"].append(fr.flow)
            per["mono"].append(distort_depth(fr.depth, a_c, b_c, spec.mono_noise, aux_rng))
        bundle.frames.append(per["frames"])
        bundle.depths.append(per["depths"])
        bundle.flame_depths.append(per["flame"])
        bundle.masks.append(per["masks"])
        bundle.flows.append(per["flows"])
        bundle.mono.append(per["mono"])
        if layout is not None:
            bundle.sync_truth.append([{"frame_index": k, "time": float(t)} for k, t in enumerate(spec.frame_times(ci))])
    return bundle


def camera_dir(ci: int) -> str:
    return f"cam{ci:02d}"


def write_bundle(bundle: SynthBundle, out_dir) -> Path:
    """Write the dataset layout consumed by the command-line stages."""
    out = Path(out_dir)
    spec = bundle.spec
    for sub in ("frames", "flows", "depths", "masks"):
        for ci in range(len(bundle.cameras)):
            (out / sub / camera_dir(ci)).mkdir(parents=True, exist_ok=True)
    save_cameras(out / "cameras.json", bundle.cameras)
    write_scene(out / "ground_truth.ply", bundle.scene)
    for ci in range(len(bundle.cameras)):
        cd = camera_dir(ci)
        write_depth(out / "depths" / cd / "stereo.pfm", bundle.stereo[ci])
        write_depth(out / "depths" / cd / "mono.pfm", bundle.mono_static[ci])
        for k in range(spec.frame_count):
            name = f"{k:04d}"
            write_image(out / "frames" / cd / f"{name}.png", bundle.frames[ci][k])
            write_mask(out / "masks" / cd / f"{name}.png", bundle.masks[ci][k])
            write_depth(out / "depths" / cd / f"{name}.pfm", bundle.depths[ci][k])
            write_depth(out / "depths" / cd / f"flame_{name}.pfm", bundle.flame_depths[ci][k])
            write_depth(out / "depths" / cd / f"mono_{name}.pfm", bundle.mono[ci][k])
            if k < spec.frame_count - 1:
                write_flow(out / "flows" / cd / f"{name}.flo", bundle.flows[ci][k])
    if bundle.led_layout is not None:
        bundle.led_layout.save(out / "led_layout.json")
    manifest = {
        "format": "firegs-bundle-1",
        "spec": spec.to_dict(),
        "camera_count": len(bundle.cameras),
        "frame_count": spec.frame_count,
        "frame_rate": spec.frame_rate,
        "frame_times": [spec.frame_times(ci).tolist() for ci in range(len(bundle.cameras))],
        "holdout": holdout_frames(spec.frame_count),
        "mono_affine": [list(ab) for ab in bundle.mono_affine],
        "sync_truth": bundle.sync_truth,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return out


# -- gradient-check probes ----------------------------------------------------

def probe_camera(width: int = 64, height: int = 64) -> Camera:
    intr = Intrinsics(60.0, 60.0, (width - 1) / 2, (height - 1) / 2, width, height)
    return Camera(intr, look_at((0.0, 0.0, -2.5), (0.0, 0.0, 0.0)))


def probe_single() -> GaussianScene:
    """One dynamic Gaussian in front of the probe camera, alive at t = 0."""
    dyn = make_dynamic([[0.05, -0.03, 0.0]], [0.15, 0.1, 0.12], [[0.9, 0.5, 0.2]], 0.7,
                       0.002, 0.01, [[0.4, 0.3, -0.2]],
                       rotation=[[0.9, 0.1, -0.3, 0.2] / np.linalg.norm([0.9, 0.1, -0.3, 0.2])])
    return GaussianScene(StaticGaussians.empty(), dyn, (0.1, 0.1, 0.1))


def probe_mixed(n: int = 50, seed: int = 0) -> GaussianScene:
    """Half static, half dynamic Gaussians at distinct depths.

    Depths are spread at least ~1.4 cm apart so that the parameter steps of a
    finite-difference check never reorder the compositing sequence, which
    would make the loss discontinuous.
    """
    rng = np.random.default_rng(seed)
    z = np.linspace(-0.5, 0.5, n) + rng.uniform(-0.003, 0.003, n)
    rng.shuffle(z)
    pos = np.c_[rng.uniform(-0.4, 0.4, (n, 2)), z]
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    ns = n // 2
    nd = n - ns
    st = make_static(pos[:ns], rng.uniform(0.04, 0.1, (ns, 3)), rng.uniform(0.1, 0.9, (ns, 3)),
                     rng.uniform(0.3, 0.8, ns), q[:ns])
    dy = make_dynamic(pos[ns:], rng.uniform(0.04, 0.1, (nd, 3)), rng.uniform(0.1, 0.9, (nd, 3)),
                      rng.uniform(0.3, 0.8, nd), rng.uniform(-0.005, 0.005, nd), rng.uniform(0.01, 0.02, nd),
                      rng.normal(0, 0.5, (nd, 3)), q[ns:])
    return GaussianScene(st, dy, (0.1, 0.2, 0.3))


def probe_targets(scene: GaussianScene, camera: Camera, t: float = 0.0, seed: int = 0, margin: float = 0.02):
    """Random color and depth targets kept ``margin`` away from the current render.

    The L1 terms are not differentiable where render equals target; keeping
    every pixel clear of that point makes central differences meaningful.
    """
    rng = np.random.default_rng(seed)
    out = Rasterization(scene, RenderRequest(camera, t)).output
    target = rng.uniform(size=out.color.shape)
    d = target - out.color
    target = np.where(np.abs(d) < margin, out.color + np.where(d >= 0, margin, -margin), target)
    depth = 2.5 + rng.normal(0.0, 0.3, out.depth.shape)
    dd = depth - out.depth.values
    depth = np.where(out.depth.valid & (np.abs(dd) < margin), out.depth.values + margin, depth)
    return target, DepthMap.from_array(depth)
