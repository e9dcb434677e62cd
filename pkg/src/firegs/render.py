"""Forward and backward CPU splatting of static and dynamic Gaussians.

Projection uses the first-order (Jacobian) approximation of the perspective
map, plus a 0.3 px^2 low-pass dilation of every 2D covariance. Per pixel,
splats are composited front to back in global camera-depth order (stable in
scene index order: statics first, then dynamics) until transmittance drops
below 1e-4; the residual transmittance shows the background color.

Dynamic Gaussians are evaluated at a per-Gaussian capture time. With a
global shutter that is the request time; with a rolling shutter it is the
request time plus the readout delay at the Gaussian's projected position
(optionally corrected for its image-plane motion).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _raster
from .camera import Camera, delay_gradient, pixel_delay, project_points
from .errors import NonProjectableError, ValidationError
from .gaussians import GaussianScene, position_at, quat_to_rotmat, sigmoid, temporal_opacity
from .rasters import DepthMap

GLOBAL = "global"
ROLLING = "rolling"

DILATION = 0.3
T_MIN = 1e-4
CUTOFF_SIGMA = 6.0
MIN_POWER = -0.5 * CUTOFF_SIGMA**2
MIN_OPACITY = 1.0 / 255.0
NEAR = 0.01
FRUSTUM_MARGIN = 1.3  # centers beyond 1.3x the half field of view are culled
TILE = 16
DEPTH_MIN_ALPHA = 0.5


@dataclass(frozen=True)
class RenderRequest:
    camera: Camera
    time: float = 0.0
    shutter_mode: str = GLOBAL
    exact_rolling: bool = False

    def __post_init__(self):
        if self.shutter_mode not in (GLOBAL, ROLLING):
            raise ValidationError(f"unknown shutter mode {self.shutter_mode!r}")
        if not math.isfinite(self.time):
            raise ValidationError("render time must be finite")

    @property
    def image_size(self):
        return self.camera.width, self.camera.height


@dataclass(eq=False)
class RenderOutput:
    color: np.ndarray
    depth: DepthMap
    alpha: np.ndarray


def _rolling_delays(req: RenderRequest, position, t_mu, velocity):
    """Readout delays for Gaussians at their request-time projections (NaN if behind)."""
    cam = req.camera
    x = position + (req.time - t_mu)[:, None] * velocity
    p = cam.pose.apply(x)
    k = cam.intrinsics
    z = p[:, 2]
    front = z > 0
    zs = np.where(front, z, 1.0)
    uv = np.stack([k.fx * p[:, 0] / zs + k.cx, k.fy * p[:, 1] / zs + k.cy], axis=1)
    delay = np.asarray(pixel_delay(cam.readout, uv, cam.height), dtype=np.float64).reshape(-1)
    if req.exact_rolling:
        vc = velocity @ cam.pose.rotation.T
        v_img = np.stack([k.fx * (vc[:, 0] - p[:, 0] / zs * vc[:, 2]) / zs,
                          k.fy * (vc[:, 1] - p[:, 1] / zs * vc[:, 2]) / zs], axis=1)
        denom = 1.0 - v_img @ delay_gradient(cam.readout)
        # past the singularity the linearization is meaningless; keep t(p0)
        delay = np.where(denom > 0, delay / np.where(denom > 0, denom, 1.0), delay)
    return np.where(front, delay, np.nan)


def capture_times(scene: GaussianScene, req: RenderRequest) -> np.ndarray:
    """Effective capture time of every dynamic Gaussian (NaN when behind the camera)."""
    dyn = scene.dynamics
    if req.shutter_mode == GLOBAL or req.camera.readout.is_global or len(dyn) == 0:
        return np.full(len(dyn), float(req.time))
    return req.time + _rolling_delays(req, dyn.position, dyn.t_mu, dyn.velocity)


def effective_capture_time(req: RenderRequest, g) -> float:
    """Capture time of a single dynamic Gaussian under ``req``'s shutter model."""
    x = np.reshape(position_at(g, req.time), 3)
    if not req.camera.pose.apply(x)[2] > 0:
        raise NonProjectableError("Gaussian is behind the camera")
    if req.shutter_mode == GLOBAL or req.camera.readout.is_global:
        return float(req.time)
    delay = _rolling_delays(req, np.reshape(g.position, (1, 3)), np.reshape(g.t_mu, (1,)),
                            np.reshape(g.velocity, (1, 3)))
    return float(req.time + delay[0])


class Rasterization:
    """One forward render, keeping what the backward pass needs."""

    def __init__(self, scene: GaussianScene, req: RenderRequest, times=None):
        self.scene, self.req = scene, req
        cam = req.camera
        st, dy = scene.statics, scene.dynamics
        self.n_static, n_dyn = len(st), len(dy)
        self.times = capture_times(scene, req) if times is None else np.asarray(times, dtype=np.float64)

        if n_dyn:
            dt = self.times - dy.t_mu
            self.sigma_t = temporal_opacity(dy, self.times)
            dyn_pos = dy.position + np.nan_to_num(dt)[:, None] * dy.velocity
        else:
            self.sigma_t = np.zeros(0)
            dyn_pos = np.zeros((0, 3))
        self.means = np.concatenate([st.position, dyn_pos])
        self.log_scale = np.concatenate([st.log_scale, dy.log_scale])
        self.rotation = np.concatenate([st.rotation, dy.rotation])
        self.base_opacity = sigmoid(np.concatenate([st.opacity_logit, dy.opacity_logit]))
        self.temporal = np.concatenate([np.ones(self.n_static), self.sigma_t])
        color = np.concatenate([st.color, dy.color])
        n = len(self.means)
        self.n = n

        W = cam.pose.rotation
        k = cam.intrinsics
        p = self.means @ W.T + cam.pose.translation
        self.p = p
        opac = self.base_opacity * self.temporal
        finite_t = np.concatenate([np.ones(self.n_static, dtype=bool), np.isfinite(self.times)])
        keep = (p[:, 2] > NEAR) & (opac >= MIN_OPACITY) & finite_t

        z = np.where(keep, p[:, 2], 1.0)
        J = np.zeros((n, 2, 3))
        J[:, 0, 0] = k.fx / z
        J[:, 0, 2] = -k.fx * p[:, 0] / z**2
        J[:, 1, 1] = k.fy / z
        J[:, 1, 2] = -k.fy * p[:, 1] / z**2
        self.J = J
        self.cov3 = covariances_from(self.rotation, self.log_scale)
        T = J @ W
        self.T = T
        cov2 = T @ self.cov3 @ np.swapaxes(T, 1, 2)
        a = cov2[:, 0, 0] + DILATION
        b = cov2[:, 0, 1]
        c = cov2[:, 1, 1] + DILATION
        det = a * c - b * b
        keep &= det > 0
        det = np.where(keep, det, 1.0)
        self.cov2 = np.stack([a, b, c], axis=1)
        self.det = det
        conic = np.stack([c / det, -b / det, a / det], axis=1)
        mean2d = np.stack([k.fx * p[:, 0] / z + k.cx, k.fy * p[:, 1] / z + k.cy], axis=1)
        keep &= (np.abs(mean2d[:, 0] - k.cx) <= FRUSTUM_MARGIN * k.width / 2) & \
            (np.abs(mean2d[:, 1] - k.cy) <= FRUSTUM_MARGIN * k.height / 2)
        mid = 0.5 * (a + c)
        lam = mid + np.sqrt(np.maximum(mid * mid - det, 0.0))
        radius = np.ceil(CUTOFF_SIGMA * np.sqrt(lam))
        mean2d = np.where(keep[:, None], mean2d, 0.0)
        radius = np.where(keep, radius, 0.0)
        xmin = np.floor(mean2d[:, 0] - radius)
        xmax = np.ceil(mean2d[:, 0] + radius)
        ymin = np.floor(mean2d[:, 1] - radius)
        ymax = np.ceil(mean2d[:, 1] + radius)
        keep &= (xmax >= 0) & (xmin <= k.width - 1) & (ymax >= 0) & (ymin <= k.height - 1)
        self.keep = keep
        clip = lambda v, hi: np.clip(v, 0, hi).astype(np.int64)  # noqa: E731
        self.bbox = (clip(xmin, k.width - 1), clip(xmax, k.width - 1),
                     clip(ymin, k.height - 1), clip(ymax, k.height - 1))

        self.mean2d = np.ascontiguousarray(mean2d)
        self.conic = np.ascontiguousarray(np.where(keep[:, None], conic, 0.0))
        self.opac = np.ascontiguousarray(np.where(keep, opac, 0.0))
        feat = np.zeros((n, 5))
        feat[:, :3] = color
        feat[:, 3] = z
        feat[:, 4] = 1.0
        self.feat = feat
        self.bg = np.concatenate([scene.background_color, [0.0, 0.0]])

        kept = np.flatnonzero(keep)
        self.order = kept[np.argsort(p[kept, 2], kind="stable")]
        self.ntx = -(-k.width // TILE)
        self.nty = -(-k.height // TILE)
        self.start, self.entries = _raster.bin_tiles(self.order, *self.bbox, TILE, self.ntx, self.nty)
        raw = _raster.forward(self.start, self.entries, self.mean2d, self.conic, self.opac, self.feat, self.bg,
                              k.height, k.width, TILE, self.ntx, MIN_POWER, T_MIN)
        self.raw = raw
        acc = raw[..., 4]
        valid = acc >= DEPTH_MIN_ALPHA
        depth = np.where(valid, raw[..., 3] / np.where(valid, acc, 1.0), 0.0)
        self.depth_valid = valid
        self.output = RenderOutput(color=raw[..., :3].copy(), depth=DepthMap(depth, valid),
                                   alpha=np.clip(acc, 0.0, 1.0))

    def composite(self, features: np.ndarray) -> np.ndarray:
        """Composite arbitrary ``(N, m)`` per-Gaussian features with this render's weights.

        Rows follow scene order (statics, then dynamics); the background
        contributes zero.
        """
        features = np.ascontiguousarray(features, dtype=np.float64)
        if features.ndim != 2 or len(features) != self.n:
            raise ValidationError(f"features must be ({self.n}, m), got {features.shape}")
        k = self.req.camera.intrinsics
        return _raster.forward(self.start, self.entries, self.mean2d, self.conic, self.opac, features,
                               np.zeros(features.shape[1]), k.height, k.width, TILE, self.ntx, MIN_POWER, T_MIN)

    def backward(self, grad_color=None, grad_depth=None, grad_alpha=None) -> dict:
        """Gradients of a scalar loss w.r.t. every scene parameter.

        ``grad_*`` are dL/d(output) rasters; depth gradients are only used on
        valid depth pixels. Returns ``{"statics": {...}, "dynamics": {...}}``.
        """
        cam = self.req.camera
        k = cam.intrinsics
        h, w = k.height, k.width
        go = np.zeros((h, w, 5))
        if grad_color is not None:
            go[..., :3] = grad_color
        acc = self.raw[..., 4]
        if grad_alpha is not None:
            go[..., 4] = grad_alpha
        if grad_depth is not None:
            gd = np.where(self.depth_valid, grad_depth, 0.0)
            safe = np.where(self.depth_valid, acc, 1.0)
            go[..., 3] = gd / safe
            go[..., 4] -= gd * self.output.depth.values / safe
        e = _raster.backward(self.start, self.entries, self.mean2d, self.conic, self.opac, self.feat, self.bg,
                             go, h, w, TILE, self.ntx, MIN_POWER, T_MIN)
        g_mean2d, g_conic, g_opac, g_feat = _raster.scatter(self.entries, *e, self.n)
        return self._chain(g_mean2d, g_conic, g_opac, g_feat)

    def _chain(self, g_mean2d, g_conic, g_opac, g_feat):
        cam = self.req.camera
        k = cam.intrinsics
        W = cam.pose.rotation
        p = self.p
        z = np.where(self.keep, p[:, 2], 1.0)
        a, b, c = self.cov2.T
        det = self.det
        gA, gB, gC = g_conic.T
        d2 = det * det
        # conic = (c, -b, a) / det
        g_a = gA * (-c * c / d2) + gB * (b * c / d2) + gC * (-b * b / d2)
        g_b = gA * (2 * b * c / d2) + gB * (-1 / det - 2 * b * b / d2) + gC * (2 * a * b / d2)
        g_c = gA * (-b * b / d2) + gB * (a * b / d2) + gC * (-a * a / d2)
        G2 = np.zeros((self.n, 2, 2))
        G2[:, 0, 0] = g_a
        G2[:, 0, 1] = G2[:, 1, 0] = 0.5 * g_b
        G2[:, 1, 1] = g_c
        T = self.T
        g_cov3 = np.swapaxes(T, 1, 2) @ G2 @ T
        g_T = 2.0 * G2 @ T @ self.cov3
        g_J = g_T @ W.T

        g_p = np.zeros((self.n, 3))
        gu, gv = g_mean2d.T
        g_p[:, 0] = gu * k.fx / z - g_J[:, 0, 2] * k.fx / z**2
        g_p[:, 1] = gv * k.fy / z - g_J[:, 1, 2] * k.fy / z**2
        g_p[:, 2] = (-gu * k.fx * p[:, 0] / z**2 - gv * k.fy * p[:, 1] / z**2
                     - g_J[:, 0, 0] * k.fx / z**2 + g_J[:, 0, 2] * 2 * k.fx * p[:, 0] / z**3
                     - g_J[:, 1, 1] * k.fy / z**2 + g_J[:, 1, 2] * 2 * k.fy * p[:, 1] / z**3
                     + g_feat[:, 3])
        g_p[~self.keep] = 0.0
        g_x = g_p @ W

        g_log_scale, g_rot = _covariance_backward(self.rotation, self.log_scale, g_cov3)
        g_op_eff = np.where(self.keep, g_opac, 0.0)
        s = self.base_opacity
        g_logit = g_op_eff * self.temporal * s * (1 - s)
        g_color = g_feat[:, :3]

        ns = self.n_static
        statics = {"position": g_x[:ns], "log_scale": g_log_scale[:ns], "rotation": g_rot[:ns],
                   "color": g_color[:ns], "opacity_logit": g_logit[:ns]}
        dy = self.scene.dynamics
        if len(dy):
            dt = self.times - dy.t_mu
            g_xd = g_x[ns:]
            g_sig = g_op_eff[ns:] * s[ns:]
            ts = dy.t_sigma
            dynamics = {"position": g_xd, "log_scale": g_log_scale[ns:], "rotation": g_rot[ns:],
                        "color": g_color[ns:], "opacity_logit": g_logit[ns:],
                        "velocity": g_xd * dt[:, None],
                        "t_mu": -(g_xd * dy.velocity).sum(axis=1) + g_sig * self.sigma_t * dt / ts**2,
                        "t_sigma": g_sig * self.sigma_t * dt**2 / ts**3}
            for v in dynamics.values():
                v[~np.isfinite(v)] = 0.0
        else:
            dynamics = {name: np.zeros_like(getattr(dy, name)) for name in dy.field_names}
        return {"statics": statics, "dynamics": dynamics}


def covariances_from(rotation, log_scale):
    M = quat_to_rotmat(rotation) * np.exp(log_scale)[:, None, :]
    return M @ np.swapaxes(M, 1, 2)


def _covariance_backward(rotation, log_scale, g_cov3):
    q_raw = np.asarray(rotation, dtype=np.float64)
    norm = np.linalg.norm(q_raw, axis=1, keepdims=True)
    q = q_raw / norm
    R = quat_to_rotmat(q)
    s = np.exp(log_scale)
    M = R * s[:, None, :]
    g_sym = 0.5 * (g_cov3 + np.swapaxes(g_cov3, 1, 2))
    g_M = 2.0 * g_sym @ M
    g_s = np.einsum("njk,njk->nk", g_M, R)
    g_log_scale = g_s * s
    g_R = g_M * s[:, None, :]
    w, x, y, zq = q.T
    zero = np.zeros_like(w)
    # dR/dq for each of (w, x, y, z); entries laid out row-major over R
    dR = np.stack([
        np.stack([zero, -2 * zq, 2 * y, 2 * zq, zero, -2 * x, -2 * y, 2 * x, zero], axis=1),
        np.stack([zero, 2 * y, 2 * zq, 2 * y, -4 * x, -2 * w, 2 * zq, 2 * w, -4 * x], axis=1),
        np.stack([-4 * y, 2 * x, 2 * w, 2 * x, zero, 2 * zq, -2 * w, 2 * zq, -4 * y], axis=1),
        np.stack([-4 * zq, -2 * w, 2 * x, 2 * w, -4 * zq, 2 * y, 2 * x, 2 * y, zero], axis=1),
    ], axis=1)
    g_qn = np.einsum("nkj,nj->nk", dR, g_R.reshape(-1, 9))
    g_q = (g_qn - q * (q * g_qn).sum(axis=1, keepdims=True)) / norm
    return g_log_scale, g_q


def render(scene: GaussianScene, req: RenderRequest, times=None) -> RenderOutput:
    """Render color, alpha-normalized depth and accumulated alpha."""
    return Rasterization(scene, req, times).output


def render_rolling(scene: GaussianScene, req: RenderRequest) -> RenderOutput:
    if req.shutter_mode != ROLLING:
        raise ValidationError("render_rolling needs a rolling-shutter request")
    return render(scene, req)


def splat_centers(scene: GaussianScene, req: RenderRequest, times=None) -> np.ndarray:
    """Projected 2D centers of the dynamic Gaussians as rendered under ``req``."""
    times = capture_times(scene, req) if times is None else times
    x = position_at(scene.dynamics, times)
    uv, _ = project_points(req.camera, x)
    return uv
