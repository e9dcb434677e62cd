"""Static and time-parameterized 3D Gaussian primitives.

Gaussians are stored as structure-of-arrays sets. Every per-Gaussian field
has a leading axis of length N:

=============== ======== ===========================================
field           shape    meaning
=============== ======== ===========================================
position        (N, 3)   world position (at ``t_mu`` for dynamics)
log_scale       (N, 3)   log of per-axis standard deviation, meters
rotation        (N, 4)   quaternion ``(w, x, y, z)``
color           (N, 3)   RGB in [0, 1]
opacity_logit   (N,)     opacity before the sigmoid
t_mu            (N,)     time center, seconds (dynamics only)
t_sigma         (N,)     lifespan, seconds (dynamics only)
velocity        (N, 3)   meters per second (dynamics only)
=============== ======== ===========================================
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ValidationError

STATIC_FIELDS = ("position", "log_scale", "rotation", "color", "opacity_logit")
DYNAMIC_FIELDS = STATIC_FIELDS + ("t_mu", "t_sigma", "velocity")
_WIDTH = {"position": 3, "log_scale": 3, "rotation": 4, "color": 3, "opacity_logit": 0,
          "t_mu": 0, "t_sigma": 0, "velocity": 3}

DEFAULT_FLAME_COLOR = (1.0, 0.6, 0.1)
DEFAULT_OPACITY = 0.1


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


@dataclass(eq=False)
class StaticGaussians:
    position: np.ndarray
    log_scale: np.ndarray
    rotation: np.ndarray
    color: np.ndarray
    opacity_logit: np.ndarray

    field_names = STATIC_FIELDS

    def __post_init__(self):
        n = None
        for name in self.field_names:
            width = _WIDTH[name]
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr = arr.reshape(-1, width) if width else arr.reshape(-1)
            if n is None:
                n = arr.shape[0]
            elif arr.shape[0] != n:
                raise ValidationError(f"field {name} has {arr.shape[0]} rows, expected {n}")
            setattr(self, name, arr)
        if n and np.abs(np.linalg.norm(self.rotation, axis=1) - 1.0).max() > 1e-6:
            raise ValidationError("rotation quaternions must be unit norm")
        if not np.isfinite(np.exp(self.log_scale)).all():
            raise ValidationError("scales must be finite")

    def __len__(self):
        return self.position.shape[0]

    @classmethod
    def empty(cls):
        return cls(**{name: np.zeros((0, _WIDTH[name])) if _WIDTH[name] else np.zeros(0)
                      for name in cls.field_names})

    @property
    def opacity(self) -> np.ndarray:
        return sigmoid(self.opacity_logit)

    @property
    def scale(self) -> np.ndarray:
        return np.exp(self.log_scale)

    def copy(self):
        return type(self)(**{name: getattr(self, name).copy() for name in self.field_names})

    def params(self) -> dict:
        return {name: getattr(self, name) for name in self.field_names}

    def replace(self, **updates):
        values = self.params()
        values.update(updates)
        return type(self)(**values)

    def subset(self, index):
        return type(self)(**{name: getattr(self, name)[index] for name in self.field_names})

    def concat(self, other):
        return type(self)(**{name: np.concatenate([getattr(self, name), getattr(other, name)])
                             for name in self.field_names})

    def equal(self, other) -> bool:
        """Bitwise equality of every field."""
        return type(self) is type(other) and all(
            np.array_equal(getattr(self, n), getattr(other, n)) for n in self.field_names)


@dataclass(eq=False)
class DynamicGaussians(StaticGaussians):
    t_mu: np.ndarray = field(default_factory=lambda: np.zeros(0))
    t_sigma: np.ndarray = field(default_factory=lambda: np.zeros(0))
    velocity: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))

    field_names = DYNAMIC_FIELDS

    def __post_init__(self):
        super().__post_init__()
        if len(self) and not (self.t_sigma > 0).all():
            raise ValidationError("t_sigma must be positive")
        if not np.isfinite(self.velocity).all():
            raise ValidationError("velocity must be finite")


@dataclass(eq=False)
class GaussianScene:
    statics: StaticGaussians = field(default_factory=StaticGaussians.empty)
    dynamics: DynamicGaussians = field(default_factory=DynamicGaussians.empty)
    background_color: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.background_color = np.array(self.background_color, dtype=np.float64).reshape(3)

    def copy(self) -> "GaussianScene":
        return GaussianScene(self.statics.copy(), self.dynamics.copy(), self.background_color.copy())

    def equal(self, other) -> bool:
        return (self.statics.equal(other.statics) and self.dynamics.equal(other.dynamics)
                and np.array_equal(self.background_color, other.background_color))

    def __len__(self):
        return len(self.statics) + len(self.dynamics)


def make_static(position, scale, color, opacity, rotation=None) -> StaticGaussians:
    """Build a static set from natural (non-log, non-logit) parameters."""
    position = np.atleast_2d(np.asarray(position, dtype=np.float64))
    n = position.shape[0]
    scale = np.asarray(scale, dtype=np.float64)
    if scale.ndim == 1 and scale.shape[0] == n and n != 3:
        scale = scale[:, None]  # one isotropic scale per Gaussian
    scale = np.broadcast_to(scale, (n, 3))
    rotation = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1)) if rotation is None else rotation
    return StaticGaussians(position, np.log(scale), rotation,
                           np.broadcast_to(color, (n, 3)), np.broadcast_to(logit(opacity), (n,)))


def make_dynamic(position, scale, color, opacity, t_mu, t_sigma, velocity, rotation=None) -> DynamicGaussians:
    s = make_static(position, scale, color, opacity, rotation)
    n = len(s)
    return DynamicGaussians(**s.params(), t_mu=np.broadcast_to(t_mu, (n,)),
                            t_sigma=np.broadcast_to(t_sigma, (n,)),
                            velocity=np.broadcast_to(velocity, (n, 3)))


def position_at(g, t):
    """Linear advection ``x(t) = x0 + (t - t_mu) v``; works on one Gaussian or a set."""
    dt = np.asarray(t, dtype=np.float64) - np.asarray(g.t_mu, dtype=np.float64)
    return np.asarray(g.position) + dt[..., None] * np.asarray(g.velocity)


def temporal_opacity(g, t):
    """Gaussian falloff of opacity around ``t_mu`` with width ``t_sigma``."""
    z = (np.asarray(t, dtype=np.float64) - g.t_mu) / g.t_sigma
    return np.exp(-0.5 * z * z)


def quat_to_rotmat(q: np.ndarray) -> np.ndarray:
    """Rotation matrices for ``(N, 4)`` quaternions ``(w, x, y, z)``, normalized first."""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    return np.stack([
        1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y),
        2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x),
        2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y),
    ], axis=-1).reshape(q.shape[:-1] + (3, 3))


def covariances(gs: StaticGaussians) -> np.ndarray:
    """World-space 3x3 covariances ``R S S^T R^T``."""
    M = quat_to_rotmat(gs.rotation) * np.exp(gs.log_scale)[:, None, :]
    return M @ np.swapaxes(M, 1, 2)


def init_from_flow(field, frame_time: float, t: float, rng_seed: int,
                   color=DEFAULT_FLAME_COLOR, opacity=DEFAULT_OPACITY, voxel_colors=None) -> DynamicGaussians:
    """Seed one dynamic Gaussian per occupied voxel of a fused flow field.

    The Gaussian sits at the voxel center plus a uniform jitter inside the
    voxel, lives around ``t`` with lifespan ``4 * frame_time`` and moves with
    the voxel's flow converted from meters/frame to meters/second.
    ``voxel_colors`` optionally gives an ``(N_occupied, 3)`` color per
    occupied voxel (NaN rows fall back to ``color``).
    """
    if not frame_time > 0:
        raise ValidationError("frame_time must be positive")
    idx = field.occupied_indices()
    n = len(idx)
    if n == 0:
        return DynamicGaussians.empty()
    s = field.voxel_size
    rng = np.random.default_rng(rng_seed)
    jitter = rng.uniform(-s / 2, s / 2, size=(n, 3))
    centers = field.voxel_centers(idx)
    colors = np.broadcast_to(np.asarray(color, dtype=np.float64), (n, 3)).copy()
    if voxel_colors is not None:
        vc = np.asarray(voxel_colors, dtype=np.float64).reshape(n, 3)
        ok = np.isfinite(vc).all(axis=1)
        colors[ok] = np.clip(vc[ok], 0.0, 1.0)
    velocity = field.flow[tuple(idx.T)] / frame_time
    return DynamicGaussians(
        position=centers + jitter,
        log_scale=np.full((n, 3), np.log(s / 2)),
        rotation=np.tile([1.0, 0.0, 0.0, 0.0], (n, 1)),
        color=colors,
        opacity_logit=np.full(n, float(logit(opacity))),
        t_mu=np.full(n, float(t)),
        t_sigma=np.full(n, 4.0 * frame_time),
        velocity=velocity,
    )
