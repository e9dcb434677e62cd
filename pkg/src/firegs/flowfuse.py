"""Lift per-view 2D optical flow to 3D and fuse it on a voxel grid.

For a 3D point ``x`` and camera ``i`` the flow at ``pi_i(x)`` is lifted to
a 3D displacement ``u_i`` by back-projecting the advected pixel at the
camera-frame depth of ``x``. The fused flow ``F`` is the ridge solution of
``u_i^T F = u_i^T u_i`` over all observing cameras.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Camera, backproject_points, project_points
from .errors import NoObservationError, NotObservedError, ValidationError
from .rasters import FlowMap

DEFAULT_ALPHA0 = 0.1
DEFAULT_DEPTH_TOLERANCE = 1.5  # in voxel sizes
MIN_VIEWS = 2


@dataclass(frozen=True)
class GridSpec:
    """Regular grid; ``origin`` is the minimum corner of voxel ``(0, 0, 0)``."""

    origin: tuple
    voxel_size: float
    dims: tuple

    def __post_init__(self):
        if not self.voxel_size > 0:
            raise ValidationError("voxel_size must be positive")
        if len(self.dims) != 3 or min(self.dims) < 1:
            raise ValidationError(f"grid dims must be three positive ints, got {self.dims}")
        object.__setattr__(self, "origin", tuple(float(v) for v in self.origin))
        object.__setattr__(self, "dims", tuple(int(v) for v in self.dims))

    def centers(self, idx=None) -> np.ndarray:
        if idx is None:
            idx = np.indices(self.dims).reshape(3, -1).T
        return np.asarray(self.origin) + (np.asarray(idx, dtype=np.float64) + 0.5) * self.voxel_size


@dataclass(eq=False)
class VoxelFlowField:
    origin: np.ndarray
    voxel_size: float
    dims: tuple
    flow: np.ndarray  # (nx, ny, nz, 3), meters per frame
    confidence: np.ndarray
    occupancy: np.ndarray

    @property
    def grid(self) -> GridSpec:
        return GridSpec(tuple(self.origin), self.voxel_size, tuple(self.dims))

    def occupied_indices(self) -> np.ndarray:
        """``(n, 3)`` voxel indices of occupied voxels in C order."""
        return np.argwhere(self.occupancy)

    def voxel_centers(self, idx) -> np.ndarray:
        return self.grid.centers(idx)

    @classmethod
    def empty(cls, grid: GridSpec) -> "VoxelFlowField":
        return cls(np.asarray(grid.origin), grid.voxel_size, grid.dims, np.zeros(grid.dims + (3,)),
                   np.zeros(grid.dims), np.zeros(grid.dims, dtype=bool))


def sample_flow(flow: FlowMap, uv: np.ndarray):
    """Bilinear flow lookup at ``(N, 2)`` image points.

    A sample is valid only if it is in bounds and every neighbor with a
    non-zero bilinear weight is valid. Returns ``(values, ok)``.
    """
    uv = np.asarray(uv, dtype=np.float64).reshape(-1, 2)
    h, w = flow.shape
    u, v = uv[:, 0], uv[:, 1]
    ok = np.isfinite(u) & np.isfinite(v) & (u >= 0) & (u <= w - 1) & (v >= 0) & (v <= h - 1)
    us = np.where(ok, u, 0.0)
    vs = np.where(ok, v, 0.0)
    x0 = np.minimum(np.floor(us).astype(np.int64), w - 1)
    y0 = np.minimum(np.floor(vs).astype(np.int64), h - 1)
    fx, fy = us - x0, vs - y0
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    out = np.zeros((len(uv), 2))
    for yy, xx, wgt in ((y0, x0, (1 - fx) * (1 - fy)), (y0, x1, fx * (1 - fy)),
                        (y1, x0, (1 - fx) * fy), (y1, x1, fx * fy)):
        ok &= (wgt == 0) | flow.valid[yy, xx]
        out += wgt[:, None] * flow.values[yy, xx]
    out[~ok] = np.nan
    return out, ok


def backproject_flows(camera: Camera, flow: FlowMap, x: np.ndarray):
    """Vectorized lifting of ``(N, 3)`` points. Returns ``(u, observed)``."""
    x = np.asarray(x, dtype=np.float64).reshape(-1, 3)
    uv, z = project_points(camera, x)
    f, ok = sample_flow(flow, uv)
    ok &= z > 0
    u = np.full_like(x, np.nan)
    if ok.any():
        moved = backproject_points(camera, uv[ok] + f[ok], z[ok])
        u[ok] = moved - x[ok]
    return u, ok


def backproject_flow(camera: Camera, flow: FlowMap, x) -> np.ndarray:
    """3D displacement implied by ``flow`` at the projection of ``x``, at the depth of ``x``."""
    u, ok = backproject_flows(camera, flow, np.asarray(x, dtype=np.float64).reshape(1, 3))
    if not ok[0]:
        raise NotObservedError(f"point {tuple(np.ravel(x))} has no valid flow sample in this view")
    return u[0]


def regularization_weight(observations: np.ndarray, alpha0: float) -> float:
    u = np.asarray(observations, dtype=np.float64).reshape(-1, 3)
    return alpha0 / len(u) * float(np.sum(u * u))


def _confidence(singular_values: np.ndarray) -> np.ndarray:
    # A has 3 columns; fewer than 3 rows means a zero singular value
    s = singular_values
    top = s[..., 0]
    low = s[..., -1] if s.shape[-1] == 3 else np.zeros_like(top)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(top > 0, low / np.where(top > 0, top, 1.0), 0.0)


def solve_voxel_flow(observations, alpha0: float = DEFAULT_ALPHA0):
    """Tikhonov-regularized fused 3D flow for one voxel.

    Minimizes ``||A F - d||^2 + alpha^2 ||F||^2`` with rows ``A_i = u_i^T``,
    ``d_i = u_i^T u_i`` and ``alpha = alpha0 / m * sum ||u_i||^2``, via the
    SVD of the stacked system ``[A; alpha I] F = [d; 0]``. Returns
    ``(F, confidence)`` where confidence is ``s_min(A) / s_max(A)``.
    """
    U = np.asarray(observations, dtype=np.float64).reshape(-1, 3)
    m = len(U)
    if m == 0:
        raise NoObservationError("voxel has no observations")
    d = np.einsum("ij,ij->i", U, U)
    if not d.any():
        return np.zeros(3), 0.0
    alpha = alpha0 / m * d.sum()
    aug = np.vstack([U, alpha * np.eye(3)])
    rhs = np.concatenate([d, np.zeros(3)])
    Us, s, Vt = np.linalg.svd(aug, full_matrices=False)
    cutoff = s[0] * max(aug.shape) * np.finfo(float).eps
    inv = np.where(s > cutoff, 1.0 / np.where(s > cutoff, s, 1.0), 0.0)
    F = Vt.T @ (inv * (Us.T @ rhs))
    conf = float(_confidence(np.linalg.svd(U, compute_uv=False)))
    return F, conf


def solve_voxel_flows(U: np.ndarray, observed: np.ndarray, alpha0: float = DEFAULT_ALPHA0):
    """Batched :func:`solve_voxel_flow` over ``(K, m, 3)`` observation stacks.

    Rows with ``observed == False`` are ignored (treated as zero rows, which
    leave the least-squares problem unchanged, and excluded from ``m``).
    """
    U = np.where(observed[..., None], np.nan_to_num(U), 0.0)
    m = observed.sum(axis=1)
    if (m == 0).any():
        raise NoObservationError("every voxel needs at least one observation")
    d = np.einsum("kij,kij->ki", U, U)
    alpha = alpha0 / m * d.sum(axis=1)
    K = len(U)
    aug = np.concatenate([U, alpha[:, None, None] * np.eye(3)[None]], axis=1)
    rhs = np.concatenate([d, np.zeros((K, 3))], axis=1)
    Us, s, Vt = np.linalg.svd(aug, full_matrices=False)
    cutoff = s[:, :1] * max(aug.shape[1:]) * np.finfo(float).eps
    safe = np.where(s > cutoff, s, 1.0)
    inv = np.where(s > cutoff, 1.0 / safe, 0.0)
    coeff = inv * np.einsum("kji,kj->ki", Us, rhs)
    F = np.einsum("kji,kj->ki", Vt, coeff)
    zero = ~d.any(axis=1)
    F[zero] = 0.0
    conf = _confidence(np.linalg.svd(U, compute_uv=False))
    conf[zero] = 0.0
    return F, conf


def fuse_flow_grid(cameras, flows, depth_hints, masks, grid: GridSpec, alpha0: float = DEFAULT_ALPHA0,
                   depth_tolerance: float = DEFAULT_DEPTH_TOLERANCE, min_views: int = MIN_VIEWS) -> VoxelFlowField:
    """Fuse per-view flows into a voxel flow field.

    A voxel counts as seen by a camera when its center projects inside the
    camera's dynamic mask (nearest pixel), its camera depth lies within
    ``depth_tolerance`` voxel sizes of the depth hint there (skipped when the
    hint is None), and the flow can be sampled. Voxels seen by at least
    ``min_views`` cameras are occupied and solved from those cameras only.
    """
    if not cameras:
        raise ValidationError("fuse_flow_grid needs at least one camera")
    if not (len(cameras) == len(flows) == len(depth_hints) == len(masks)):
        raise ValidationError("cameras, flows, depth hints and masks must have equal counts")
    centers = grid.centers()
    K, m = len(centers), len(cameras)
    U = np.zeros((K, m, 3))
    seen = np.zeros((K, m), dtype=bool)
    tol = depth_tolerance * grid.voxel_size
    for i, (cam, flow, hint, mask) in enumerate(zip(cameras, flows, depth_hints, masks)):
        uv, z = project_points(cam, centers)
        inb = cam.in_bounds(uv) & (z > 0)
        idx = np.flatnonzero(inb)
        r = np.rint(uv[idx, 1]).astype(np.int64)
        c = np.rint(uv[idx, 0]).astype(np.int64)
        ok = np.asarray(mask, dtype=bool)[r, c]
        if hint is not None:
            ok &= hint.valid[r, c] & (np.abs(z[idx] - hint.values[r, c]) <= tol)
        idx = idx[ok]
        if len(idx) == 0:
            continue
        u, obs = backproject_flows(cam, flow, centers[idx])
        U[idx[obs], i] = u[obs]
        seen[idx[obs], i] = True
    occupied = seen.sum(axis=1) >= min_views
    field = VoxelFlowField.empty(grid)
    occ = np.flatnonzero(occupied)
    if len(occ):
        F, conf = solve_voxel_flows(U[occ], seen[occ], alpha0)
        field.flow.reshape(-1, 3)[occ] = F
        field.confidence.reshape(-1)[occ] = conf
        field.occupancy.reshape(-1)[occ] = True
    return field
