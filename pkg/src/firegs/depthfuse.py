"""Stereo/monocular depth alignment and initial point-cloud fusion."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Camera, backproject_points
from .errors import DegenerateFitError, InsufficientOverlapError, ShapeMismatchError
from .rasters import DepthMap


@dataclass(frozen=True)
class LinearAlignment:
    a: float
    b: float

    def apply(self, values):
        return self.a * np.asarray(values, dtype=np.float64) + self.b


@dataclass(frozen=True, eq=False)
class PointCloud:
    positions: np.ndarray
    colors: np.ndarray

    def __len__(self):
        return len(self.positions)


def fit_alignment(mono: DepthMap, stereo: DepthMap) -> LinearAlignment:
    """Least-squares ``(a, b)`` minimizing ``||a * mono + b - stereo||^2``.

    Only pixels valid in both maps contribute. Sums run in raster order so
    the fit is bit-reproducible.
    """
    if mono.shape != stereo.shape:
        raise ShapeMismatchError(f"mono {mono.shape} vs stereo {stereo.shape}")
    both = mono.valid & stereo.valid
    n = int(both.sum())
    if n < 2:
        raise InsufficientOverlapError(f"only {n} jointly valid pixels")
    x = mono.values[both]
    y = stereo.values[both]
    # centered form of the 2x2 normal equations; better conditioned than raw sums
    xm, ym = x.mean(), y.mean()
    dx = x - xm
    sxx = float(dx @ dx)
    if sxx <= (np.finfo(float).eps * max(abs(xm), 1.0)) ** 2 * n:
        raise DegenerateFitError("monocular depth is constant over the overlap")
    a = float(dx @ (y - ym)) / sxx
    return LinearAlignment(a, float(ym - a * xm))


def alignment_residual(mono: DepthMap, stereo: DepthMap, align: LinearAlignment) -> float:
    both = mono.valid & stereo.valid
    r = align.apply(mono.values[both]) - stereo.values[both]
    return float(r @ r)


def apply_alignment(mono: DepthMap, align: LinearAlignment) -> DepthMap:
    """Affine-map valid depths; results that are not positive become invalid."""
    values = np.where(mono.valid, align.a * mono.values + align.b, 0.0)
    return DepthMap(values, mono.valid & (values > 0))


def fuse_pointcloud(cameras, stereo, aligned_mono, images, stride: int = 2) -> PointCloud:
    """Back-project sampled pixels, preferring stereo depth over aligned mono depth."""
    if not (len(cameras) == len(stereo) == len(aligned_mono) == len(images)):
        raise ShapeMismatchError("cameras, depth maps and images must have equal counts")
    positions, colors = [], []
    for cam, st, mo, img in zip(cameras, stereo, aligned_mono, images):
        shape = (cam.height, cam.width)
        if st.shape != shape or mo.shape != shape or np.shape(img)[:2] != shape:
            raise ShapeMismatchError(f"rasters do not match camera resolution {shape}")
        rows, cols = np.mgrid[0:cam.height:stride, 0:cam.width:stride]
        rows, cols = rows.ravel(), cols.ravel()
        use_stereo = st.valid[rows, cols]
        use_mono = ~use_stereo & mo.valid[rows, cols]
        depth = np.where(use_stereo, st.values[rows, cols], mo.values[rows, cols])
        keep = use_stereo | use_mono
        uv = np.stack([cols[keep], rows[keep]], axis=1).astype(np.float64)
        positions.append(backproject_points(cam, uv, depth[keep]))
        colors.append(np.asarray(img, dtype=np.float64)[rows[keep], cols[keep]])
    if not positions:
        return PointCloud(np.zeros((0, 3)), np.zeros((0, 3)))
    return PointCloud(np.concatenate(positions), np.concatenate(colors))


def fuse_sources(cameras, stereo, aligned_mono, stride: int = 2) -> list[np.ndarray]:
    """Per-camera boolean array telling which sampled pixels came from stereo depth.

    Mirrors the sampling order of :func:`fuse_pointcloud` (kept pixels only).
    """
    out = []
    for cam, st, mo in zip(cameras, stereo, aligned_mono):
        rows, cols = np.mgrid[0:cam.height:stride, 0:cam.width:stride]
        s = st.valid[rows.ravel(), cols.ravel()]
        m = mo.valid[rows.ravel(), cols.ravel()]
        out.append(s[s | m])
    return out
