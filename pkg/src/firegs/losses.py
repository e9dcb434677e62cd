"""Image and depth losses with analytic gradients w.r.t. the rendered input."""

from __future__ import annotations

import numpy as np

from .errors import ImageTooSmallError, ShapeMismatchError, UndefinedLossError
from .rasters import DepthMap

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


def _check_pair(a, b):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape:
        raise ShapeMismatchError(f"shape mismatch {a.shape} vs {b.shape}")
    return a, b


def loss_l1(render, target) -> float:
    render, target = _check_pair(render, target)
    return float(np.abs(render - target).mean())


def loss_l1_grad(render, target):
    render, target = _check_pair(render, target)
    return float(np.abs(render - target).mean()), np.sign(render - target) / render.size


def gaussian_window(size: int = SSIM_WINDOW, sigma: float = SSIM_SIGMA) -> np.ndarray:
    x = np.arange(size) - (size - 1) / 2
    g = np.exp(-(x * x) / (2 * sigma * sigma))
    return g / g.sum()


def _filter(img: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Separable 'valid' correlation over the two leading axes."""
    k = len(g)
    tmp = np.lib.stride_tricks.sliding_window_view(img, k, axis=0) @ g
    return np.lib.stride_tricks.sliding_window_view(tmp, k, axis=1) @ g


def _filter_adjoint(y: np.ndarray, g: np.ndarray) -> np.ndarray:
    k = len(g)
    pad = [(k - 1, k - 1), (k - 1, k - 1)] + [(0, 0)] * (y.ndim - 2)
    return _filter(np.pad(y, pad), g[::-1])


def _ssim_terms(x, y, g):
    mx, my = _filter(x, g), _filter(y, g)
    sxx = _filter(x * x, g) - mx * mx
    syy = _filter(y * y, g) - my * my
    sxy = _filter(x * y, g) - mx * my
    a1 = 2 * mx * my + SSIM_C1
    a2 = 2 * sxy + SSIM_C2
    b1 = mx * mx + my * my + SSIM_C1
    b2 = sxx + syy + SSIM_C2
    return mx, my, a1, a2, b1, b2, (a1 * a2) / (b1 * b2)


def ssim_map(render, target) -> np.ndarray:
    """Per-window SSIM (valid windows only), shape ``(H-10, W-10, C)``."""
    render, target = _check_pair(render, target)
    if min(render.shape[:2]) < SSIM_WINDOW:
        raise ImageTooSmallError(f"SSIM needs images at least {SSIM_WINDOW}px on each side")
    if render.ndim == 2:
        render, target = render[..., None], target[..., None]
    return _ssim_terms(render, target, gaussian_window())[-1]


def loss_ssim(render, target) -> float:
    """``1 - mean SSIM`` with an 11x11 Gaussian window (sigma 1.5), averaged over channels."""
    return float(1.0 - ssim_map(render, target).mean())


def loss_ssim_grad(render, target):
    render, target = _check_pair(render, target)
    if min(render.shape[:2]) < SSIM_WINDOW:
        raise ImageTooSmallError(f"SSIM needs images at least {SSIM_WINDOW}px on each side")
    g = gaussian_window()
    mx, my, a1, a2, b1, b2, s = _ssim_terms(render, target, g)
    denom = b1 * b2
    d_mx = 2 * my * a2 / denom - s * 2 * mx / b1
    d_sxx = -s / b2
    d_sxy = 2 * a1 / denom
    scale = -1.0 / s.size
    g_mu = (d_mx - 2 * mx * d_sxx - my * d_sxy) * scale
    grad = (_filter_adjoint(g_mu, g) + 2 * render * _filter_adjoint(d_sxx * scale, g)
            + target * _filter_adjoint(d_sxy * scale, g))
    return float(1.0 - s.mean()), grad


def _depth_pair(render_depth: DepthMap, mono: DepthMap):
    if render_depth.shape != mono.shape:
        raise ShapeMismatchError(f"depth shapes {render_depth.shape} vs {mono.shape}")
    both = render_depth.valid & mono.valid
    n = int(both.sum())
    if n == 0:
        raise UndefinedLossError("no pixel is valid in both depth maps")
    return both, n


def loss_depth(render_depth: DepthMap, aligned_mono: DepthMap) -> float:
    """Mean absolute depth difference over jointly valid pixels (unweighted)."""
    both, _ = _depth_pair(render_depth, aligned_mono)
    return float(np.abs(render_depth.values[both] - aligned_mono.values[both]).mean())


def loss_depth_grad(render_depth: DepthMap, aligned_mono: DepthMap):
    both, n = _depth_pair(render_depth, aligned_mono)
    diff = np.where(both, render_depth.values - aligned_mono.values, 0.0)
    return float(np.abs(diff[both]).mean()), np.sign(diff) / n
