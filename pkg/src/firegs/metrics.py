"""Image and depth quality metrics for evaluating reconstructions."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .depthfuse import apply_alignment, fit_alignment
from .errors import EmptyInputError, ImageTooSmallError, ShapeMismatchError
from .losses import SSIM_WINDOW, loss_ssim, ssim_map
from .rasters import DepthMap

PSNR_IDENTICAL = math.inf


def _pair(render, target):
    render = np.asarray(render, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if render.shape != target.shape:
        raise ShapeMismatchError(f"shape mismatch {render.shape} vs {target.shape}")
    return render, target


def _mask(mask, shape):
    mask = np.asarray(mask, dtype=bool)
    if mask.shape != shape[:2]:
        raise ShapeMismatchError(f"mask {mask.shape} does not match image {shape[:2]}")
    if not mask.any():
        raise EmptyInputError("mask selects no pixels")
    return mask


def psnr(render, target, mask=None) -> float:
    """``10 log10(1 / MSE)`` on [0, 1] images; ``inf`` when they are identical."""
    render, target = _pair(render, target)
    sq = (render - target) ** 2
    if mask is not None:
        sq = sq[_mask(mask, render.shape)]
    mse = float(sq.mean())
    if mse == 0.0:
        return PSNR_IDENTICAL
    return 10.0 * math.log10(1.0 / mse)


def ssim_metric(render, target, mask=None) -> float:
    """Mean SSIM. With a mask, the SSIM map is averaged over masked window centers."""
    if mask is None:
        return 1.0 - loss_ssim(render, target)
    render, target = _pair(render, target)
    mask = _mask(mask, render.shape)
    smap = ssim_map(render, target)
    r = SSIM_WINDOW // 2
    inner = mask[r:mask.shape[0] - r, r:mask.shape[1] - r]
    if not inner.any():
        raise EmptyInputError("mask selects no complete SSIM window center")
    return float(smap[inner].mean())


def rmse_depth(render_depth: DepthMap, mono_depth: DepthMap) -> float:
    """RMSE between rendered depth and the mono depth affinely aligned to it."""
    align = fit_alignment(mono_depth, render_depth)
    aligned = apply_alignment(mono_depth, align)
    both = aligned.valid & render_depth.valid
    if not both.any():
        raise EmptyInputError("no jointly valid depth pixel after alignment")
    diff = aligned.values[both] - render_depth.values[both]
    return float(np.sqrt(np.mean(diff * diff)))


@dataclass
class FrameMetrics:
    camera: int
    frame: int
    psnr: float
    ssim: float
    psnr_flame: Optional[float] = None
    ssim_flame: Optional[float] = None
    rmse_depth: Optional[float] = None


@dataclass
class EvalReport:
    psnr: float
    ssim: float
    psnr_flame: Optional[float]
    ssim_flame: Optional[float]
    rmse_depth: Optional[float]
    frames: list = field(default_factory=list)

    def to_json(self, path) -> None:
        d = asdict(self)
        Path(path).write_text(json.dumps(_finite(d), indent=2) + "\n")

    def to_csv(self, path) -> None:
        cols = ("camera", "frame", "psnr", "ssim", "psnr_flame", "ssim_flame", "rmse_depth")
        with open(path, "w", newline="") as f:
            w = csv.writer(f)
            w.writerow(cols)
            for fm in self.frames:
                w.writerow(["" if getattr(fm, c) is None else getattr(fm, c) for c in cols])


def _finite(obj):
    # JSON has no infinity; identical images are reported as the string "inf"
    if isinstance(obj, float) and math.isinf(obj):
        return "inf"
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_finite(v) for v in obj]
    return obj


def _mean(values):
    values = [v for v in values if v is not None]
    if not values:
        return None
    return float(np.mean(values))


def evaluate_frame(camera: int, frame: int, render, target, flame_mask=None, exclude_mask=None,
                   render_depth: Optional[DepthMap] = None, mono_depth: Optional[DepthMap] = None) -> FrameMetrics:
    """Metrics for one view. ``exclude_mask`` removes pixels (e.g. the sync LEDs) from every image metric."""
    keep = None if exclude_mask is None else ~np.asarray(exclude_mask, dtype=bool)
    fm = FrameMetrics(camera, frame, psnr(render, target, keep), ssim_metric(render, target, keep))
    if flame_mask is not None:
        flame = np.asarray(flame_mask, dtype=bool)
        if keep is not None:
            flame = flame & keep
        if flame.any():
            fm.psnr_flame = psnr(render, target, flame)
            try:
                fm.ssim_flame = ssim_metric(render, target, flame)
            except (EmptyInputError, ImageTooSmallError):
                fm.ssim_flame = None
    if render_depth is not None and mono_depth is not None:
        fm.rmse_depth = rmse_depth(render_depth, mono_depth)
    return fm


def summarize(frames: list) -> EvalReport:
    """Average per-frame metrics. PSNR is averaged in dB, as is customary."""
    if not frames:
        raise EmptyInputError("no frames to summarize")
    return EvalReport(
        psnr=_mean([f.psnr for f in frames]),
        ssim=_mean([f.ssim for f in frames]),
        psnr_flame=_mean([f.psnr_flame for f in frames]),
        ssim_flame=_mean([f.ssim_flame for f in frames]),
        rmse_depth=_mean([f.rmse_depth for f in frames]),
        frames=list(frames),
    )
