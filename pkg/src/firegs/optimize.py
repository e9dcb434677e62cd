"""Composite training loss, Adam fitting loop and finite-difference checks."""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .camera import Camera
from .errors import EmptyInputError, ValidationError
from .gaussians import GaussianScene
from .losses import loss_depth_grad, loss_l1_grad, loss_ssim_grad
from .rasters import DepthMap
from .render import GLOBAL, Rasterization, RenderRequest, capture_times

log = logging.getLogger(__name__)

STATIC_STAGE = "static"
DYNAMIC_STAGE = "dynamic"
MIN_T_SIGMA = 1e-6


@dataclass(frozen=True)
class LossWeights:
    lambda1: float = 0.8
    lambda_ssim: float = 0.2
    lambda_depth_start: float = 100.0
    lambda_depth_end: float = 1.0
    total_iters: int = 3000

    def __post_init__(self):
        if min(self.lambda1, self.lambda_ssim, self.lambda_depth_start, self.lambda_depth_end) < 0:
            raise ValidationError("loss weights must be non-negative")
        if self.total_iters < 1:
            raise ValidationError("total_iters must be >= 1")


@dataclass(eq=False)
class TrainBatch:
    camera: Camera
    target: np.ndarray
    target_depth: Optional[DepthMap] = None
    mask: Optional[np.ndarray] = None
    time: float = 0.0

    def __post_init__(self):
        shape = (self.camera.height, self.camera.width)
        if np.shape(self.target)[:2] != shape:
            raise ValidationError(f"target {np.shape(self.target)} does not match camera {shape}")
        if self.target_depth is not None and self.target_depth.shape != shape:
            raise ValidationError("target depth does not match camera resolution")


@dataclass
class OptimizerConfig:
    """Adam settings. Position-like rates are multiplied by ``scene_extent``."""

    position_lr_init: float = 1.6e-4
    position_lr_final: float = 1.6e-6
    velocity_lr_factor: float = 1e-2
    color_lr: float = 0.0025
    opacity_lr: float = 0.05
    scale_lr: float = 0.005
    rotation_lr: float = 0.001
    t_mu_lr: float = 2.5e-5
    t_sigma_lr: float = 2.5e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    scene_extent: float = 1.0
    shutter_mode: str = GLOBAL
    seed: int = 0

    def learning_rates(self, iteration: int, total: int) -> dict:
        frac = iteration / max(total - 1, 1)
        pos = self.position_lr_init * (self.position_lr_final / self.position_lr_init) ** frac
        pos *= self.scene_extent
        return {"position": pos, "velocity": pos * self.velocity_lr_factor, "color": self.color_lr,
                "opacity_logit": self.opacity_lr, "log_scale": self.scale_lr, "rotation": self.rotation_lr,
                "t_mu": self.t_mu_lr, "t_sigma": self.t_sigma_lr}

    def to_json(self, path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n")

    @classmethod
    def from_dict(cls, d: dict) -> "OptimizerConfig":
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(d) - known
        if unknown:
            raise ValidationError(f"unknown optimizer settings {sorted(unknown)}")
        return cls(**d)


def camera_extent(cameras) -> float:
    """Scene extent heuristic: 1.1 x the largest camera distance from their mean center."""
    centers = np.array([c.pose.center for c in cameras])
    return float(1.1 * np.linalg.norm(centers - centers.mean(axis=0), axis=1).max()) or 1.0


def depth_weight_schedule(iteration: int, weights: LossWeights) -> float:
    """Geometric decay from ``lambda_depth_start`` to ``lambda_depth_end``."""
    if not 0 <= iteration < weights.total_iters:
        raise ValidationError(f"iteration {iteration} outside [0, {weights.total_iters})")
    start, end = weights.lambda_depth_start, weights.lambda_depth_end
    if weights.total_iters == 1 or start == end:
        return float(start)
    if iteration == weights.total_iters - 1:
        return float(end)
    if start == 0 or end == 0:
        # geometric interpolation is undefined through zero; fall back to linear
        return float(start + (end - start) * iteration / (weights.total_iters - 1))
    return float(start * (end / start) ** (iteration / (weights.total_iters - 1)))


def _loss_terms(out, batch: TrainBatch, weights: LossWeights, iteration: int, with_grad: bool):
    l1, g1 = loss_l1_grad(out.color, batch.target)
    ls, gs = loss_ssim_grad(out.color, batch.target)
    terms = {"l1": l1, "ssim": ls, "depth": 0.0, "lambda_depth": 0.0}
    grad_color = weights.lambda1 * g1 + weights.lambda_ssim * gs if with_grad else None
    grad_depth = None
    total = weights.lambda1 * l1 + weights.lambda_ssim * ls
    if batch.target_depth is not None:
        lam = depth_weight_schedule(iteration, weights)
        both = out.depth.valid & batch.target_depth.valid
        if both.any():
            ld, gd = loss_depth_grad(out.depth, batch.target_depth)
            terms["depth"] = ld
            terms["lambda_depth"] = lam
            total += lam * ld
            grad_depth = lam * gd if with_grad else None
    terms["total"] = total
    return terms, grad_color, grad_depth


def total_loss(scene: GaussianScene, batch: TrainBatch, weights: LossWeights, iteration: int = 0,
               shutter_mode: str = GLOBAL):
    """Weighted L1 + SSIM (+ scheduled depth) loss. Returns ``(total, breakdown)``.

    The breakdown holds the raw terms and their weighted contributions;
    the weighted contributions sum to the total.
    """
    req = RenderRequest(batch.camera, batch.time, shutter_mode)
    out = Rasterization(scene, req).output
    terms, _, _ = _loss_terms(out, batch, weights, iteration, with_grad=False)
    return terms["total"], _breakdown(terms, weights)


def _breakdown(terms, weights):
    return {**terms,
            "weighted_l1": weights.lambda1 * terms["l1"],
            "weighted_ssim": weights.lambda_ssim * terms["ssim"],
            "weighted_depth": terms["lambda_depth"] * terms["depth"]}


def loss_and_grad(scene: GaussianScene, batch: TrainBatch, weights: LossWeights, iteration: int = 0,
                  shutter_mode: str = GLOBAL, times=None):
    """Loss breakdown and parameter gradients for one batch.

    Rolling-shutter capture delays are treated as constants (no gradient).
    """
    req = RenderRequest(batch.camera, batch.time, shutter_mode)
    raster = Rasterization(scene, req, times)
    terms, gc, gd = _loss_terms(raster.output, batch, weights, iteration, with_grad=True)
    return terms, raster.backward(gc, gd)


class Adam:
    def __init__(self, params: dict, beta1=0.9, beta2=0.999, eps=1e-8):
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict, grads: dict, lrs: dict) -> None:
        self.t += 1
        c1 = 1 - self.beta1**self.t
        c2 = 1 - self.beta2**self.t
        for name, p in params.items():
            g = grads[name]
            m, v = self.m[name], self.v[name]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            p -= lrs[name] * (m / c1) / (np.sqrt(v / c2) + self.eps)


def _project(params: dict) -> None:
    np.clip(params["color"], 0.0, 1.0, out=params["color"])
    q = params["rotation"]
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    if "t_sigma" in params:
        np.maximum(params["t_sigma"], MIN_T_SIGMA, out=params["t_sigma"])


@dataclass
class FitResult:
    scene: GaussianScene
    trace: list = field(default_factory=list)


def batch_schedule(n_batches: int, iters: int, seed: int) -> np.ndarray:
    """Round-robin over batches, reshuffled with a seeded RNG every pass."""
    rng = np.random.default_rng(seed)
    passes = -(-iters // n_batches) if iters else 0
    order = [rng.permutation(n_batches) for _ in range(passes)]
    return np.concatenate(order)[:iters] if order else np.zeros(0, dtype=np.int64)


def fit(scene: GaussianScene, batches, weights: LossWeights, stage: str,
        config: Optional[OptimizerConfig] = None, iters: Optional[int] = None, callback=None) -> FitResult:
    """Adam on one parameter set (statics or dynamics) with the other frozen.

    Runs ``iters`` (default ``weights.total_iters``) steps and returns the
    updated scene copy plus one trace row per iteration.
    """
    if not batches:
        raise EmptyInputError("fit needs at least one training batch")
    if stage not in (STATIC_STAGE, DYNAMIC_STAGE):
        raise ValidationError(f"unknown stage {stage!r}")
    config = config or OptimizerConfig()
    iters = weights.total_iters if iters is None else iters
    scene = scene.copy()
    part = scene.statics if stage == STATIC_STAGE else scene.dynamics
    params = part.params()
    if iters == 0 or len(part) == 0:
        return FitResult(scene, [])
    adam = Adam(params, config.beta1, config.beta2, config.eps)
    key = "statics" if stage == STATIC_STAGE else "dynamics"
    trace = []
    schedule = batch_schedule(len(batches), iters, config.seed)
    for it in range(iters):
        batch = batches[schedule[it]]
        terms, grads = loss_and_grad(scene, batch, weights, min(it, weights.total_iters - 1), config.shutter_mode)
        adam.step(params, grads[key], config.learning_rates(it, iters))
        _project(params)
        trace.append({"iter": it, **{k: terms[k] for k in ("total", "l1", "ssim", "depth", "lambda_depth")}})
        if callback is not None:
            callback(it, terms)
    return FitResult(scene, trace)


def write_trace(path, trace) -> None:
    cols = ("iter", "total", "l1", "ssim", "depth", "lambda_depth")
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(cols)
        for row in trace:
            w.writerow([row["iter"]] + [repr(float(row[c])) for c in cols[1:]])


def smoothed(trace, window: int = 50) -> np.ndarray:
    """Means of consecutive non-overlapping ``window``-iteration blocks of the total loss."""
    totals = np.array([r["total"] for r in trace])
    n = len(totals) // window
    return totals[: n * window].reshape(n, window).mean(axis=1)


# -- gradient verification ---------------------------------------------------

GRADIENT_FIELDS = ("position", "velocity", "t_mu", "t_sigma", "opacity_logit", "color", "log_scale", "rotation")


def relative_error(a: float, f: float) -> float:
    return abs(a - f) / max(1e-8, abs(a) + abs(f))


def gradient_check(scene: GaussianScene, batch: TrainBatch, param_sample=None, eps: float = 1e-4,
                   weights: Optional[LossWeights] = None, shutter_mode: str = GLOBAL, details: bool = False):
    """Worst relative error between analytic and central-difference gradients.

    ``param_sample`` is an iterable of ``(part, field, index)`` entries with
    ``part`` in {"statics", "dynamics"} and ``index`` a tuple into the field
    array; by default every scalar of every listed field is checked.
    """
    if not 1e-6 <= eps <= 1e-3:
        raise ValidationError("eps must lie in [1e-6, 1e-3]")
    weights = weights or LossWeights()
    req = RenderRequest(batch.camera, batch.time, shutter_mode)
    times = capture_times(scene, req)
    _, grads = loss_and_grad(scene, batch, weights, 0, shutter_mode, times)
    if param_sample is None:
        param_sample = list(default_sample(scene))
    rows = []
    worst = 0.0
    for part, name, index in param_sample:
        analytic = float(grads[part][name][index])
        values = []
        for sign in (1.0, -1.0):
            s = scene.copy()
            getattr(getattr(s, part), name)[index] += sign * eps
            terms, _ = _forward_terms(s, batch, weights, shutter_mode, times)
            values.append(terms["total"])
        fd = (values[0] - values[1]) / (2 * eps)
        err = relative_error(analytic, fd)
        worst = max(worst, err)
        rows.append((part, name, index, analytic, fd, err))
    return (worst, rows) if details else worst


def _forward_terms(scene, batch, weights, shutter_mode, times):
    req = RenderRequest(batch.camera, batch.time, shutter_mode)
    out = Rasterization(scene, req, times).output
    terms, _, _ = _loss_terms(out, batch, weights, 0, with_grad=False)
    return terms, out


def default_sample(scene: GaussianScene, fields=GRADIENT_FIELDS):
    for part in ("statics", "dynamics"):
        gs = getattr(scene, part)
        for name in gs.field_names:
            if name not in fields:
                continue
            arr = getattr(gs, name)
            for index in np.ndindex(arr.shape):
                yield part, name, index
