"""Per-pixel raster containers shared across stages.

Images are plain ``(H, W, 3)`` float arrays in ``[0, 1]`` and dynamic masks
are ``(H, W)`` bool arrays; only rasters that carry a validity mask get a
dedicated type.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EmptyInputError, ShapeMismatchError, ValidationError

REC709 = np.array([0.2126, 0.7152, 0.0722])


@dataclass(frozen=True, eq=False)
class DepthMap:
    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if values.ndim != 2 or valid.shape != values.shape:
            raise ShapeMismatchError(f"depth {values.shape} vs mask {valid.shape}")
        # validity is re-derived so the invariant (finite, positive) always holds
        valid = valid & np.isfinite(values) & (values > 0)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @classmethod
    def from_array(cls, values) -> "DepthMap":
        values = np.asarray(values, dtype=np.float64)
        return cls(values, np.isfinite(values) & (values > 0))

    @property
    def shape(self):
        return self.values.shape


@dataclass(frozen=True, eq=False)
class FlowMap:
    """Dense 2D flow in pixels per frame, ``(H, W, 2)`` as ``(f_u, f_v)``."""

    values: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if values.ndim != 3 or values.shape[2] != 2 or valid.shape != values.shape[:2]:
            raise ShapeMismatchError(f"flow {values.shape} vs mask {valid.shape}")
        valid = valid & np.isfinite(values).all(axis=2)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "valid", valid)

    @property
    def shape(self):
        return self.values.shape[:2]


@dataclass(frozen=True, eq=False)
class VideoSequence:
    frames: list
    frame_rate: float

    def __post_init__(self):
        if not self.frame_rate > 0:
            raise ValidationError("frame_rate must be positive")
        if self.frames:
            shape = np.shape(self.frames[0])
            if any(np.shape(f) != shape for f in self.frames):
                raise ShapeMismatchError("frames differ in resolution")

    def __len__(self):
        return len(self.frames)

    def stack(self) -> np.ndarray:
        if not self.frames:
            raise EmptyInputError("video has no frames")
        return np.stack([np.asarray(f, dtype=np.float64) for f in self.frames])


def luminance(image: np.ndarray) -> np.ndarray:
    return np.asarray(image, dtype=np.float64) @ REC709


def check_image(image, name="image") -> np.ndarray:
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3 or image.shape[2] != 3:
        raise ShapeMismatchError(f"{name} must be HxWx3, got {image.shape}")
    return image
