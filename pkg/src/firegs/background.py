"""Fire removal by temporal minimum and dynamic-region masks."""

from __future__ import annotations

import numpy as np

from .errors import EmptyInputError, ShapeMismatchError, ValidationError
from .rasters import VideoSequence, luminance

DEFAULT_MASK_THRESHOLD = 0.1


def min_intensity_projection(video: VideoSequence) -> np.ndarray:
    """Per-pixel, per-channel minimum over time.

    Emissive flames are brighter than what they occlude, so the darkest
    observation of each pixel is usually the static background.
    """
    if len(video) == 0:
        raise EmptyInputError("cannot project an empty video")
    return video.stack().min(axis=0)


def dynamic_mask(video: VideoSequence, background: np.ndarray, threshold: float = DEFAULT_MASK_THRESHOLD) -> np.ndarray:
    """Pixels whose luminance ever deviates from the background by more than ``threshold``."""
    if not 0 < threshold < 1:
        raise ValidationError(f"threshold must lie in (0, 1), got {threshold}")
    if len(video) == 0:
        raise EmptyInputError("cannot mask an empty video")
    frames = video.stack()
    background = np.asarray(background, dtype=np.float64)
    if frames.shape[1:] != background.shape:
        raise ShapeMismatchError(f"frames {frames.shape[1:]} vs background {background.shape}")
    deviation = np.abs(luminance(frames) - luminance(background)).max(axis=0)
    return deviation > threshold


def frame_masks(video: VideoSequence, background: np.ndarray, threshold: float = DEFAULT_MASK_THRESHOLD):
    """One dynamic mask per frame (each frame treated as a one-frame video)."""
    return [dynamic_mask(VideoSequence([f], video.frame_rate), background, threshold) for f in video.frames]
