"""Decoding of the LED synchronization pattern.

The counter shows the frame number as a 15-bit binary-reflected Gray code
(MSB first). A separate parity LED toggles every frame; the decoder treats
it as leading the counter, so a capture in which the parity already shows
``n + 1`` while the counter still reads ``n`` (or one counter bit is caught
mid-switch) resolves to ``n + 1``.

Five LED strips switch on one after another, ``strip_toggle_period``
apart, starting at the frame tick. With a rolling shutter each strip shows
an off-to-on edge at the row exposed when it switched on, which pins down
the exposure start relative to the tick.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .camera import BOTTOM_TO_TOP, ReadoutSchedule
from .errors import AmbiguousReadingError, NoEdgeError, ValidationError
from .rasters import luminance

N_BITS = 15
N_STRIPS = 5
INDETERMINATE_BAND = 0.05
DEFAULT_EDGE_UNCERTAINTY_PX = 5.0


def gray_encode(n: int) -> int:
    if not 0 <= n < 2**N_BITS:
        raise ValidationError(f"frame index {n} outside [0, {2**N_BITS - 1}]")
    return n ^ (n >> 1)


def gray_decode(code: int) -> int:
    n = 0
    while code:
        n ^= code
        code >>= 1
    return n


def to_bits(code: int, width: int = N_BITS) -> tuple:
    """MSB-first bit tuple."""
    return tuple((code >> (width - 1 - i)) & 1 for i in range(width))


def from_bits(bits) -> int:
    code = 0
    for b in bits:
        code = (code << 1) | int(b)
    return code


@dataclass(frozen=True)
class LedLayout:
    """LED regions as ``(row0, col0, row1, col1)`` half-open pixel rectangles."""

    counter_led_regions: tuple
    ambiguity_led_region: tuple
    strip_regions: tuple
    strip_toggle_period: float
    on_threshold: float = 0.5

    def __post_init__(self):
        if len(self.counter_led_regions) != N_BITS:
            raise ValidationError(f"layout needs {N_BITS} counter regions")
        if len(self.strip_regions) != N_STRIPS:
            raise ValidationError(f"layout needs {N_STRIPS} strip regions")
        if not self.strip_toggle_period > 0:
            raise ValidationError("strip_toggle_period must be positive")
        regions = [tuple(int(v) for v in r) for r in
                   list(self.counter_led_regions) + [self.ambiguity_led_region] + list(self.strip_regions)]
        for r0, c0, r1, c1 in regions:
            if not (r1 > r0 and c1 > c0):
                raise ValidationError(f"empty LED region {(r0, c0, r1, c1)}")
        for i, a in enumerate(regions):
            for b in regions[i + 1:]:
                if a[0] < b[2] and b[0] < a[2] and a[1] < b[3] and b[1] < a[3]:
                    raise ValidationError(f"LED regions {a} and {b} overlap")
        object.__setattr__(self, "counter_led_regions", tuple(regions[:N_BITS]))
        object.__setattr__(self, "ambiguity_led_region", regions[N_BITS])
        object.__setattr__(self, "strip_regions", tuple(regions[N_BITS + 1:]))

    def check_bounds(self, height: int, width: int) -> None:
        for r0, c0, r1, c1 in self.all_regions():
            if r0 < 0 or c0 < 0 or r1 > height or c1 > width:
                raise ValidationError(f"LED region {(r0, c0, r1, c1)} exceeds {height}x{width} image")

    def all_regions(self):
        return list(self.counter_led_regions) + [self.ambiguity_led_region] + list(self.strip_regions)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["counter_led_regions"] = [list(r) for r in self.counter_led_regions]
        d["ambiguity_led_region"] = list(self.ambiguity_led_region)
        d["strip_regions"] = [list(r) for r in self.strip_regions]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LedLayout":
        try:
            return cls(tuple(map(tuple, d["counter_led_regions"])), tuple(d["ambiguity_led_region"]),
                       tuple(map(tuple, d["strip_regions"])), float(d["strip_toggle_period"]),
                       float(d.get("on_threshold", 0.5)))
        except KeyError as exc:
            raise ValidationError(f"LED layout missing {exc.args[0]!r}") from None

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")

    @classmethod
    def load(cls, path) -> "LedLayout":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class CounterReading:
    frame_index: int
    transition: bool


@dataclass(frozen=True)
class SyncReading:
    frame_index: int
    subframe_offset: float
    offset_precision: float
    transition: bool = False

    def __post_init__(self):
        if not (self.offset_precision > 0 or math.isnan(self.offset_precision)):
            raise ValidationError("offset precision must be positive")


def _region_mean(lum, region) -> float:
    r0, c0, r1, c1 = region
    return float(lum[r0:r1, c0:c1].mean())


def read_counter(image, layout: LedLayout, on_threshold=None) -> CounterReading:
    """Decode the Gray-code frame counter and the parity LED."""
    thr = layout.on_threshold if on_threshold is None else on_threshold
    lum = luminance(image)
    layout.check_bounds(*lum.shape)
    levels = [_region_mean(lum, r) for r in layout.counter_led_regions]
    unsure = [i for i, v in enumerate(levels) if abs(v - thr) <= INDETERMINATE_BAND]
    parity_level = _region_mean(lum, layout.ambiguity_led_region)
    if abs(parity_level - thr) <= INDETERMINATE_BAND:
        raise AmbiguousReadingError("parity LED is indeterminate", bits=["parity"] + unsure)
    parity = int(parity_level > thr)
    bits = [int(v > thr) for v in levels]
    if len(unsure) > 1:
        raise AmbiguousReadingError(f"counter bits {unsure} are indeterminate", bits=unsure)
    if len(unsure) == 1:
        i = unsure[0]
        candidates = []
        for b in (0, 1):
            bits[i] = b
            candidates.append(gray_decode(from_bits(bits)))
        match = [n for n in candidates if n % 2 == parity]
        if len(match) != 1:
            raise AmbiguousReadingError(f"counter bit {i} is indeterminate", bits=[i])
        return CounterReading(match[0], True)
    n = gray_decode(from_bits(bits))
    if n % 2 != parity:
        # parity leads the counter: the increment has started
        return CounterReading((n + 1) % 2**N_BITS, True)
    return CounterReading(n, False)


def _strip_profile(lum, region) -> np.ndarray:
    r0, c0, r1, c1 = region
    return lum[r0:r1, c0:c1].mean(axis=1)


def locate_edge(profile: np.ndarray, min_step: float = 0.1):
    """Fractional row of the steepest rising step after 3-row box smoothing.

    A sharp edge spreads over three consecutive smoothed differences; the
    position is the step-weighted centroid of the positive differences
    within two samples of the steepest one. Returns None when the largest
    raw step is below ``min_step``.
    """
    if len(profile) < 4:
        return None
    smooth = np.convolve(profile, np.ones(3) / 3, mode="valid")  # sample j is centered on row j+1
    steps = np.diff(smooth)  # steps[j] sits between rows j+1 and j+2
    j = int(np.argmax(steps))
    if steps[j] < min_step / 3:
        return None
    lo, hi = max(0, j - 2), min(len(steps), j + 3)
    w = np.clip(steps[lo:hi], 0.0, None)
    centers = np.arange(lo, hi) + 1.5
    return float((w * centers).sum() / w.sum())


def subframe_offset(image, layout: LedLayout, schedule: ReadoutSchedule,
                    edge_uncertainty_px: float = DEFAULT_EDGE_UNCERTAINTY_PX):
    """Exposure start of the frame relative to the sync tick, in seconds.

    Returns ``(offset, precision, n_strips_used)``. Each strip that shows an
    off-to-on edge yields ``tau_k - delay(row_edge)`` where strip ``k``
    switches on ``k * strip_toggle_period`` after the tick. Estimates are
    averaged; precision is ``line_time * edge_uncertainty_px / sqrt(n)``.
    """
    if schedule.is_global:
        raise ValidationError("sub-frame timing needs a rolling-shutter readout schedule")
    lum = luminance(image)
    height = lum.shape[0]
    layout.check_bounds(*lum.shape)
    estimates = []
    for k, region in enumerate(layout.strip_regions):
        profile = _strip_profile(lum, region)
        if schedule.scan_direction == BOTTOM_TO_TOP:
            profile = profile[::-1]
            rel = locate_edge(profile)
            row = None if rel is None else (region[2] - 1) - rel
        else:
            rel = locate_edge(profile)
            row = None if rel is None else region[0] + rel
        if row is None:
            continue
        scan_row = row if schedule.scan_direction != BOTTOM_TO_TOP else (height - 1) - row
        delay = schedule.first_line_offset + scan_row * schedule.line_time
        estimates.append(k * layout.strip_toggle_period - delay)
    if not estimates:
        raise NoEdgeError("no LED strip shows a brightness transition")
    n = len(estimates)
    precision = schedule.line_time * edge_uncertainty_px / math.sqrt(n)
    return float(np.mean(estimates)), precision, n


def decode_frame(image, layout: LedLayout, schedule: ReadoutSchedule) -> SyncReading:
    counter = read_counter(image, layout)
    try:
        offset, precision, _ = subframe_offset(image, layout, schedule)
    except NoEdgeError:
        offset, precision = float("nan"), float("nan")
    return SyncReading(counter.frame_index, offset, precision, counter.transition)


# -- synthetic painter --------------------------------------------------------

LED_ON = 1.0
LED_OFF = 0.02


def led_states(t: np.ndarray, frame_period: float, layout: LedLayout):
    """State of the counter value, parity and strips at absolute times ``t`` (seconds)."""
    t = np.asarray(t, dtype=np.float64)
    frame = np.floor(t / frame_period).astype(np.int64)
    phase = t - frame * frame_period
    strips = np.stack([phase >= k * layout.strip_toggle_period for k in range(N_STRIPS)], axis=-1)
    return frame, frame % 2, strips


def paint_leds(image, layout: LedLayout, schedule: ReadoutSchedule, frame_start: float, frame_period: float,
               blur_rows: float = 0.0):
    """Overlay the sync pattern as seen by a row-sequential sensor.

    Each image row is exposed instantaneously at ``frame_start`` plus its
    readout delay. ``blur_rows`` applies a vertical Gaussian blur (in rows)
    to the strip columns to emulate optics.
    """
    img = np.array(image, dtype=np.float64, copy=True)
    h = img.shape[0]
    rows = np.arange(h, dtype=np.float64)
    scan = rows if schedule.scan_direction != BOTTOM_TO_TOP else (h - 1) - rows
    row_time = frame_start + schedule.first_line_offset + scan * schedule.line_time
    frame, parity, strips = led_states(row_time, frame_period, layout)
    for i, (r0, c0, r1, c1) in enumerate(layout.counter_led_regions):
        bit_rows = np.array([to_bits(gray_encode(int(f) % 2**N_BITS))[i] for f in frame[r0:r1]])
        img[r0:r1, c0:c1] = np.where(bit_rows, LED_ON, LED_OFF)[:, None, None]
    r0, c0, r1, c1 = layout.ambiguity_led_region
    img[r0:r1, c0:c1] = np.where(parity[r0:r1], LED_ON, LED_OFF)[:, None, None]
    for k, (r0, c0, r1, c1) in enumerate(layout.strip_regions):
        col = np.where(strips[r0:r1, k], LED_ON, LED_OFF)
        if blur_rows > 0:
            from scipy.ndimage import gaussian_filter1d

            col = gaussian_filter1d(col, blur_rows, mode="nearest")
        img[r0:r1, c0:c1] = col[:, None, None]
    return img


def default_layout(height: int, width: int, strip_toggle_period: float) -> LedLayout:
    """A compact layout: counter and parity LEDs along the top rows, strips on the right."""
    led = max(2, min(3, width // 24))
    counter = tuple((0, i * led, led, (i + 1) * led) for i in range(N_BITS))
    parity = (0, N_BITS * led, led, (N_BITS + 1) * led)
    strip_w = max(1, led - 1)
    x0 = width - N_STRIPS * (strip_w + 1)
    strips = tuple((led + 1, x0 + k * (strip_w + 1), height, x0 + k * (strip_w + 1) + strip_w)
                   for k in range(N_STRIPS))
    return LedLayout(counter, parity, strips, strip_toggle_period)
