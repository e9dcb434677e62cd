import math

import numpy as np
import pytest

from firegs.camera import BOTTOM_TO_TOP, ReadoutSchedule
from firegs.errors import AmbiguousReadingError, NoEdgeError, ValidationError
from firegs.sync import (N_BITS, LedLayout, decode_frame, default_layout, from_bits, gray_decode, gray_encode,
                         locate_edge, paint_leds, read_counter, subframe_offset, to_bits)

H, W = 480, 640
LINE = 3e-6
FRAME = 1 / 30


def test_gray_examples():
    assert to_bits(gray_encode(0)) == (0,) * 15
    assert gray_encode(5) == 7 and to_bits(7)[-3:] == (1, 1, 1)
    assert gray_decode(0) == 0
    assert gray_decode(gray_encode(32767)) == 32767
    with pytest.raises(ValidationError):
        gray_encode(2**15)
    with pytest.raises(ValidationError):
        gray_encode(-1)


def test_gray_exhaustive():
    codes = [gray_encode(n) for n in range(2**N_BITS)]
    assert all(gray_decode(c) == n for n, c in enumerate(codes))
    assert all(bin(a ^ b).count("1") == 1 for a, b in zip(codes, codes[1:]))
    assert len(set(codes)) == 2**N_BITS


def test_gray_random_round_trip(rng):
    for n in rng.integers(0, 2**15, 1000):
        assert gray_decode(from_bits(to_bits(gray_encode(int(n))))) == n


def _frame_image(n, schedule=ReadoutSchedule(LINE), offset=0.0, period=3e-4, blur=0.0, h=H, w=W):
    layout = default_layout(h, w, period)
    img = paint_leds(np.full((h, w, 3), 0.1), layout, schedule, n * FRAME + offset, FRAME, blur_rows=blur)
    return img, layout


def test_read_counter_painted_frame():
    img, layout = _frame_image(1234, offset=1e-3)
    r = read_counter(img, layout)
    assert (r.frame_index, r.transition) == (1234, False)


def test_read_counter_all_off():
    layout = default_layout(H, W, 3e-4)
    r = read_counter(np.zeros((H, W, 3)), layout)
    assert (r.frame_index, r.transition) == (0, False)


def test_read_counter_straddle():
    n = 1234
    img, layout = _frame_image(n, offset=1e-3)
    a, b = to_bits(gray_encode(n)), to_bits(gray_encode(n + 1))
    (bit,) = [i for i in range(N_BITS) if a[i] != b[i]]
    r0, c0, r1, c1 = layout.counter_led_regions[bit]
    img[r0:r1, c0:c1] = 0.5
    r0, c0, r1, c1 = layout.ambiguity_led_region
    img[r0:r1, c0:c1] = 1.0 if (n + 1) % 2 else 0.02
    r = read_counter(img, layout)
    assert (r.frame_index, r.transition) == (n + 1, True)


def test_read_counter_parity_leads():
    n = 77
    img, layout = _frame_image(n, offset=1e-3)
    r0, c0, r1, c1 = layout.ambiguity_led_region
    img[r0:r1, c0:c1] = 1.0 if (n + 1) % 2 else 0.02
    r = read_counter(img, layout)
    assert (r.frame_index, r.transition) == (n + 1, True)


def test_read_counter_ambiguous():
    img, layout = _frame_image(1234, offset=1e-3)
    for i in (2, 9):
        r0, c0, r1, c1 = layout.counter_led_regions[i]
        img[r0:r1, c0:c1] = 0.52
    with pytest.raises(AmbiguousReadingError) as exc:
        read_counter(img, layout)
    assert exc.value.bits == (2, 9)


def test_locate_edge():
    profile = np.r_[np.zeros(20), np.ones(20)]
    assert locate_edge(profile) == pytest.approx(19.5)
    assert locate_edge(np.ones(40)) is None
    assert locate_edge(np.r_[np.ones(20), np.zeros(20)]) is None


def test_subframe_offset_known_offset():
    # exposure starts 400 us after the tick; strips 1-3 switch on during readout
    img, layout = _frame_image(10, offset=400e-6, period=500e-6)
    off, prec, n = subframe_offset(img, layout, ReadoutSchedule(LINE))
    assert abs(off - 400e-6) <= 15e-6
    assert n == 3 and prec == pytest.approx(LINE * 5 / math.sqrt(3))


def test_subframe_offset_monte_carlo():
    rng = np.random.default_rng(7)
    schedule = ReadoutSchedule(LINE)
    errors = []
    for true in rng.uniform(-1e-3, 1e-3, 100):
        img, layout = _frame_image(int(rng.integers(1, 30000)), offset=true, blur=1.0)
        img = img + rng.normal(0, 0.01, img.shape)
        off, _, _ = subframe_offset(img, layout, schedule)
        errors.append(abs(off - true))
    assert max(errors) <= LINE * 5


def test_subframe_offset_bottom_to_top():
    schedule = ReadoutSchedule(LINE, 20e-6, BOTTOM_TO_TOP)
    img, layout = _frame_image(3, schedule, offset=-250e-6)
    off, _, _ = subframe_offset(img, layout, schedule)
    assert abs(off + 250e-6) <= 15e-6


def _two_strip_layout():
    counter = tuple((0, 2 * i, 2, 2 * i + 2) for i in range(N_BITS))
    strips = tuple((4, 40 + 3 * k, 200, 42 + 3 * k) for k in range(5))
    return LedLayout(counter, (0, 32, 2, 34), strips, 1e-4)


def test_two_strips_fused_by_mean():
    layout = _two_strip_layout()
    sched = ReadoutSchedule(LINE)
    img = np.zeros((200, 60, 3))
    edges = {0: 60, 1: 95}
    for k, row in edges.items():
        r0, c0, r1, c1 = layout.strip_regions[k]
        img[row:r1, c0:c1] = 1.0
    singles = []
    for k in edges:
        solo = img.copy()
        r0, c0, r1, c1 = layout.strip_regions[1 - k]
        solo[r0:r1, c0:c1] = 0.0
        off, prec, n = subframe_offset(solo, layout, sched)
        assert n == 1 and prec == pytest.approx(LINE * 5)
        singles.append(off)
    off, prec, n = subframe_offset(img, layout, sched)
    assert n == 2
    assert off == pytest.approx(np.mean(singles), abs=1e-15)
    assert prec == pytest.approx(LINE * 5 / math.sqrt(2))


def test_no_edge_and_global_shutter():
    layout = _two_strip_layout()
    with pytest.raises(NoEdgeError):
        subframe_offset(np.ones((200, 60, 3)), layout, ReadoutSchedule(LINE))
    with pytest.raises(ValidationError):
        subframe_offset(np.ones((200, 60, 3)), layout, ReadoutSchedule(0.0))


def test_decode_frame():
    img, layout = _frame_image(4321, offset=300e-6, blur=1.0)
    r = decode_frame(img, layout, ReadoutSchedule(LINE))
    assert r.frame_index == 4321 and not r.transition
    assert abs(r.subframe_offset - 300e-6) <= 15e-6 and r.offset_precision > 0
    # the counter rows are read before the tick, so they still show the previous frame
    img, _ = _frame_image(4321, offset=-300e-6)
    assert decode_frame(img, layout, ReadoutSchedule(LINE)).frame_index == 4320


def test_layout_validation(tmp_path):
    layout = _two_strip_layout()
    with pytest.raises(ValidationError):
        LedLayout(layout.counter_led_regions[:-1], layout.ambiguity_led_region, layout.strip_regions, 1e-4)
    with pytest.raises(ValidationError):
        LedLayout(layout.counter_led_regions, (0, 1, 2, 3), layout.strip_regions, 1e-4)
    with pytest.raises(ValidationError):
        LedLayout(layout.counter_led_regions, layout.ambiguity_led_region, layout.strip_regions, 0.0)
    with pytest.raises(ValidationError):
        read_counter(np.zeros((100, 60, 3)), layout)
    layout.save(tmp_path / "l.json")
    assert LedLayout.load(tmp_path / "l.json") == layout
