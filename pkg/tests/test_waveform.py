"""Chip-level checks for the square-wave FSK mapping and clock drift."""

import numpy as np
import pytest

from ambclink.framing import assemble_frame, build_sync_header
from ambclink.waveform import FskSpec, apply_clock_drift, chips_for_symbol, modulate_frame

SPEC = FskSpec()

# one period of each tone at the default rates, written out longhand
PERIOD_250 = [1] * 8 + [0] * 8
PERIOD_625 = [1, 1, 1, 1, 0, 0, 0, 1, 1, 1, 0, 0, 0, 1, 1, 1,
              0, 0, 0, 0, 1, 1, 1, 0, 0, 0, 1, 1, 1, 0, 0, 0]


def test_spec_defaults():
    assert SPEC.chips_per_symbol == 160
    assert SPEC.gap_chips == 2000
    assert SPEC.tone(0) == 250.0 and SPEC.tone(1) == 625.0


def test_spec_validation():
    with pytest.raises(ValueError):
        FskSpec(f0=250.0, f1=250.0)
    with pytest.raises(ValueError):
        FskSpec(sample_rate=0.0)
    with pytest.raises(ValueError):
        FskSpec(f1=2200.0)  # above Nyquist


def test_symbol_chip_patterns():
    c0 = chips_for_symbol(0)
    c1 = chips_for_symbol(1)
    assert np.array_equal(c0, np.tile(PERIOD_250, 10))
    assert np.array_equal(c1, np.tile(PERIOD_625, 5))


def test_tone1_is_half_wave_antisymmetric():
    # 625/4000 = 5/32, so 16 chips advance the phase by exactly half a cycle
    c1 = chips_for_symbol(1)
    assert np.array_equal(c1[16:], 1 - c1[:-16])


def test_bad_symbol_rejected():
    with pytest.raises(ValueError):
        chips_for_symbol(2)


def test_modulated_frame_length_and_duration():
    frame = assemble_frame(np.random.default_rng(0).integers(0, 2, 80))
    chips = modulate_frame(frame)
    assert chips.size == 327 * 160 == 52320
    assert chips.size / SPEC.sample_rate == pytest.approx(13.08)


def test_zero_payload_tail_is_pure_low_tone():
    frame = assemble_frame(np.zeros(80, dtype=np.uint8))
    chips = modulate_frame(frame)
    header_chips = modulate_frame(build_sync_header().bits)
    assert np.array_equal(chips[: 21 * 160], header_chips)
    assert np.array_equal(chips[21 * 160:], np.tile(chips_for_symbol(0), 306))


def test_frame_plus_gap_layout():
    frame = assemble_frame(np.zeros(80, dtype=np.uint8))
    burst = np.concatenate([modulate_frame(frame), np.zeros(SPEC.gap_chips, np.uint8)])
    assert burst.size == 52320 + 2000
    assert not burst[52320:].any()


def test_drift_zero_is_identity():
    chips = modulate_frame(assemble_frame(np.random.default_rng(3).integers(0, 2, 80)))
    assert np.array_equal(apply_clock_drift(chips, 0.0), chips)


def test_drift_shifts_about_one_chip_at_20ppm():
    chips = modulate_frame(assemble_frame(np.random.default_rng(4).integers(0, 2, 80)))
    out = apply_clock_drift(chips, 20.0)
    # 13.08 s x 20 ppm = 262 us, about one chip at 4 kHz
    assert out.size == 52321
    assert (out.size - 1) - round((out.size - 1) / (1 + 20e-6)) == 1
    # early chips are unmoved (accumulated shift still under half a chip)
    assert np.array_equal(out[:20000], chips[:20000])


def test_drift_negative_mirrors():
    chips = modulate_frame(assemble_frame(np.random.default_rng(5).integers(0, 2, 80)))
    out = apply_clock_drift(chips, -20.0)
    assert out.size == 52319
    assert np.array_equal(out[:20000], chips[:20000])


def test_drift_range_enforced():
    with pytest.raises(ValueError):
        apply_clock_drift(np.zeros(10, dtype=np.uint8), 101.0)
    with pytest.raises(ValueError):
        apply_clock_drift(np.zeros(10, dtype=np.uint8), -250.0)
