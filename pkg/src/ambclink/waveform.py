"""Square-wave FSK chip mapping at the channel-estimate sampling rate.

Each frame symbol keys the backscatter switch to one of two square waves
(f0 for bit 0, f1 for bit 1) for one symbol period; the chip sequence is
that on/off state sampled at the estimate rate.  The square-wave phase
restarts at every symbol boundary, which is what makes the per-symbol
tone windows line up with the detector's DFT bins.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .coding import as_bits


@dataclass(frozen=True)
class FskSpec:
    """FSK chip parameters.  Defaults: 250/625 Hz tones, 40 ms symbols
    sampled at 4 kHz (160 chips per symbol), 0.5 s inter-frame gap."""

    f0: float = 250.0
    f1: float = 625.0
    symbol_s: float = 0.04
    sample_rate: float = 4000.0
    gap_s: float = 0.5

    def __post_init__(self) -> None:
        if min(self.f0, self.f1, self.symbol_s, self.sample_rate) <= 0:
            raise ValueError("rates and durations must be positive")
        if self.f0 == self.f1:
            raise ValueError("tone frequencies must differ")
        if self.gap_s < 0:
            raise ValueError("gap_s must be nonnegative")
        if max(self.f0, self.f1) >= self.sample_rate / 2:
            raise ValueError("tones must sit below the Nyquist rate")

    @property
    def chips_per_symbol(self) -> int:
        return round(self.symbol_s * self.sample_rate)

    @property
    def gap_chips(self) -> int:
        return round(self.gap_s * self.sample_rate)

    def tone(self, bit: int) -> float:
        return self.f1 if bit else self.f0


def chips_for_symbol(bit: int, spec: FskSpec = FskSpec()) -> np.ndarray:
    """One symbol period of the keyed square wave as 0/1 chips.

    Chip m is on while the square wave is in the first half of its cycle:
    frac(m·f/fs) < 0.5, with phase zero at the symbol start.
    """
    if bit not in (0, 1):
        raise ValueError("bit must be 0 or 1")
    return _symbol_patterns(spec)[bit].copy()


@lru_cache(maxsize=8)
def _symbol_patterns(spec: FskSpec) -> np.ndarray:
    n = spec.chips_per_symbol
    m = np.arange(n)
    rows = [
        (np.mod(m * (spec.tone(b) / spec.sample_rate), 1.0) < 0.5).astype(np.uint8)
        for b in (0, 1)
    ]
    return np.stack(rows)


def modulate_frame(frame_symbols, spec: FskSpec = FskSpec()) -> np.ndarray:
    """Concatenate per-symbol chip patterns; 327 symbols -> 52320 chips."""
    symbols = as_bits(frame_symbols, "frame_symbols")
    if symbols.size == 0:
        raise ValueError("frame must contain at least one symbol")
    return _symbol_patterns(spec)[symbols].reshape(-1)


def apply_clock_drift(chips, drift_ppm: float) -> np.ndarray:
    """Stretch chip boundaries by (1 + drift_ppm×1e-6), nearest-chip pick.

    Positive drift models a slow tag clock: every chip lasts slightly
    longer, so the sampled sequence grows by about drift_ppm×1e-6 of its
    length; negative drift shrinks it the same way.
    """
    if abs(drift_ppm) > 100:
        raise ValueError("|drift_ppm| must be <= 100")
    seq = np.asarray(chips)
    if seq.ndim != 1:
        raise ValueError("chips must be one-dimensional")
    factor = 1.0 + drift_ppm * 1e-6
    if drift_ppm == 0 or seq.size == 0:
        return seq.copy()
    n_out = int(round(seq.size * factor))
    src = np.rint(np.arange(n_out) / factor).astype(np.int64)
    return seq[np.clip(src, 0, seq.size - 1)]
