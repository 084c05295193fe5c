"""Synthetic channel-estimate streams carrying the backscatter on/off tone.

The model is one complex estimate per pilot occasion: a direct-path phasor,
plus the backscatter coefficient whenever the tag reflects, plus complex
AWGN standing in for estimator noise.  Pilot occasions are either uniform
(idealized, 250 us) or alternating two sub-slot spacings like downlink
reference symbols; the alternating layout also carries a small periodic
estimation-gain ripple, which is what puts the well-known 1 kHz line into
the magnitude stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .coding import as_bits
from .waveform import FskSpec, chips_for_symbol

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PilotPattern:
    """Timing of the channel-estimate stream.

    uniform: one estimate every interval_s.  alternating: estimates pair
    up inside a half-millisecond slot, delta1_s then delta2_s apart, the
    way reference-symbol positions do; the two deltas must average to
    interval_s so the long-run rate is unchanged.
    """

    kind: str = "uniform"
    interval_s: float = 250e-6
    delta1_s: float = 285.7e-6
    delta2_s: float = 214.3e-6

    def __post_init__(self) -> None:
        if self.kind not in ("uniform", "alternating"):
            raise ValueError("kind must be 'uniform' or 'alternating'")
        if min(self.interval_s, self.delta1_s, self.delta2_s) <= 0:
            raise ValueError("pilot intervals must be positive")
        if self.kind == "alternating":
            if abs(self.delta1_s + self.delta2_s - 2 * self.interval_s) > 1e-9:
                raise ValueError("alternating deltas must sum to one slot "
                                 "(2x interval_s)")

    def timestamps(self, n: int) -> np.ndarray:
        if n < 1:
            raise ValueError("need at least one estimate")
        if self.kind == "uniform":
            return np.arange(n) * self.interval_s
        slot = self.delta1_s + self.delta2_s
        m = np.arange(n)
        return (m // 2) * slot + (m % 2) * self.delta1_s


UNIFORM_PILOTS = PilotPattern()
ALTERNATING_PILOTS = PilotPattern(kind="alternating")


@dataclass(frozen=True)
class ChannelParams:
    """Estimate-stream synthesis knobs.

    backscatter_gain is the whole tag path collapsed into one complex
    coefficient.  bd_phase picks how that coefficient rides the direct
    path's phase rotation: "locked" co-rotates it (tag and receiver see
    the same field, the idealized/static-geometry case, so the magnitude
    tone is steady), "independent" keeps it fixed while the direct path
    rotates, so Doppler leaks into the magnitude stream.
    pilot_gain_ripple is a small subframe-periodic estimation-gain
    modulation applied only under the alternating pattern (period four
    estimates = 1 ms).
    """

    hr_amplitude: complex = 1.0 + 0.0j
    doppler_hz: float = 10.0
    backscatter_gain: complex = 0.05 + 0.0j
    noise_variance: float = 0.0
    freq_offset_hz: float = 0.0
    pilot_pattern: PilotPattern = UNIFORM_PILOTS
    bd_phase: str = "locked"
    pilot_gain_ripple: float = 0.02

    def __post_init__(self) -> None:
        if self.noise_variance < 0:
            raise ValueError("noise_variance must be nonnegative")
        if self.bd_phase not in ("locked", "independent"):
            raise ValueError("bd_phase must be 'locked' or 'independent'")
        if not 0 <= self.pilot_gain_ripple < 1:
            raise ValueError("pilot_gain_ripple must be in [0, 1)")


@dataclass
class EstimateSeries:
    """Complex channel estimates with their pilot timestamps."""

    timestamps: np.ndarray
    values: np.ndarray

    def __post_init__(self) -> None:
        self.timestamps = np.asarray(self.timestamps, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.complex128)
        if self.timestamps.shape != self.values.shape or self.timestamps.ndim != 1:
            raise ValueError("timestamps and values must be 1-D and equal length")
        if self.timestamps.size > 1 and not np.all(np.diff(self.timestamps) > 0):
            raise ValueError("timestamps must be strictly increasing")

    def __len__(self) -> int:
        return self.values.size


def _rotation(params: ChannelParams, t: np.ndarray, phi0: float):
    """exp(j(2π f t + φ0)) for the total direct-path rotation; collapses
    to a scalar when there is no frequency content (hot path)."""
    f = params.doppler_hz + params.freq_offset_hz
    if f == 0.0:
        return complex(math.cos(phi0), math.sin(phi0))
    return np.exp(1j * (TWO_PI * f * t + phi0))


def synthesize_direct_path(n: int, params: ChannelParams, seed) -> np.ndarray:
    """Direct-path phasor at each pilot occasion; the random start phase
    comes from the seeded generator (first draw, shared with
    synthesize_estimates)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    phi0 = rng.uniform(0.0, TWO_PI)
    t = params.pilot_pattern.timestamps(n)
    rot = _rotation(params, t, phi0)
    return np.broadcast_to(params.hr_amplitude * rot, (n,)).astype(np.complex128)


def _ripple(params: ChannelParams, n: int):
    if params.pilot_pattern.kind != "alternating" or params.pilot_gain_ripple == 0:
        return None
    cycle = np.array([1.0, 0.0, -1.0, 0.0])
    return 1.0 + params.pilot_gain_ripple * cycle[np.arange(n) % 4]


def synthesize_estimates(chips, params: ChannelParams, seed) -> EstimateSeries:
    """One complex estimate per chip: direct path + gain·b[m] + noise.

    The chip and pilot clocks are nominally the same rate, so estimate m
    sees chip m; tag clock error is modeled upstream on the chip sequence
    itself (waveform.apply_clock_drift).
    """
    b = as_bits(chips, "chips")
    if b.size == 0:
        raise ValueError("need at least one chip")
    n = b.size
    rng = np.random.default_rng(seed)
    phi0 = rng.uniform(0.0, TWO_PI)
    t = params.pilot_pattern.timestamps(n)
    rot = _rotation(params, t, phi0)
    bf = b.astype(np.float64)

    if params.bd_phase == "locked":
        signal = (params.hr_amplitude + params.backscatter_gain * bf) * rot
    else:
        signal = params.hr_amplitude * rot + params.backscatter_gain * bf

    ripple = _ripple(params, n)
    if ripple is not None:
        signal = signal * ripple

    if params.noise_variance > 0:
        scale = math.sqrt(params.noise_variance / 2.0)
        noise = scale * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
        values = signal + noise
    else:
        values = signal + 0j
    return EstimateSeries(t, values)


def magnitude_series(est: EstimateSeries) -> np.ndarray:
    """z[m] = |ĥ[m]|², the detector's real-valued input."""
    v = est.values
    return (v.real * v.real + v.imag * v.imag)


def _matched_bin_energy(fsk: FskSpec, bit: int) -> float:
    """|DFT bin|² of one symbol's chip pattern at its own tone."""
    pattern = chips_for_symbol(bit, fsk).astype(np.float64)
    m = np.arange(pattern.size)
    c = np.sum(pattern * np.exp(-1j * TWO_PI * fsk.tone(bit) * m / fsk.sample_rate))
    return float(abs(c) ** 2)


def calibrate_noise(params: ChannelParams, fsk: FskSpec,
                    target_ebn0_db: float) -> float:
    """Noise variance that puts the detector-input Eb/N0 at the target.

    Eb is the per-symbol energy the reflection puts into its matched tone
    bin of the magnitude stream (averaged over the two tones), N0 the
    bin-level noise density; both scale out the direct-path level, which
    leaves sigma² = 2|g|²·c̄²/(N·γ).  Assumes the tag coefficient is
    phase-aligned with the direct path (the locked default); a misaligned
    coefficient lowers the realized Eb by its cosine.
    """
    g2 = abs(params.backscatter_gain) ** 2
    if g2 == 0:
        raise ValueError("backscatter_gain must be nonzero to calibrate")
    if math.isinf(target_ebn0_db) and target_ebn0_db > 0:
        return 0.0
    gamma = 10.0 ** (target_ebn0_db / 10.0)
    cbar2 = 0.5 * (_matched_bin_energy(fsk, 0) + _matched_bin_energy(fsk, 1))
    return 2.0 * g2 * cbar2 / (fsk.chips_per_symbol * gamma)
