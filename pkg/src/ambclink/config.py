"""Flat key=value run configuration.

One document, no sections, no includes: every knob for a reproducible
run lives in a LinkConfig, and golden runs are compared by these values
alone.  Defaults are the bench setup: 250/625 Hz tones, 40 ms symbols at
4 kHz, rate-1/3 constraint-7 code, locked reflection at gain 0.05.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path

from .channel import ALTERNATING_PILOTS, UNIFORM_PILOTS, ChannelParams
from .coding import CodeSpec
from .receiver import DEFAULT_CUTOFF_HZ, SYNC_THRESHOLD_FACTOR
from .waveform import FskSpec

_PILOT_PATTERNS = {"uniform": UNIFORM_PILOTS, "alternating": ALTERNATING_PILOTS}


@dataclass(frozen=True)
class LinkConfig:
    # waveform
    f0_hz: float = 250.0
    f1_hz: float = 625.0
    symbol_s: float = 0.04
    sample_rate_hz: float = 4000.0
    gap_s: float = 0.5
    # code (binary tap masks, current bit first)
    code_taps: str = "1011011,1111001,1110101"
    # channel
    hr_re: float = 1.0
    hr_im: float = 0.0
    gain_re: float = 0.05
    gain_im: float = 0.0
    doppler_hz: float = 10.0
    freq_offset_hz: float = 0.0
    pilot_pattern: str = "uniform"
    bd_phase: str = "locked"
    pilot_gain_ripple: float = 0.02
    # receiver
    sync_threshold: float = SYNC_THRESHOLD_FACTOR
    hp_cutoff_hz: float = DEFAULT_CUTOFF_HZ
    # transmitter clock error applied in simulation trials
    drift_ppm: float = 0.0

    def __post_init__(self) -> None:
        # tones must complete whole cycles per symbol window or the
        # single-bin energies stop being orthogonal
        for f in (self.f0_hz, self.f1_hz):
            cycles = self.symbol_s * f
            if abs(cycles - round(cycles)) > 1e-9:
                raise ValueError(
                    f"symbol_s x {f} Hz = {cycles} cycles: tones must fit an "
                    "integer cycle count per symbol")
        chips = self.symbol_s * self.sample_rate_hz
        if abs(chips - round(chips)) > 1e-9:
            raise ValueError("symbol_s must be a whole number of samples")
        if self.pilot_pattern not in _PILOT_PATTERNS:
            raise ValueError(f"pilot_pattern must be one of "
                             f"{sorted(_PILOT_PATTERNS)}")
        if not 0.0 < self.sync_threshold < 1.0:
            raise ValueError("sync_threshold must be in (0, 1)")
        if abs(self.drift_ppm) > 100.0:
            raise ValueError("drift_ppm out of the supported +/-100 range")
        # constructing the specs runs their own validators
        self.fsk_spec()
        self.channel_params()
        self.code_spec()

    def fsk_spec(self) -> FskSpec:
        return FskSpec(f0=self.f0_hz, f1=self.f1_hz, symbol_s=self.symbol_s,
                       sample_rate=self.sample_rate_hz, gap_s=self.gap_s)

    def channel_params(self, noise_variance: float = 0.0) -> ChannelParams:
        return ChannelParams(
            hr_amplitude=complex(self.hr_re, self.hr_im),
            doppler_hz=self.doppler_hz,
            backscatter_gain=complex(self.gain_re, self.gain_im),
            noise_variance=noise_variance,
            freq_offset_hz=self.freq_offset_hz,
            pilot_pattern=_PILOT_PATTERNS[self.pilot_pattern],
            bd_phase=self.bd_phase,
            pilot_gain_ripple=self.pilot_gain_ripple)

    def code_spec(self) -> CodeSpec:
        masks = [s.strip() for s in self.code_taps.split(",") if s.strip()]
        if not masks or not all(set(m) <= {"0", "1"} for m in masks):
            raise ValueError("code_taps must be comma-separated binary masks")
        return CodeSpec(taps=tuple(int(m, 2) for m in masks),
                        constraint_length=max(len(m) for m in masks))


def load_config(path) -> LinkConfig:
    """Parse `key = value` lines into a LinkConfig.

    Blank lines and `#` comments are ignored; later duplicates win.
    Unknown keys and malformed values are rejected by name; an empty file
    yields the defaults.
    """
    converters = {f.name: type(f.default) for f in fields(LinkConfig)}
    overrides: dict[str, object] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{lineno}: expected `key = value`")
        key, _, value = (part.strip() for part in line.partition("="))
        if key not in converters:
            raise ValueError(f"{path}:{lineno}: unknown configuration "
                             f"key {key!r}")
        try:
            overrides[key] = converters[key](value)
        except ValueError as exc:
            raise ValueError(f"{path}:{lineno}: bad value for {key!r}: "
                             f"{exc}") from None
    return LinkConfig(**overrides)
