"""Estimate-series I/O: binary and CSV files, and UDP ingestion.

The binary layout is little-endian throughout: magic "AMBCE", version
byte 1, sample rate as f64, sample count as u64 (22 header bytes), then
count interleaved (f32 re, f32 im) pairs.  It stores uniformly sampled
series only; timestamps are reconstructed from the rate on read.  CSV
carries explicit timestamps and accepts any spacing.  Values round
through 32-bit floats in both formats, so the two parse identically.

Datagrams are seq:u32, n:u16, then n (f32 re, f32 im) pairs, 6 + 8n
bytes.  A sequence gap is reported to the handler so downstream sync
state can be reset; stale and duplicate sequence numbers are dropped.
"""

from __future__ import annotations

import csv
import socket
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import EstimateSeries

MAGIC = b"AMBCE"
VERSION = 1
_HEADER = struct.Struct("<5sBdQ")      # 22 bytes
_DGRAM_HEAD = struct.Struct("<IH")     # 6 bytes
MAX_DGRAM_SAMPLES = 8000


class EstimateFormatError(ValueError):
    """Malformed estimate file or datagram."""


def _uniform_rate(series: EstimateSeries) -> float:
    t = series.timestamps
    if t.size < 2:
        return 4000.0
    dt = np.diff(t)
    step = float(np.mean(dt))
    if np.max(np.abs(dt - step)) > 0.02 * step:
        raise ValueError(
            "binary format stores uniformly sampled series only; "
            "use csv for irregular timestamps")
    return 1.0 / step


def _interleave_f32(values: np.ndarray) -> np.ndarray:
    out = np.empty(2 * values.size, dtype="<f4")
    out[0::2] = values.real.astype(np.float32)
    out[1::2] = values.imag.astype(np.float32)
    return out


def write_estimates(series: EstimateSeries, path, format: str = "binary") -> None:
    if format == "binary":
        rate = _uniform_rate(series)
        with open(path, "wb") as fh:
            fh.write(_HEADER.pack(MAGIC, VERSION, rate, len(series)))
            fh.write(_interleave_f32(series.values).tobytes())
    elif format == "csv":
        with open(path, "w", newline="") as fh:
            out = csv.writer(fh)
            out.writerow(("timestamp_s", "re", "im"))
            re32 = series.values.real.astype(np.float32)
            im32 = series.values.imag.astype(np.float32)
            for t, re, im in zip(series.timestamps, re32, im32):
                out.writerow((repr(float(t)), repr(float(re)),
                              repr(float(im))))
    else:
        raise ValueError(f"unknown format {format!r}; use binary or csv")


def _read_binary(raw: bytes, path) -> EstimateSeries:
    if len(raw) < _HEADER.size:
        raise EstimateFormatError(
            f"{path}: truncated header, {len(raw)} bytes < {_HEADER.size}")
    magic, version, rate, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise EstimateFormatError(f"{path}: bad magic at offset 0: {magic!r}")
    if version != VERSION:
        raise EstimateFormatError(
            f"{path}: unsupported version {version} at offset 5")
    if rate <= 0:
        raise EstimateFormatError(f"{path}: bad sample rate at offset 6")
    need = _HEADER.size + 8 * count
    if len(raw) != need:
        raise EstimateFormatError(
            f"{path}: expected {need} bytes for {count} samples, "
            f"got {len(raw)} (payload starts at offset {_HEADER.size})")
    flat = np.frombuffer(raw, dtype="<f4", offset=_HEADER.size)
    values = flat[0::2].astype(np.float64) + 1j * flat[1::2].astype(np.float64)
    t = np.arange(count) / rate
    return EstimateSeries(t, values)


def _read_csv(path) -> EstimateSeries:
    ts, re, im = [], [], []
    with open(path, newline="") as fh:
        rows = csv.reader(fh)
        header = next(rows, None)
        if header != ["timestamp_s", "re", "im"]:
            raise EstimateFormatError(
                f"{path}: line 1: expected header timestamp_s,re,im")
        for lineno, row in enumerate(rows, 2):
            if len(row) != 3:
                raise EstimateFormatError(
                    f"{path}: line {lineno}: expected 3 fields")
            try:
                ts.append(float(row[0]))
                re.append(float(row[1]))
                im.append(float(row[2]))
            except ValueError:
                raise EstimateFormatError(
                    f"{path}: line {lineno}: non-numeric field") from None
    values = np.asarray(re, dtype=np.float64) + 1j * np.asarray(im)
    return EstimateSeries(np.asarray(ts, dtype=np.float64), values)


def read_estimates(path) -> EstimateSeries:
    """Load a series written by write_estimates, sniffing the format."""
    with open(path, "rb") as fh:
        head = fh.read(len(MAGIC))
    if head == MAGIC:
        return _read_binary(Path(path).read_bytes(), path)
    try:
        return _read_csv(path)
    except UnicodeDecodeError:
        raise EstimateFormatError(
            f"{path}: bad magic at offset 0: {head!r} (not {MAGIC!r}, "
            "not CSV)") from None


def build_datagram(seq: int, values: np.ndarray) -> bytes:
    v = np.asarray(values, dtype=np.complex128)
    if not 1 <= v.size <= MAX_DGRAM_SAMPLES:
        raise ValueError(f"datagram holds 1..{MAX_DGRAM_SAMPLES} samples")
    return _DGRAM_HEAD.pack(seq & 0xFFFFFFFF, v.size) \
        + _interleave_f32(v).tobytes()


def parse_datagram(data: bytes) -> tuple[int, np.ndarray]:
    if len(data) < _DGRAM_HEAD.size:
        raise EstimateFormatError(
            f"datagram too short: {len(data)} bytes")
    seq, n = _DGRAM_HEAD.unpack_from(data)
    if n < 1:
        raise EstimateFormatError("datagram sample count must be >= 1")
    if len(data) != _DGRAM_HEAD.size + 8 * n:
        raise EstimateFormatError(
            f"datagram length {len(data)} does not match n={n} "
            f"(want {_DGRAM_HEAD.size + 8 * n})")
    flat = np.frombuffer(data, dtype="<f4", offset=_DGRAM_HEAD.size)
    return seq, flat[0::2].astype(np.float64) + 1j * flat[1::2].astype(np.float64)


@dataclass
class IngestStats:
    datagrams: int = 0
    samples: int = 0
    gaps: int = 0
    duplicates: int = 0
    malformed: int = 0


def udp_ingest(port: int, handler, *, host: str = "127.0.0.1",
               idle_timeout_s: float | None = None,
               max_datagrams: int | None = None,
               stop=None) -> IngestStats:
    """Receive estimate datagrams and forward them in sequence order.

    handler("data", values) gets each in-order chunk; handler("gap", k)
    fires when k sequence numbers went missing, so the consumer can
    reset its sync state before the stream resumes.  Duplicates and
    stale sequence numbers are dropped, malformed datagrams counted.

    Returns when idle_timeout_s passes without traffic, max_datagrams
    have been accepted, or stop() goes true.
    """
    stats = IngestStats()
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as sock:
        sock.bind((host, port))
        sock.settimeout(0.2 if idle_timeout_s is None else
                        min(0.2, idle_timeout_s))
        idle = 0.0
        expected: int | None = None
        while True:
            if stop is not None and stop():
                break
            if max_datagrams is not None and stats.datagrams >= max_datagrams:
                break
            try:
                data, _ = sock.recvfrom(65536)
            except socket.timeout:
                idle += sock.gettimeout()
                if idle_timeout_s is not None and idle >= idle_timeout_s:
                    break
                continue
            idle = 0.0
            try:
                seq, values = parse_datagram(data)
            except EstimateFormatError:
                stats.malformed += 1
                continue
            if expected is not None:
                delta = (seq - expected) & 0xFFFFFFFF
                if delta == 0:
                    pass                      # next in order
                elif delta > 0x7FFFFFFF:      # behind: stale or duplicate
                    stats.duplicates += 1
                    continue
                else:
                    stats.gaps += 1
                    handler("gap", delta)
            expected = (seq + 1) & 0xFFFFFFFF
            stats.datagrams += 1
            stats.samples += values.size
            handler("data", values)
    return stats
