"""Block CRC and the rate-1/3 convolutional code of the link layer.

Bit sequences are 1-D uint8 arrays of 0/1 values throughout.  Soft values
are real numbers where positive means "bit 0 is more likely"; that sign
convention is fixed repo-wide and every consumer of soft metrics in this
package relies on it.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from heapq import heappop, heappush
import math

import numpy as np


def as_bits(x, name: str = "bits") -> np.ndarray:
    """Normalize an array-like of 0/1 values to a uint8 array."""
    arr = np.asarray(x)
    if arr.ndim != 1:
        raise ValueError(f"{name} must be one-dimensional")
    arr = arr.astype(np.uint8)
    if arr.size and arr.max() > 1:
        raise ValueError(f"{name} may contain only 0 and 1")
    return arr


@dataclass(frozen=True)
class CrcSpec:
    """CRC-CCITT: x^16 + x^12 + x^5 + 1, zero init, no final XOR."""

    poly: int = 0x11021
    width: int = 16
    init: int = 0x0000
    final_xor: int = 0x0000


CRC_CCITT = CrcSpec()


@dataclass(frozen=True)
class CodeSpec:
    """Feed-forward convolutional code, zero-tail terminated.

    Tap masks are read current-bit-first: the MSB of each tap selects the
    newest input bit, lower bits select progressively older history.  The
    defaults are the generators 1011011 / 1111001 / 1110101 at constraint
    length 7 (octal 133/171/165).

    block_bits pins the expected message length (info + CRC) for the
    framing path; pass None for a free-length code (toy trellises in
    tests, distance searches).
    """

    taps: tuple[int, ...] = (0b1011011, 0b1111001, 0b1110101)
    constraint_length: int = 7
    termination: str = "zero-tail"
    block_bits: int | None = 96

    def __post_init__(self) -> None:
        if not self.taps:
            raise ValueError("at least one generator tap required")
        if self.constraint_length < 1:
            raise ValueError("constraint_length must be >= 1")
        if self.termination != "zero-tail":
            raise ValueError("only zero-tail termination is supported")
        top = 1 << self.constraint_length
        if any(not 0 < t < top for t in self.taps):
            raise ValueError("tap masks must be nonzero and fit the constraint length")
        if self.block_bits is not None and self.block_bits < 1:
            raise ValueError("block_bits must be positive when set")

    @property
    def n_streams(self) -> int:
        return len(self.taps)

    @property
    def memory(self) -> int:
        return self.constraint_length - 1

    @property
    def n_states(self) -> int:
        return 1 << self.memory

    @property
    def tail_bits(self) -> int:
        return self.memory

    @property
    def rate(self) -> float:
        return 1.0 / self.n_streams

    def coded_length(self, message_bits: int) -> int:
        return (message_bits + self.tail_bits) * self.n_streams


DEFAULT_CODE = CodeSpec()


def crc16_compute(message, spec: CrcSpec = CRC_CCITT) -> int:
    """Remainder of message(x)·x^16 mod the generator, MSB-first.

    The register starts at spec.init; each message bit enters at the top
    of the 16-bit register.
    """
    bits = as_bits(message, "message")
    if bits.size == 0:
        raise ValueError("message must be non-empty")
    reg = spec.init
    top = 1 << (spec.width - 1)
    mask = (1 << spec.width) - 1
    poly = spec.poly & mask
    for b in bits:
        feedback = ((reg >> (spec.width - 1)) ^ b) & 1
        reg = ((reg << 1) & mask) ^ (poly if feedback else 0)
    return reg ^ spec.final_xor


def crc16_bits(message, spec: CrcSpec = CRC_CCITT) -> np.ndarray:
    """The 16 CRC bits for message, MSB first, ready to append."""
    r = crc16_compute(message, spec)
    return np.array([(r >> (spec.width - 1 - i)) & 1 for i in range(spec.width)],
                    dtype=np.uint8)


def crc16_verify(message_with_crc, spec: CrcSpec = CRC_CCITT) -> bool:
    """True iff the trailing 16 bits are the CRC of everything before them."""
    bits = as_bits(message_with_crc, "message_with_crc")
    if bits.size < spec.width + 1:
        raise ValueError("need at least one message bit plus the 16 CRC bits")
    expected = crc16_bits(bits[: -spec.width], spec)
    return bool(np.array_equal(bits[-spec.width:], expected))


@lru_cache(maxsize=16)
def _tap_matrix(spec: CodeSpec) -> np.ndarray:
    """(n_streams, K) 0/1 matrix; column 0 selects the newest bit."""
    k = spec.constraint_length
    return np.array(
        [[(g >> (k - 1 - i)) & 1 for i in range(k)] for g in spec.taps],
        dtype=np.uint8,
    )


def conv_encode(message, spec: CodeSpec = DEFAULT_CODE) -> np.ndarray:
    """Zero-tail encode: append K-1 zeros, emit n_streams bits per step.

    Output interleaving is stream-major within each step:
    d0[k], d1[k], d2[k], d0[k+1], ...
    """
    bits = as_bits(message, "message")
    if bits.size == 0:
        raise ValueError("message must be non-empty")
    if spec.block_bits is not None and bits.size != spec.block_bits:
        raise ValueError(f"expected {spec.block_bits} message bits, got {bits.size}")
    padded = np.concatenate([bits, np.zeros(spec.tail_bits, dtype=np.uint8)])
    taps = _tap_matrix(spec)
    steps = padded.size
    out = np.zeros((steps, spec.n_streams), dtype=np.uint8)
    # d_j[k] = XOR over i of g_j[i] * u[k-i]; a mod-2 convolution per stream.
    for j in range(spec.n_streams):
        full = np.convolve(padded, taps[j]) & 1
        out[:, j] = full[:steps]
    return out.reshape(-1)


def noiseless_soft(coded_bits, amplitude: float = 1.0) -> np.ndarray:
    """Map coded bits to ideal soft values: 0 -> +amplitude, 1 -> -amplitude."""
    bits = as_bits(coded_bits, "coded_bits")
    return amplitude * (1.0 - 2.0 * bits.astype(np.float64))


@lru_cache(maxsize=16)
def _trellis(spec: CodeSpec):
    """Transition tables for Viterbi and distance search.

    State = the memory most-recent past bits, newest in the MSB.  With
    input u at state s the shift register content is (u << memory) | s.
    """
    k = spec.constraint_length
    mem, n_states = spec.memory, spec.n_states
    states = np.arange(n_states, dtype=np.int64)
    out_bits = np.zeros((n_states, 2, spec.n_streams), dtype=np.uint8)
    next_state = np.zeros((n_states, 2), dtype=np.int64)
    for u in (0, 1):
        reg = (u << mem) | states
        for j, g in enumerate(spec.taps):
            masked = reg & g
            # parity of up to K bits
            par = np.zeros_like(masked)
            for i in range(k):
                par ^= (masked >> i) & 1
            out_bits[:, u, j] = par.astype(np.uint8)
        next_state[:, u] = (u << (mem - 1)) | (states >> 1) if mem else 0

    prev_state = np.zeros((n_states, 2), dtype=np.int64)
    prev_input = np.zeros((n_states, 2), dtype=np.int64)
    slot = np.zeros(n_states, dtype=np.int64)
    for s in range(n_states):
        for u in (0, 1):
            ns = next_state[s, u]
            prev_state[ns, slot[ns]] = s
            prev_input[ns, slot[ns]] = u
            slot[ns] += 1

    signs = (1.0 - 2.0 * out_bits.astype(np.float64)).reshape(n_states * 2,
                                                              spec.n_streams)
    # flat (state, input) gather indices for the two incoming branches
    pred_flat = prev_state * 2 + prev_input
    return out_bits, next_state, prev_state, prev_input, pred_flat, signs


def viterbi_decode(soft, spec: CodeSpec = DEFAULT_CODE) -> tuple[np.ndarray, float]:
    """Maximum-likelihood message under the additive per-bit soft metric.

    The trellis starts and ends in the all-zero state (zero-tail).  The
    metric of a branch emitting coded bit d against soft value s is
    +s for d=0 and -s for d=1; the decoder maximizes the sum.  Returns
    (message bits with the tail stripped, winning path metric).
    """
    values = np.asarray(soft, dtype=np.float64)
    if values.ndim != 1:
        raise ValueError("soft values must be one-dimensional")
    if not np.all(np.isfinite(values)):
        raise ValueError("soft values must be finite")
    n = spec.n_streams
    if values.size == 0 or values.size % n:
        raise ValueError(f"soft length must be a positive multiple of {n}")
    steps = values.size // n
    if steps <= spec.memory:
        raise ValueError("soft sequence shorter than the termination tail")
    if spec.block_bits is not None and steps != spec.block_bits + spec.tail_bits:
        raise ValueError(
            f"expected {spec.coded_length(spec.block_bits)} soft values, "
            f"got {values.size}")

    _, _, prev_state, prev_input, pred_flat, signs = _trellis(spec)
    n_states = spec.n_states
    pm = np.full(n_states, -np.inf)
    pm[0] = 0.0
    back = np.zeros((steps, n_states), dtype=np.uint8)
    soft_steps = values.reshape(steps, n)
    p0, p1 = pred_flat[:, 0], pred_flat[:, 1]
    s0, s1 = prev_state[:, 0], prev_state[:, 1]
    for t in range(steps):
        bm = signs @ soft_steps[t]          # (n_states*2,)
        cand0 = pm[s0] + bm[p0]
        cand1 = pm[s1] + bm[p1]
        better1 = cand1 > cand0
        pm = np.where(better1, cand1, cand0)
        back[t] = better1

    metric = float(pm[0])
    bits = np.zeros(steps, dtype=np.uint8)
    state = 0
    for t in range(steps - 1, -1, -1):
        side = back[t, state]
        bits[t] = prev_input[state, side]
        state = prev_state[state, side]
    return bits[: steps - spec.memory], metric


def free_distance(spec: CodeSpec = DEFAULT_CODE) -> int:
    """Minimum Hamming weight of any nonzero path leaving and re-entering
    the zero state, by lowest-weight-first search (weights are nonnegative,
    so the first arrival back at state 0 is optimal).
    """
    out_bits, next_state, *_ = _trellis(spec)
    weights = out_bits.sum(axis=2).astype(np.int64)  # (n_states, 2)
    if spec.memory == 0:
        return int(weights[0, 1])

    start = int(next_state[0, 1])
    best = np.full(spec.n_states, np.iinfo(np.int64).max)
    heap = [(int(weights[0, 1]), start)]
    while heap:
        w, s = heappop(heap)
        if s == 0:
            return w
        if w >= best[s]:
            continue
        best[s] = w
        for u in (0, 1):
            heappush(heap, (w + int(weights[s, u]), int(next_state[s, u])))
    raise RuntimeError("zero state unreachable; catastrophic generator set")


def coding_gain_bound(rate: float, dfree: int) -> float:
    """Soft-decision asymptotic coding gain bound, 10·log10(rate · dfree)."""
    if not 0 < rate <= 1:
        raise ValueError("rate must be in (0, 1]")
    if dfree < 1:
        raise ValueError("dfree must be >= 1")
    return 10.0 * math.log10(rate * dfree)
