"""Frame assembly and parsing: triple-Barker sync header plus one coded block.

A frame is 327 binary symbols: a fixed 21-symbol header (a length-7 Barker
word sent twice, then inverted once) followed by the 306 coded bits of an
80-bit payload with its 16-bit CRC.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .coding import (
    CodeSpec,
    DEFAULT_CODE,
    as_bits,
    conv_encode,
    crc16_bits,
    crc16_verify,
    viterbi_decode,
)

BARKER7 = (1, 1, 1, 0, 0, 1, 0)
PAYLOAD_BITS = 80
BLOCK_BITS = 96          # payload + CRC, the convolutional code input
HEADER_SYMBOLS = 21
CODED_SYMBOLS = DEFAULT_CODE.coded_length(BLOCK_BITS)
FRAME_SYMBOLS = HEADER_SYMBOLS + CODED_SYMBOLS


@dataclass(frozen=True)
class SyncHeader:
    """The fixed 21-symbol synchronization prefix."""

    symbols: tuple[int, ...]

    def __post_init__(self) -> None:
        if len(self.symbols) != HEADER_SYMBOLS:
            raise ValueError(f"header must be {HEADER_SYMBOLS} symbols")
        if any(s not in (0, 1) for s in self.symbols):
            raise ValueError("header symbols must be 0/1")

    @property
    def bits(self) -> np.ndarray:
        return np.array(self.symbols, dtype=np.uint8)

    @property
    def signs(self) -> np.ndarray:
        """±1 correlation template; bit 0 maps to +1 (the repo-wide soft
        convention: positive soft value means bit 0)."""
        return 1.0 - 2.0 * self.bits.astype(np.float64)


def build_sync_header() -> SyncHeader:
    """Barker word twice, then its complement: 111001011100100001101."""
    inverted = tuple(1 - b for b in BARKER7)
    return SyncHeader(BARKER7 + BARKER7 + inverted)


def assemble_frame(payload, spec: CodeSpec = DEFAULT_CODE) -> np.ndarray:
    """Header ++ conv_encode(payload ++ crc16(payload)); 327 symbols."""
    bits = as_bits(payload, "payload")
    if bits.size != PAYLOAD_BITS:
        raise ValueError(f"payload must be {PAYLOAD_BITS} bits, got {bits.size}")
    block = np.concatenate([bits, crc16_bits(bits)])
    return np.concatenate([build_sync_header().bits, conv_encode(block, spec)])


def extract_payload(decoded_block) -> tuple[np.ndarray, bool]:
    """Split a decoded 96-bit block into (payload, crc_ok)."""
    block = as_bits(decoded_block, "decoded_block")
    if block.size != BLOCK_BITS:
        raise ValueError(f"decoded block must be {BLOCK_BITS} bits")
    return block[:PAYLOAD_BITS].copy(), crc16_verify(block)


def decode_frame_soft(soft_coded, spec: CodeSpec = DEFAULT_CODE):
    """Viterbi-decode the 306 coded soft values of one frame.

    Returns (payload, crc_ok, path_metric).  Convenience composition used
    by the receiver; soft sign convention as in coding.viterbi_decode.
    """
    block, metric = viterbi_decode(soft_coded, spec)
    payload, ok = extract_payload(block)
    return payload, ok, metric
