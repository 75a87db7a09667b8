"""Framing and forward error correction for the side-channel bit stream.

A frame is the alternating preamble ``1,0,1,0`` followed by the payload,
optionally protected by a systematic Hamming (7,4) or (15,11) code.

Hamming convention: each codeword position owns a nonzero r-bit column
of the parity-check matrix. Data positions take the non-power-of-two
values and parity positions the powers of two, each group in ascending
order; the codeword is ``data ++ parity``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum
from functools import lru_cache
from typing import Optional, Sequence

import numpy as np

from dopplerfi.errors import CodecError

logger = logging.getLogger(__name__)

PREAMBLE = np.array([1, 0, 1, 0], dtype=np.int8)


class Code(Enum):
    NONE = "none"
    H74 = "h74"
    H1511 = "h1511"

    @property
    def n(self) -> int:
        return {"none": 1, "h74": 7, "h1511": 15}[self.value]

    @property
    def k(self) -> int:
        return {"none": 1, "h74": 4, "h1511": 11}[self.value]

    @property
    def rate(self) -> float:
        return self.k / self.n

    @classmethod
    def parse(cls, name: str | Code) -> Code:
        if isinstance(name, Code):
            return name
        key = str(name).strip().lower().replace("(", "").replace(")", "").replace(",", "")
        aliases = {"74": "h74", "1511": "h1511", "hamming74": "h74", "hamming1511": "h1511"}
        try:
            return cls(aliases.get(key, key))
        except ValueError:
            valid = ", ".join(c.value for c in cls)
            raise CodecError(f"Unknown code: {name!r}. Available: {valid}") from None


@dataclass(frozen=True)
class SideChannelFrame:
    preamble: np.ndarray
    payload: np.ndarray
    code: Code = Code.NONE

    @property
    def bits(self) -> np.ndarray:
        return np.concatenate([self.preamble, self.payload]).astype(np.int8)


@dataclass(frozen=True)
class DecodedFrame:
    """Payload recovered from a received stream."""

    data: np.ndarray
    corrections: int
    payload_start: int


# ---------------------------------------------------------------------------
# Hamming
# ---------------------------------------------------------------------------

@lru_cache(maxsize=None)
def _tables(code: Code) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(parity generator k x r, column bits n x r, syndrome -> position)."""
    r = code.n - code.k
    values = np.arange(1, code.n + 1)
    powers = values[(values & (values - 1)) == 0]
    others = values[(values & (values - 1)) != 0]
    columns = np.concatenate([others, powers])
    col_bits = (columns[:, None] >> np.arange(r)) & 1
    generator = col_bits[: code.k]
    lookup = np.full(1 << r, -1, dtype=np.int64)
    lookup[columns] = np.arange(code.n)
    for arr in (generator, col_bits, lookup):
        arr.setflags(write=False)
    return generator, col_bits, lookup


def _as_bits(bits: Sequence[int] | np.ndarray) -> np.ndarray:
    arr = np.asarray(bits, dtype=np.int8).ravel()
    if arr.size and not np.all((arr == 0) | (arr == 1)):
        raise CodecError("bit vectors may only contain 0 and 1")
    return arr


def hamming_encode(data: Sequence[int] | np.ndarray, code: Code | str) -> np.ndarray:
    """Systematic encode; *data* length must be a multiple of k."""
    code = Code.parse(code)
    data = _as_bits(data)
    if code is Code.NONE:
        return data.copy()
    if data.size % code.k:
        raise CodecError(f"{code.value} needs a multiple of {code.k} data bits, got {data.size}")
    generator, _, _ = _tables(code)
    blocks = data.reshape(-1, code.k)
    parity = (blocks.astype(np.int64) @ generator) % 2
    return np.hstack([blocks, parity]).astype(np.int8).ravel()


def hamming_decode(code_bits: Sequence[int] | np.ndarray, code: Code | str) -> tuple[np.ndarray, int]:
    """Syndrome decode; returns the data bits and how many bits were flipped."""
    code = Code.parse(code)
    bits = _as_bits(code_bits)
    if code is Code.NONE:
        return bits.copy(), 0
    if bits.size % code.n:
        raise CodecError(f"{code.value} needs a multiple of {code.n} code bits, got {bits.size}")
    _, col_bits, lookup = _tables(code)
    blocks = bits.reshape(-1, code.n).copy()
    syndrome_bits = (blocks.astype(np.int64) @ col_bits) % 2
    syndrome = syndrome_bits @ (1 << np.arange(col_bits.shape[1]))
    rows = np.flatnonzero(syndrome)
    blocks[rows, lookup[syndrome[rows]]] ^= 1
    return blocks[:, : code.k].ravel(), int(rows.size)


# ---------------------------------------------------------------------------
# Framing
# ---------------------------------------------------------------------------

def frame_encode(payload: Sequence[int] | np.ndarray, code: Code | str = Code.NONE) -> np.ndarray:
    """Preamble followed by the encoded payload."""
    code = Code.parse(code)
    frame = SideChannelFrame(PREAMBLE, hamming_encode(payload, code), code)
    return frame.bits


def frame_detect(
    bits: Sequence[int] | np.ndarray,
    active: Optional[Sequence[bool] | np.ndarray] = None,
) -> Optional[int]:
    """Index just after the first preamble match among active bits.

    Inactive positions (idle channel) are skipped, so a preamble may
    straddle them. Returns ``None`` when no match exists.
    """
    bits = np.asarray(bits, dtype=np.int8).ravel()
    if active is None:
        idx = np.arange(bits.size)
    else:
        flags = np.asarray(active, dtype=bool).ravel()
        if flags.size != bits.size:
            raise CodecError(f"{flags.size} activity flags for {bits.size} bits")
        idx = np.flatnonzero(flags)
    seq = bits[idx]
    n = PREAMBLE.size
    if seq.size < n:
        return None
    windows = np.lib.stride_tricks.sliding_window_view(seq, n)
    matches = np.flatnonzero(np.all(windows == PREAMBLE, axis=1))
    if matches.size == 0:
        return None
    return int(idx[matches[0] + n - 1]) + 1


def frame_decode(
    bits: Sequence[int] | np.ndarray,
    code: Code | str = Code.NONE,
    *,
    active: Optional[Sequence[bool] | np.ndarray] = None,
    payload_bits: Optional[int] = None,
) -> Optional[DecodedFrame]:
    """Detect the preamble and decode the active bits that follow it.

    ``payload_bits`` is the data length fixed for the experiment; when
    omitted every whole codeword after the preamble is decoded.
    """
    code = Code.parse(code)
    bits = np.asarray(bits, dtype=np.int8).ravel()
    start = frame_detect(bits, active)
    if start is None:
        return None
    tail = bits[start:]
    if active is not None:
        tail = tail[np.asarray(active, dtype=bool).ravel()[start:]]

    if payload_bits is not None:
        needed = -(-payload_bits // code.k) * code.n
        if tail.size < needed:
            logger.warning("Frame truncated: %d of %d code bits received", tail.size, needed)
        tail = tail[:needed]
    whole = tail.size - tail.size % code.n
    if whole != tail.size:
        logger.warning("Dropping %d trailing bits that do not fill a codeword", tail.size - whole)
    data, corrections = hamming_decode(tail[:whole], code)
    if payload_bits is not None:
        data = data[:payload_bits]
    return DecodedFrame(data, corrections, start)


# ---------------------------------------------------------------------------
# Helpers
# ---------------------------------------------------------------------------

def bits_to_hex(bits: Sequence[int] | np.ndarray) -> str:
    """MSB-first hex rendering, zero-padded to whole nibbles."""
    bits = _as_bits(bits)
    value = 0
    for b in bits:
        value = (value << 1) | int(b)
    return format(value, f"0{max(1, -(-bits.size // 4))}x")


def hex_to_bits(text: str, n_bits: int) -> np.ndarray:
    value = int(text, 16)
    if value >> n_bits:
        raise CodecError(f"{text!r} does not fit in {n_bits} bits")
    return np.array([(value >> (n_bits - 1 - i)) & 1 for i in range(n_bits)], dtype=np.int8)
