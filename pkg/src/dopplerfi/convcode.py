"""802.11 rate-1/2 convolutional code (K=7, generators 133/171 octal).

Used by the legacy Wi-Fi payload path. Decoding is hard-decision
Viterbi with the trellis vectorized over the 64 states.
"""

from __future__ import annotations

import numpy as np

K = 7
N_STATES = 1 << (K - 1)
G1 = 0o133
G2 = 0o171
TAIL_BITS = K - 1


def _taps(gen: int) -> np.ndarray:
    # Tap i multiplies b[n - i]; the generator MSB is the newest bit.
    return np.array([(gen >> (K - 1 - i)) & 1 for i in range(K)], dtype=np.int64)


def _parity(x: np.ndarray) -> np.ndarray:
    x = x.copy()
    out = np.zeros_like(x)
    while np.any(x):
        out ^= x & 1
        x >>= 1
    return out


def _build_trellis() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    next_states = np.arange(N_STATES)
    prev = np.empty((N_STATES, 2), dtype=np.int64)
    exp1 = np.empty((N_STATES, 2), dtype=np.int64)
    exp2 = np.empty((N_STATES, 2), dtype=np.int64)
    bit = next_states >> (K - 2)
    for c in (0, 1):
        state = ((next_states & (N_STATES // 2 - 1)) << 1) | c
        reg = (bit << (K - 1)) | state
        prev[:, c] = state
        exp1[:, c] = _parity(reg & G1)
        exp2[:, c] = _parity(reg & G2)
    return prev, exp1, exp2


_PREV, _EXP1, _EXP2 = _build_trellis()


def conv_encode(bits: np.ndarray) -> np.ndarray:
    """Encode *bits* at rate 1/2 starting from the all-zero state."""
    bits = np.asarray(bits, dtype=np.int64)
    n = bits.size
    a = np.convolve(bits, _taps(G1))[:n] % 2
    b = np.convolve(bits, _taps(G2))[:n] % 2
    out = np.empty(2 * n, dtype=np.int8)
    out[0::2] = a
    out[1::2] = b
    return out


def viterbi_decode(coded: np.ndarray, *, terminated: bool = True) -> np.ndarray:
    """Hard-decision Viterbi decode of a rate-1/2 stream.

    Args:
        coded: Received code bits, even length.
        terminated: If ``True`` the encoder was flushed with zero tail
            bits and traceback starts from state 0.

    Returns:
        Decoded bits, one per code-bit pair (tail bits included).
    """
    coded = np.asarray(coded, dtype=np.int64)
    steps = coded.size // 2
    r1 = coded[0:2 * steps:2]
    r2 = coded[1:2 * steps:2]

    metric = np.full(N_STATES, np.inf)
    metric[0] = 0.0
    decisions = np.empty((steps, N_STATES), dtype=np.int8)
    for t in range(steps):
        branch = (_EXP1 != r1[t]).astype(float) + (_EXP2 != r2[t])
        cand = metric[_PREV] + branch
        choice = np.argmin(cand, axis=1)
        decisions[t] = choice
        metric = cand[np.arange(N_STATES), choice]

    state = 0 if terminated else int(np.argmin(metric))
    out = np.empty(steps, dtype=np.int8)
    for t in range(steps - 1, -1, -1):
        out[t] = state >> (K - 2)
        state = int(_PREV[state, decisions[t, state]])
    return out
