"""BLE receive chain.

Legacy path: quadrature discriminator, preamble frequency-offset
removal, Mueller-Muller clock recovery and a binary slicer.

Side-channel path: RSSI threshold crossing marks the start of a Wi-Fi
frame in the channelized stream, the first 16 raw slicer outputs are
stacked and their bias decides the Wi-Fi bit.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional, Union

import numpy as np

from dopplerfi import bandplan as bp
from dopplerfi.errors import SignalError
from dopplerfi.waveforms import BLE_PREAMBLE, IqBuffer, gaussian_taps

logger = logging.getLogger(__name__)

SignalLike = Union[IqBuffer, np.ndarray]


def _samples(sig: SignalLike) -> np.ndarray:
    if isinstance(sig, IqBuffer):
        return sig.samples
    return np.asarray(sig, dtype=np.complex128)


# ---------------------------------------------------------------------------
# Data classes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BleRxConfig:
    """Receiver knobs for the side-channel path."""

    rssi_threshold: float = 0.02
    eta: int = 8
    preamble_window: int = 16
    rssi_smoothing: int = 4
    eta_table: dict[int, int] = field(default_factory=dict)

    def __post_init__(self) -> None:
        for ch, eta in [(None, self.eta), *self.eta_table.items()]:
            if not 0 < eta < self.preamble_window:
                where = "" if ch is None else f" for channel {ch}"
                raise ValueError(f"eta{where} must be within (0, {self.preamble_window}), got {eta}")
        if self.rssi_smoothing < 1:
            raise ValueError("rssi_smoothing must be >= 1")

    def eta_for(self, channel: Optional[int]) -> int:
        return self.eta_table.get(channel, self.eta) if channel is not None else self.eta

    def derive(self, **overrides) -> BleRxConfig:
        return replace(self, **{k: v for k, v in overrides.items() if hasattr(self, k)})


@dataclass
class DemodTrace:
    """Intermediates of one pass through the receive chain."""

    phi: np.ndarray
    rssi: np.ndarray
    slicer_bits: np.ndarray
    symbol_bits: Optional[np.ndarray] = None
    zero_samples: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def export_csv(self, path: str | Path) -> Path:
        """Write ``n,phi,rssi,o`` rows, one per phase sample."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["n", "phi", "rssi", "o"])
            for n, (phi, o) in enumerate(zip(self.phi, self.slicer_bits), start=1):
                writer.writerow([n, f"{phi:.6f}", f"{self.rssi[n]:.6f}", int(o)])
        return path


# ---------------------------------------------------------------------------
# Primitives
# ---------------------------------------------------------------------------

def quad_demod(sig: SignalLike) -> np.ndarray:
    """Phase increment ``arg(x[n] * conj(x[n-1]))`` for n >= 1.

    A zero sample makes the product zero, which yields a phase of 0.
    """
    x = _samples(sig)
    if x.size < 2:
        raise SignalError("quad_demod needs at least 2 samples")
    return np.angle(x[1:] * np.conj(x[:-1]))


def rssi(sig: SignalLike, smoothing: int = 4) -> np.ndarray:
    """Causal moving average of ``|x|^2`` over *smoothing* samples."""
    power = np.abs(_samples(sig)) ** 2
    kernel = np.full(smoothing, 1.0 / smoothing)
    return np.convolve(power, kernel)[: power.size]


def slice_bits(phases: np.ndarray) -> np.ndarray:
    """Binary slicer: 1 for a positive phase, 0 otherwise."""
    return (np.asarray(phases) > 0).astype(np.int8)


def _loop_gains(bandwidth: float, damping: float) -> tuple[float, float]:
    theta = bandwidth / (damping + 0.25 / damping)
    denom = 1.0 + 2.0 * damping * theta + theta * theta
    return 4.0 * damping * theta / denom, 4.0 * theta * theta / denom


def clock_recover(
    phases: np.ndarray,
    sps: int,
    *,
    loop_bandwidth: float = 0.01,
    damping: float = 1.0 / math.sqrt(2.0),
) -> np.ndarray:
    """Symbol-rate samples picked by a Mueller-Muller timing loop.

    Strobes start at index 0 and advance by ``sps`` plus the PI loop
    correction; fractional strobes are linearly interpolated.
    """
    if sps < 2:
        raise SignalError(f"clock recovery needs sps >= 2, got {sps}")
    x = np.asarray(phases, dtype=float)
    kp, ki = _loop_gains(loop_bandwidth, damping)
    limit = sps / 2.0

    out = []
    t = 0.0
    integrator = 0.0
    prev = None
    while t <= x.size - 1:
        i = int(t)
        mu = t - i
        y = x[i] if i + 1 >= x.size else x[i] + mu * (x[i + 1] - x[i])
        step = float(sps)
        if prev is not None:
            # Positive error: strobe is early.
            err = np.sign(prev) * y - np.sign(y) * prev
            integrator += ki * err
            step += float(np.clip(kp * err + integrator, -limit, limit))
        out.append(y)
        prev = y
        t += step
    return np.asarray(out)


def detect_wifi_start(rssi_series: np.ndarray, cfg: BleRxConfig) -> Optional[int]:
    """Smallest n with ``rssi[n-1] < threshold < rssi[n]``."""
    r = np.asarray(rssi_series, dtype=float)
    if r.size == 0:
        return None
    prev = np.concatenate([[0.0], r[:-1]])
    hits = np.flatnonzero((prev < cfg.rssi_threshold) & (r > cfg.rssi_threshold))
    return int(hits[0]) if hits.size else None


# ---------------------------------------------------------------------------
# Side-channel path
# ---------------------------------------------------------------------------

def gfsk_extract(sig: SignalLike, cfg: BleRxConfig) -> Optional[np.ndarray]:
    """Stack the first ``preamble_window`` slicer bits after the RSSI start."""
    x = _samples(sig)
    start = detect_wifi_start(rssi(x, cfg.rssi_smoothing), cfg)
    if start is None:
        return None
    stop = start + cfg.preamble_window + 1
    if stop > x.size:
        raise SignalError(
            f"only {x.size - start} samples after the detected start at {start}; "
            f"need {cfg.preamble_window + 1}"
        )
    return slice_bits(quad_demod(x[start:stop]))


def gfsk_demap(o: np.ndarray, cfg: BleRxConfig, channel: Optional[int] = None) -> int:
    """Bias decision: more than eta ones means a negative shift, bit 0."""
    o = np.asarray(o)
    if o.size != cfg.preamble_window:
        raise SignalError(f"expected {cfg.preamble_window} slicer bits, got {o.size}")
    return 0 if int(o.sum()) > cfg.eta_for(channel) else 1


# ---------------------------------------------------------------------------
# Legacy path
# ---------------------------------------------------------------------------

def _first_symbol_index(sps: int) -> int:
    # Gaussian filter delay, minus one for the discriminator.
    return (gaussian_taps(bp.BLE_BT, sps).size - 1) // 2 - 1


def decode_ble_packet(
    sig: SignalLike,
    n_payload_bits: int,
    *,
    with_preamble: bool = True,
    sps: int = bp.BLE_SPS,
) -> np.ndarray:
    """Legacy GFSK decode of a packet that starts at sample 0.

    The mean phase over the alternating preamble estimates the carrier
    offset, which is removed before clock recovery.
    """
    phases = quad_demod(sig)
    first = _first_symbol_index(sps)
    phases = phases[first:]
    if with_preamble:
        offset = float(np.mean(phases[: BLE_PREAMBLE.size * sps]))
        phases = phases - offset
        logger.debug("BLE preamble offset %.4f rad/sample", offset)
    bits = slice_bits(clock_recover(phases, sps))
    skip = BLE_PREAMBLE.size if with_preamble else 0
    out = np.zeros(n_payload_bits, dtype=np.int8)
    got = bits[skip:skip + n_payload_bits]
    out[: got.size] = got
    return out


def demod_trace(sig: SignalLike, cfg: Optional[BleRxConfig] = None) -> DemodTrace:
    """Run the discriminator, RSSI and slicer over a whole buffer."""
    cfg = cfg or BleRxConfig()
    x = _samples(sig)
    phi = quad_demod(x)
    return DemodTrace(
        phi=phi,
        rssi=rssi(x, cfg.rssi_smoothing),
        slicer_bits=slice_bits(phi),
        symbol_bits=slice_bits(clock_recover(phi, bp.BLE_SPS)),
        zero_samples=np.flatnonzero(x == 0),
    )
