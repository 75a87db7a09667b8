"""Wi-Fi receive chain.

Legacy path: STF packet detection, coarse (STF) plus fine (LTF) CFO
estimation, LTF fine timing, LTF channel estimate, pilot-tracked
payload demapping and Viterbi decoding.

Side-channel path: adjacent-subcarrier CSI amplitude differences flag
frames disturbed by a concurrent BLE packet; the position of the
strongest deviation relative to the BLE channel's nominal subcarrier
decides the BLE bit.

Usage::

    start = detect_and_sync(band)
    cfo = estimate_cfo(band, start)
    csi = estimate_csi(compensate(band, cfo), start)
    hits = csi_extract([csi], WifiRxConfig())
    bit = csi_demap(hits, WifiRxConfig(), nominal_index=-6.4)
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from dopplerfi import bandplan as bp
from dopplerfi.convcode import viterbi_decode
from dopplerfi.errors import SignalError
from dopplerfi.waveforms import (
    DATA_SUBCARRIERS,
    OFDM_SCALE,
    PILOT_SUBCARRIERS,
    PILOT_VALUES,
    PREAMBLE_LEN,
    SYMBOL_LEN,
    IqBuffer,
    Mcs,
    apply_freq_shift,
    ltf_grid,
    ltf_symbol,
    ofdm_symbol_count,
)

logger = logging.getLogger(__name__)

_L = bp.STF_PERIOD
_LTF_START = bp.STF_PERIOD * bp.STF_REPEATS + bp.LTF_GUARD   # first LTF symbol
_USED = np.array(bp.USED_SUBCARRIERS)
_DC_PAIR = int(np.flatnonzero(_USED == -1)[0])               # D entry for (-1, +1)
PEAK_METRICS = ("complex", "amplitude")


# ---------------------------------------------------------------------------
# Data classes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class WifiRxConfig:
    """Receiver knobs for detection and the CSI side channel.

    The hit threshold on D is ``mean + csi_sigma * std`` (or the
    median/MAD variant when ``csi_robust``), floored at ``csi_min_diff``
    times the median CSI amplitude.
    """

    csi_sigma: float = 3.0
    csi_robust: bool = False
    csi_min_diff: float = 0.25
    csi_peak_metric: str = "complex"
    nominal_index: Optional[float] = None
    detect_threshold: float = 0.5
    energy_fraction: float = 0.25
    plateau_fraction: float = 0.9
    ltf_search: int = 8

    def __post_init__(self) -> None:
        if self.csi_sigma <= 0 or self.csi_min_diff <= 0:
            raise ValueError("CSI threshold parameters must be > 0")
        if self.csi_peak_metric not in PEAK_METRICS:
            raise ValueError(
                f"csi_peak_metric must be one of {', '.join(PEAK_METRICS)}, got {self.csi_peak_metric!r}"
            )

    def derive(self, **overrides) -> WifiRxConfig:
        return replace(self, **{k: v for k, v in overrides.items() if hasattr(self, k)})


@dataclass(frozen=True)
class CsiVector:
    """Channel estimate on the 52 used subcarriers (-26..-1, 1..26)."""

    csi: np.ndarray
    packet_time: float = 0.0

    def __post_init__(self) -> None:
        if self.csi.shape != (len(bp.USED_SUBCARRIERS),):
            raise SignalError(f"CSI vector needs {len(bp.USED_SUBCARRIERS)} entries, got {self.csi.shape}")

    @property
    def amplitude(self) -> np.ndarray:
        return np.abs(self.csi)

    def at(self, k: int) -> complex:
        return complex(self.csi[bp.USED_SUBCARRIERS.index(k)])


@dataclass(frozen=True)
class CsiHit:
    vector: CsiVector
    diff: np.ndarray
    peak_index: int


# ---------------------------------------------------------------------------
# Detection and synchronization
# ---------------------------------------------------------------------------

def _samples(sig: IqBuffer | np.ndarray) -> np.ndarray:
    return sig.samples if isinstance(sig, IqBuffer) else np.asarray(sig, dtype=np.complex128)


def _moving_sum(x: np.ndarray, width: int) -> np.ndarray:
    c = np.concatenate([[0], np.cumsum(x)])
    return c[width:] - c[:-width]


def _stf_terms(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    if x.size < 2 * _L:
        return np.zeros(0), np.zeros(0)
    p = _moving_sum(np.conj(x[:-_L]) * x[_L:], _L)
    e = _moving_sum(np.abs(x[_L:]) ** 2, _L)
    floor = 1e-12 * max(float(e.max()), 1e-300)
    out = np.zeros(e.size)
    ok = e > floor
    out[ok] = np.abs(p[ok]) / e[ok]
    return out, e


def stf_metric(sig: IqBuffer | np.ndarray) -> np.ndarray:
    """Delay-16 autocorrelation magnitude normalized by window energy."""
    return _stf_terms(_samples(sig))[0]


def _coarse_cfo(x: np.ndarray, start: int) -> float:
    a = x[start + _L:start + _L + 112]
    b = x[start + 2 * _L:start + 2 * _L + 112]
    return float(np.angle(np.vdot(a, b))) * bp.WIFI_SAMPLE_RATE / (2 * np.pi * _L)


def _fine_cfo(x: np.ndarray, start: int) -> float:
    s = start + _LTF_START
    a = x[s:s + bp.FFT_SIZE]
    b = x[s + bp.FFT_SIZE:s + 2 * bp.FFT_SIZE]
    return float(np.angle(np.vdot(a, b))) * bp.WIFI_SAMPLE_RATE / (2 * np.pi * bp.FFT_SIZE)


def _rotate(x: np.ndarray, cfo: float) -> np.ndarray:
    n = np.arange(x.size)
    return x * np.exp(-2j * np.pi * cfo * n / bp.WIFI_SAMPLE_RATE)


def detect_and_sync(sig: IqBuffer | np.ndarray, cfg: Optional[WifiRxConfig] = None) -> Optional[int]:
    """Frame start index, or ``None`` when no complete frame preamble is found.

    The STF plateau is resolved to its first sample above 90% of the
    peak; LTF cross-correlation then refines the start within
    ``ltf_search`` samples after coarse CFO removal.
    """
    cfg = cfg or WifiRxConfig()
    x = _samples(sig)
    metric, energy = _stf_terms(x)
    if metric.size == 0:
        return None
    # Weak bursts (a BLE packet in the gap) are not frame candidates.
    metric = np.where(energy >= cfg.energy_fraction * energy.max(), metric, 0.0)
    if metric.max() < cfg.detect_threshold:
        return None

    above = metric > cfg.plateau_fraction * metric.max()
    rises = np.flatnonzero(above & ~np.concatenate([[False], above[:-1]]))
    coarse = None
    for n in rises:
        if metric[n:n + 4 * _L].mean() > cfg.detect_threshold:
            coarse = int(n)
            break
    if coarse is None or coarse + PREAMBLE_LEN + cfg.ltf_search > x.size:
        logger.debug("STF plateau rejected or preamble truncated")
        return None

    y = _rotate(x, _coarse_cfo(x, coarse))
    ref = ltf_symbol()
    best, best_score = coarse, -1.0
    for d in range(-cfg.ltf_search, cfg.ltf_search + 1):
        s = coarse + d + _LTF_START
        if s < 0 or s + bp.FFT_SIZE > y.size:
            continue
        score = abs(np.vdot(ref, y[s:s + bp.FFT_SIZE]))
        if score > best_score:
            best, best_score = coarse + d, score
    return max(best, 0)


def estimate_cfo(sig: IqBuffer | np.ndarray, start: int = 0) -> float:
    """Coarse STF estimate (+-625 kHz) refined by the LTF (+-156.25 kHz)."""
    x = _samples(sig)
    if start + PREAMBLE_LEN > x.size:
        raise SignalError(f"frame at {start} is shorter than the {PREAMBLE_LEN}-sample preamble")
    coarse = _coarse_cfo(x, start)
    fine = _fine_cfo(_rotate(x, coarse), start)
    logger.debug("CFO estimate: coarse %.1f Hz, fine %.1f Hz", coarse, fine)
    return coarse + fine


def compensate(frame: IqBuffer, cfo_hat: float) -> IqBuffer:
    return apply_freq_shift(frame, -cfo_hat)


# ---------------------------------------------------------------------------
# Channel estimate
# ---------------------------------------------------------------------------

_USED_BINS = _USED % bp.FFT_SIZE


def estimate_csi(frame: IqBuffer | np.ndarray, start: int = 0, *, packet_time: Optional[float] = None) -> CsiVector:
    """LTF channel estimate ``Y/X`` averaged over both long symbols.

    Normalized so a flat unit channel gives 1 on every used subcarrier.
    """
    x = _samples(frame)
    s = start + _LTF_START
    if s + 2 * bp.FFT_SIZE > x.size:
        raise SignalError(f"frame at {start} does not contain both LTF symbols")
    y = (np.fft.fft(x[s:s + bp.FFT_SIZE]) + np.fft.fft(x[s + bp.FFT_SIZE:s + 2 * bp.FFT_SIZE])) / 2.0
    csi = y[_USED_BINS] / (ltf_grid()[_USED_BINS] * OFDM_SCALE)
    if packet_time is None:
        packet_time = start / bp.WIFI_SAMPLE_RATE
    return CsiVector(csi, packet_time)


# ---------------------------------------------------------------------------
# Side channel
# ---------------------------------------------------------------------------

def csi_diff(vector: CsiVector) -> np.ndarray:
    """Adjacent amplitude differences; the pair across DC is zeroed."""
    d = np.abs(np.diff(vector.amplitude))
    d[_DC_PAIR] = 0.0
    return d


def _threshold(d: np.ndarray, amplitude: np.ndarray, cfg: WifiRxConfig) -> float:
    valid = np.delete(d, _DC_PAIR)
    if cfg.csi_robust:
        med = float(np.median(valid))
        spread = 1.4826 * float(np.median(np.abs(valid - med)))
        stat = med + cfg.csi_sigma * spread
    else:
        stat = float(valid.mean() + cfg.csi_sigma * valid.std())
    return max(stat, cfg.csi_min_diff * float(np.median(amplitude)))


def _peak_index(vector: CsiVector, metric: str) -> int:
    if metric == "amplitude":
        amp = vector.amplitude
        dev = np.abs(amp - amp.mean())
    else:
        c = vector.csi
        # Linear phase slope from timing offset, measured between neighbours.
        neighbours = np.diff(_USED) == 1
        slope = np.angle(np.sum((c[1:] * np.conj(c[:-1]))[neighbours]))
        flat = c * np.exp(-1j * slope * _USED)
        dev = np.abs(flat - flat.mean())
    return int(_USED[int(np.argmax(dev))])


def csi_extract(stream: Iterable[CsiVector], cfg: Optional[WifiRxConfig] = None) -> list[CsiHit]:
    """CSI vectors whose largest adjacent difference crosses the threshold."""
    cfg = cfg or WifiRxConfig()
    hits = []
    for vector in stream:
        d = csi_diff(vector)
        if d.max() > _threshold(d, vector.amplitude, cfg):
            hits.append(CsiHit(vector, d, _peak_index(vector, cfg.csi_peak_metric)))
    logger.debug("CSI extract: %d hits", len(hits))
    return hits


def csi_demap(
    hits: Sequence[CsiHit],
    cfg: Optional[WifiRxConfig] = None,
    *,
    nominal_index: Optional[float] = None,
) -> Optional[int]:
    """Bit from the mean peak position; ``None`` on no hits or a tie."""
    cfg = cfg or WifiRxConfig()
    nominal = cfg.nominal_index if nominal_index is None else nominal_index
    if nominal is None:
        raise ValueError("csi_demap needs the nominal subcarrier index of the BLE channel")
    if not hits:
        return None
    i_avg = float(np.mean([h.peak_index for h in hits]))
    if i_avg == nominal:
        return None
    return 0 if i_avg < nominal else 1


def export_csi_csv(vectors: Iterable[CsiVector], path: str | Path) -> Path:
    """Write ``time,k,amplitude`` rows, one per subcarrier per vector."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time", "k", "amplitude"])
        for v in vectors:
            for k, a in zip(bp.USED_SUBCARRIERS, v.amplitude):
                writer.writerow([f"{v.packet_time:.9f}", k, f"{a:.6f}"])
    return path


# ---------------------------------------------------------------------------
# Legacy payload
# ---------------------------------------------------------------------------

_DATA_IDX = np.array([bp.USED_SUBCARRIERS.index(k) for k in DATA_SUBCARRIERS])
_PILOT_IDX = np.array([bp.USED_SUBCARRIERS.index(k) for k in PILOT_SUBCARRIERS])


def _demap(points: np.ndarray, mcs: Mcs) -> np.ndarray:
    if mcs is Mcs.BPSK:
        return (points.real > 0).astype(np.int8)
    out = np.empty(2 * points.size, dtype=np.int8)
    out[0::2] = points.real > 0
    out[1::2] = points.imag > 0
    return out


def decode_wifi_payload(
    frame: IqBuffer | np.ndarray,
    start: int,
    n_bits: int,
    *,
    mcs: Mcs = Mcs.BPSK,
    airtime: float = 100e-6,
) -> np.ndarray:
    """Equalize, pilot-track, demap and Viterbi-decode a compensated frame."""
    x = _samples(frame)
    h = estimate_csi(x, start).csi * OFDM_SCALE
    n_sym = ofdm_symbol_count(airtime)
    available = (x.size - start - PREAMBLE_LEN) // SYMBOL_LEN
    terminated = available >= n_sym
    n_sym = min(n_sym, max(available, 0))

    coded = []
    for i in range(n_sym):
        s = start + PREAMBLE_LEN + i * SYMBOL_LEN + bp.CP_LEN
        eq = np.fft.fft(x[s:s + bp.FFT_SIZE])[_USED_BINS] / h
        cpe = np.angle(np.vdot(PILOT_VALUES, eq[_PILOT_IDX]))
        coded.append(_demap(eq[_DATA_IDX] * np.exp(-1j * cpe), mcs))
    if not coded:
        return np.zeros(n_bits, dtype=np.int8)
    bits = viterbi_decode(np.concatenate(coded), terminated=terminated)
    out = np.zeros(n_bits, dtype=np.int8)
    got = bits[:n_bits]
    out[: got.size] = got
    return out


@dataclass
class FrameReception:
    """Result of the full receive chain for one frame."""

    start: int
    cfo: float
    csi: CsiVector
    compensated: IqBuffer = field(repr=False)


def receive_frame(
    sig: IqBuffer,
    cfg: Optional[WifiRxConfig] = None,
    *,
    time_origin: float = 0.0,
) -> Optional[FrameReception]:
    """Detect, estimate CFO, compensate and estimate CSI for one frame."""
    start = detect_and_sync(sig, cfg)
    if start is None:
        return None
    cfo = estimate_cfo(sig, start)
    comp = compensate(sig, cfo)
    csi = estimate_csi(comp, start, packet_time=time_origin + start / sig.sample_rate)
    return FrameReception(start, cfo, csi, comp)
