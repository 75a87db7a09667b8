"""Baseband waveform generation.

Builds 802.11 OFDM frames (20 Msps) and BLE GFSK packets (2 Msps) at
complex baseband, applies artificial Doppler shifts, and channelizes a
wideband capture onto a narrowband BLE receiver.

Usage::

    frame = gen_wifi_frame(WifiFrameSpec(payload_bits=bits, artificial_shift=-130e3))
    narrow = ble_channelize(frame, ble_channel=3)
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, replace
from enum import Enum
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import numpy as np
from scipy import signal

from dopplerfi import bandplan as bp
from dopplerfi.convcode import TAIL_BITS, conv_encode
from dopplerfi.errors import (
    ChannelError,
    PayloadTooLongError,
    ShiftOutOfRangeError,
    SignalError,
)

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Data classes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class IqBuffer:
    """Complex baseband samples with their rate and nominal RF center."""

    samples: np.ndarray
    sample_rate: float
    center_freq: float = 0.0

    def __post_init__(self) -> None:
        if self.sample_rate <= 0:
            raise SignalError(f"sample_rate must be positive, got {self.sample_rate}")
        object.__setattr__(self, "samples", np.asarray(self.samples, dtype=np.complex128))

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration(self) -> float:
        return self.samples.size / self.sample_rate

    def power(self) -> float:
        """Mean of |x|^2 over the whole buffer."""
        if self.samples.size == 0:
            return 0.0
        return float(np.mean(np.abs(self.samples) ** 2))

    def with_samples(self, samples: np.ndarray) -> IqBuffer:
        return replace(self, samples=samples)


class Mcs(Enum):
    """Legacy payload modulation, both at convolutional rate 1/2."""

    BPSK = "bpsk"
    QPSK = "qpsk"

    @property
    def bits_per_subcarrier(self) -> int:
        return 1 if self is Mcs.BPSK else 2


@dataclass(frozen=True)
class WifiFrameSpec:
    """One legacy Wi-Fi frame to synthesize."""

    payload_bits: np.ndarray
    mcs: Mcs = Mcs.BPSK
    channel: int = 1
    artificial_shift: float = 0.0
    airtime: float = 100e-6


@dataclass(frozen=True)
class BlePacketSpec:
    """One BLE GFSK packet to synthesize.

    The 8-bit alternating link-layer preamble is prepended to
    ``payload_bits`` unless ``with_preamble`` is ``False``.
    """

    payload_bits: np.ndarray
    ble_channel: int = 3
    artificial_shift: float = 0.0
    symbol_rate: float = bp.BLE_SYMBOL_RATE
    deviation: float = bp.BLE_DEVIATION
    gaussian_bt: float = bp.BLE_BT
    with_preamble: bool = True


BLE_PREAMBLE = np.array([0, 1, 0, 1, 0, 1, 0, 1], dtype=np.int8)


# ---------------------------------------------------------------------------
# OFDM numerology
# ---------------------------------------------------------------------------

# Unit average power per OFDM sample when 52 subcarriers carry unit energy.
OFDM_SCALE = bp.FFT_SIZE / np.sqrt(52.0)

PILOT_SUBCARRIERS = (-21, -7, 7, 21)
PILOT_VALUES = np.array([1.0, 1.0, 1.0, -1.0])
DATA_SUBCARRIERS = tuple(k for k in bp.USED_SUBCARRIERS if k not in PILOT_SUBCARRIERS)

_STF_VALUES = {
    -24: 1 + 1j, -20: -1 - 1j, -16: 1 + 1j, -12: -1 - 1j, -8: -1 - 1j, -4: 1 + 1j,
    4: -1 - 1j, 8: -1 - 1j, 12: 1 + 1j, 16: 1 + 1j, 20: 1 + 1j, 24: 1 + 1j,
}

_LTF_VALUES = np.array(
    [1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1, 1, 1, -1, -1, 1, 1, -1, 1, -1, 1, 1, 1, 1,
     0,
     1, -1, -1, 1, 1, -1, 1, -1, 1, -1, -1, -1, -1, -1, 1, 1, -1, -1, 1, -1, 1, -1, 1, 1, 1, 1],
    dtype=float,
)


def _grid(values: dict[int, complex]) -> np.ndarray:
    grid = np.zeros(bp.FFT_SIZE, dtype=np.complex128)
    for k, v in values.items():
        grid[k % bp.FFT_SIZE] = v
    return grid


def stf_grid() -> np.ndarray:
    """Frequency-domain STF (64 bins, numpy FFT order)."""
    return _grid({k: np.sqrt(13.0 / 6.0) * v for k, v in _STF_VALUES.items()})


def ltf_grid() -> np.ndarray:
    """Frequency-domain LTF (64 bins, numpy FFT order)."""
    return _grid({k: _LTF_VALUES[k + 26] for k in range(-26, 27)})


def _ofdm_time(grid: np.ndarray) -> np.ndarray:
    return np.fft.ifft(grid) * OFDM_SCALE


def stf_time() -> np.ndarray:
    """160-sample short training field: ten repeats of the 16-sample period."""
    period = _ofdm_time(stf_grid())[: bp.STF_PERIOD]
    return np.tile(period, bp.STF_REPEATS)


def ltf_symbol() -> np.ndarray:
    """One 64-sample long training symbol."""
    return _ofdm_time(ltf_grid())


def ltf_time() -> np.ndarray:
    """160-sample long training field: 32-sample guard plus two symbols."""
    sym = ltf_symbol()
    return np.concatenate([sym[-bp.LTF_GUARD:], sym, sym])


PREAMBLE_LEN = bp.STF_PERIOD * bp.STF_REPEATS + bp.LTF_GUARD + 2 * bp.FFT_SIZE
SYMBOL_LEN = bp.FFT_SIZE + bp.CP_LEN


def ofdm_symbol_count(airtime: float) -> int:
    """Payload OFDM symbols that fit after the preamble in *airtime* seconds."""
    total = int(round(airtime * bp.WIFI_SAMPLE_RATE))
    return max(0, (total - PREAMBLE_LEN) // SYMBOL_LEN)


def wifi_frame_capacity(airtime: float = 100e-6, mcs: Mcs = Mcs.BPSK) -> int:
    """Maximum information bits per frame (coded bits / 2, minus tail)."""
    n_dbps = len(DATA_SUBCARRIERS) * mcs.bits_per_subcarrier // 2
    return max(0, ofdm_symbol_count(airtime) * n_dbps - TAIL_BITS)


def map_symbols(coded: np.ndarray, mcs: Mcs) -> np.ndarray:
    """Gray-map code bits to unit-energy BPSK or QPSK points."""
    coded = np.asarray(coded, dtype=float)
    if mcs is Mcs.BPSK:
        return 2.0 * coded - 1.0
    pairs = coded.reshape(-1, 2)
    return ((2.0 * pairs[:, 0] - 1.0) + 1j * (2.0 * pairs[:, 1] - 1.0)) / np.sqrt(2.0)


def _payload_symbols(bits: np.ndarray, n_sym: int, mcs: Mcs) -> np.ndarray:
    n_dbps = len(DATA_SUBCARRIERS) * mcs.bits_per_subcarrier // 2
    padded = np.zeros(n_sym * n_dbps, dtype=np.int8)
    padded[: bits.size] = bits
    points = map_symbols(conv_encode(padded), mcs).reshape(n_sym, len(DATA_SUBCARRIERS))

    data_bins = np.array(DATA_SUBCARRIERS) % bp.FFT_SIZE
    pilot_bins = np.array(PILOT_SUBCARRIERS) % bp.FFT_SIZE
    out = np.empty(n_sym * SYMBOL_LEN, dtype=np.complex128)
    for i in range(n_sym):
        grid = np.zeros(bp.FFT_SIZE, dtype=np.complex128)
        grid[data_bins] = points[i]
        grid[pilot_bins] = PILOT_VALUES
        sym = _ofdm_time(grid)
        out[i * SYMBOL_LEN:(i + 1) * SYMBOL_LEN] = np.concatenate([sym[-bp.CP_LEN:], sym])
    return out


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------

def _check_shift(shift: float, cap: float, what: str) -> None:
    if abs(shift) > cap:
        raise ShiftOutOfRangeError(
            f"{what} artificial shift {shift:+.0f} Hz exceeds the {cap:.0f} Hz cap"
        )


def gen_wifi_frame(spec: WifiFrameSpec) -> IqBuffer:
    """Synthesize one legacy 802.11 frame at 20 Msps.

    Layout: STF (10 x 16 samples), LTF (32-sample guard + 2 x 64),
    then rate-1/2 coded payload OFDM symbols. The artificial shift is
    applied last as a complex rotation.
    """
    _check_shift(spec.artificial_shift, bp.WIFI_MAX_SHIFT, "Wi-Fi")
    bits = np.asarray(spec.payload_bits, dtype=np.int8).ravel()
    capacity = wifi_frame_capacity(spec.airtime, spec.mcs)
    if bits.size > capacity:
        raise PayloadTooLongError(
            f"{bits.size} payload bits exceed the {capacity}-bit capacity of a "
            f"{spec.airtime * 1e6:.0f} us {spec.mcs.value} frame"
        )

    n_sym = ofdm_symbol_count(spec.airtime)
    samples = np.concatenate([stf_time(), ltf_time(), _payload_symbols(bits, n_sym, spec.mcs)])
    frame = IqBuffer(samples, bp.WIFI_SAMPLE_RATE, bp.wifi_center(spec.channel))
    return apply_freq_shift(frame, spec.artificial_shift)


@lru_cache(maxsize=8)
def gaussian_taps(bt: float, sps: int, span: int = 3) -> np.ndarray:
    """Gaussian frequency pulse shaping filter with unit DC gain."""
    sigma = np.sqrt(np.log(2.0)) / (2.0 * np.pi * bt)
    t = np.arange(-span / 2.0, span / 2.0 + 1.0 / sps, 1.0 / sps)
    h = np.exp(-t * t / (2.0 * sigma * sigma))
    h /= h.sum()
    h.setflags(write=False)
    return h


def ble_packet_bits(spec: BlePacketSpec) -> np.ndarray:
    """On-air bit sequence for *spec* (preamble included when enabled)."""
    payload = np.asarray(spec.payload_bits, dtype=np.int8).ravel()
    if spec.with_preamble:
        return np.concatenate([BLE_PREAMBLE, payload])
    return payload


def gen_ble_packet(spec: BlePacketSpec) -> IqBuffer:
    """Synthesize a constant-envelope BLE GFSK packet at 2 samples/symbol."""
    _check_shift(spec.artificial_shift, bp.BLE_MAX_SHIFT, "BLE")
    bits = ble_packet_bits(spec)
    sps = bp.BLE_SPS
    fs = spec.symbol_rate * sps
    taps = gaussian_taps(spec.gaussian_bt, sps)
    n_samples = bits.size * sps + taps.size - 1
    if n_samples / fs > bp.BLE_SLOT:
        raise PayloadTooLongError(
            f"{bits.size} BLE bits ({n_samples / fs * 1e6:.1f} us) do not fit a 625 us slot"
        )

    nrz = np.repeat(2.0 * bits - 1.0, sps)
    freq = np.convolve(nrz, taps)
    phase = np.cumsum(freq) * (2.0 * np.pi * spec.deviation / fs)
    packet = IqBuffer(np.exp(1j * phase), fs, bp.ble_center(spec.ble_channel))
    return apply_freq_shift(packet, spec.artificial_shift)


def apply_freq_shift(sig: IqBuffer, delta_f: float) -> IqBuffer:
    """Rotate *sig* by ``exp(i 2 pi delta_f n / fs)``."""
    if delta_f == 0:
        return sig.with_samples(sig.samples.copy())
    n = np.arange(sig.samples.size)
    rot = np.exp(2j * np.pi * delta_f * n / sig.sample_rate)
    return sig.with_samples(sig.samples * rot)


# ---------------------------------------------------------------------------
# Rate conversion and channelization
# ---------------------------------------------------------------------------

def resample_to(sig: IqBuffer, sample_rate: float) -> IqBuffer:
    """Polyphase resample *sig* to *sample_rate*."""
    if sample_rate == sig.sample_rate:
        return sig
    ratio = Fraction(sample_rate / sig.sample_rate).limit_denominator(1000)
    out = signal.resample_poly(sig.samples, ratio.numerator, ratio.denominator)
    return IqBuffer(out, sample_rate, sig.center_freq)


@lru_cache(maxsize=4)
def channel_filter(sample_rate: float) -> np.ndarray:
    """Linear-phase low-pass: 1 MHz passband, >= 40 dB beyond 1.5 MHz."""
    nyq = sample_rate / 2.0
    numtaps, beta = signal.kaiserord(45.0, 0.5e6 / nyq)
    numtaps |= 1
    taps = signal.firwin(numtaps, 1.25e6, window=("kaiser", beta), fs=sample_rate)
    taps.setflags(write=False)
    return taps


def ble_channelize(wideband: IqBuffer, ble_channel: int) -> IqBuffer:
    """Mix, filter and decimate *wideband* down to one 2 Msps BLE channel.

    The filter's group delay is removed so output sample ``m`` lines up
    with input sample ``m * decimation``.
    """
    f_ble = bp.ble_center(ble_channel)
    offset = f_ble - wideband.center_freq
    if abs(offset) + bp.BLE_HALF_BANDWIDTH > wideband.sample_rate / 2.0:
        raise ChannelError(
            f"BLE channel {ble_channel} ({f_ble / 1e6:.0f} MHz) lies outside the "
            f"{wideband.sample_rate / 1e6:.0f} MHz span around "
            f"{wideband.center_freq / 1e6:.0f} MHz"
        )
    decim = int(round(wideband.sample_rate / bp.BLE_SAMPLE_RATE))
    mixed = apply_freq_shift(wideband, -offset).samples
    taps = channel_filter(wideband.sample_rate)
    delay = (taps.size - 1) // 2
    filtered = np.convolve(mixed, taps)[delay:delay + mixed.size]
    return IqBuffer(filtered[::decim], wideband.sample_rate / decim, f_ble)


# ---------------------------------------------------------------------------
# Debug dump
# ---------------------------------------------------------------------------

def dump_iq(sig: IqBuffer, path: str | Path) -> Path:
    """Write interleaved float32 little-endian I/Q plus a ``.hdr`` sidecar."""
    path = Path(path).with_suffix(".iq")
    path.parent.mkdir(parents=True, exist_ok=True)
    inter = np.empty(2 * sig.samples.size, dtype="<f4")
    inter[0::2] = sig.samples.real
    inter[1::2] = sig.samples.imag
    inter.tofile(path)
    path.with_suffix(".hdr").write_text(
        f"sample_rate={sig.sample_rate:.0f}\ncenter_freq={sig.center_freq:.0f}\n",
        encoding="utf-8",
    )
    logger.info("Wrote %d samples to %s", sig.samples.size, path)
    return path


def load_iq(path: str | Path) -> IqBuffer:
    """Read back a buffer written by :func:`dump_iq`."""
    path = Path(path).with_suffix(".iq")
    header = {}
    for line in path.with_suffix(".hdr").read_text(encoding="utf-8").splitlines():
        key, _, value = line.partition("=")
        header[key.strip()] = float(value)
    raw = np.fromfile(path, dtype="<f4")
    return IqBuffer(raw[0::2] + 1j * raw[1::2], header["sample_rate"], header["center_freq"])
