"""Shared-band medium: timeline composition and channel impairments.

A :class:`BandTimeline` places Wi-Fi and BLE emissions on one 20 Msps
band; :func:`render` sums them and :func:`impair` applies oscillator
CFO, motion Doppler, gain and AWGN with reproducible seeding.
"""

from __future__ import annotations

import logging
import math
import zlib
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from dopplerfi import bandplan as bp
from dopplerfi.errors import ChannelError
from dopplerfi.waveforms import IqBuffer, apply_freq_shift, resample_to

logger = logging.getLogger(__name__)

SPEED_OF_LIGHT = 299_792_458.0
INHERENT_CFO_RANGE = 400.0


# ---------------------------------------------------------------------------
# Seeding
# ---------------------------------------------------------------------------

def trial_rng(seed: int, trial: int, salt: str) -> np.random.Generator:
    """Independent generator for one (seed, trial, module) triple."""
    key = zlib.crc32(salt.encode("utf-8"))
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(trial), key]))


# ---------------------------------------------------------------------------
# Timeline
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Emission:
    buffer: IqBuffer
    start_time: float
    freq_offset: float
    gain_db: float = 0.0


@dataclass
class BandTimeline:
    """Emissions placed in time and frequency on one shared band.

    Usage::

        tl = BandTimeline(band_center=2412e6, duration=625e-6)
        tl.place(wifi_frame, start_time=40e-6)
        tl.place(ble_packet, start_time=0.0, gain_db=-10)
        wideband = render(tl)
    """

    band_center: float
    duration: float
    sample_rate: float = bp.WIFI_SAMPLE_RATE
    emissions: list[Emission] = field(default_factory=list)

    @property
    def n_samples(self) -> int:
        return int(round(self.duration * self.sample_rate))

    def add(self, emission: Emission) -> None:
        half_bw = min(emission.buffer.sample_rate, self.sample_rate) / 2.0
        if abs(emission.freq_offset) + half_bw > self.sample_rate / 2.0 + 1.0:
            raise ChannelError(
                f"Emission at {emission.freq_offset / 1e6:+.3f} MHz with "
                f"{2 * half_bw / 1e6:.1f} MHz bandwidth leaves the band"
            )
        length = int(round(len(emission.buffer) * self.sample_rate / emission.buffer.sample_rate))
        start = int(round(emission.start_time * self.sample_rate))
        if start < 0 or start + length > self.n_samples:
            raise ChannelError(
                f"Emission [{emission.start_time * 1e6:.1f} us, +{length} samples] "
                f"does not fit a {self.duration * 1e6:.1f} us timeline"
            )
        self.emissions.append(emission)

    def place(self, buffer: IqBuffer, start_time: float, gain_db: float = 0.0) -> Emission:
        """Add *buffer* at its own center frequency relative to the band."""
        emission = Emission(buffer, start_time, buffer.center_freq - self.band_center, gain_db)
        self.add(emission)
        return emission


def render(timeline: BandTimeline) -> IqBuffer:
    """Sum every emission onto the band grid; silence elsewhere."""
    out = np.zeros(timeline.n_samples, dtype=np.complex128)
    for em in timeline.emissions:
        buf = resample_to(em.buffer, timeline.sample_rate)
        buf = apply_freq_shift(buf, em.freq_offset)
        start = int(round(em.start_time * timeline.sample_rate))
        stop = min(start + len(buf), out.size)
        out[start:stop] += buf.samples[: stop - start] * 10.0 ** (em.gain_db / 20.0)
    return IqBuffer(out, timeline.sample_rate, timeline.band_center)


# ---------------------------------------------------------------------------
# Impairments
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ImpairmentSpec:
    """Channel impairments for one received buffer.

    ``snr_db`` is the line-of-sight reference SNR over the occupied
    duration; ``gain_db`` scales the signal after the noise reference is
    fixed, so a negative gain (NLoS wall) lowers the effective SNR.
    ``inherent_cfo=None`` draws the oscillator offset uniformly in
    +-400 Hz from the seeded stream.
    """

    snr_db: float = math.inf
    inherent_cfo: Optional[float] = None
    doppler: float = 5.0
    rng_seed: int = 0
    trial: int = 0
    gain_db: float = 0.0
    reference_power: Optional[float] = None

    def derive(self, **overrides) -> ImpairmentSpec:
        """Return a copy with selected fields overridden."""
        return replace(self, **{k: v for k, v in overrides.items() if hasattr(self, k)})


def occupied_power(samples: np.ndarray) -> float:
    """Mean power over non-silent samples (0.0 for pure silence)."""
    mag2 = np.abs(samples) ** 2
    if mag2.size == 0:
        return 0.0
    mask = mag2 > 1e-24 * max(float(mag2.max()), 1e-300)
    if not np.any(mask):
        return 0.0
    return float(mag2[mask].mean())


def impair(sig: IqBuffer, spec: ImpairmentSpec, *, salt: str = "medium") -> IqBuffer:
    """Apply CFO + Doppler rotation, gain, then AWGN.

    Deterministic for a given ``(rng_seed, trial, salt)``.
    """
    rng = trial_rng(spec.rng_seed, spec.trial, salt)
    cfo = spec.inherent_cfo
    if cfo is None:
        cfo = float(rng.uniform(-INHERENT_CFO_RANGE, INHERENT_CFO_RANGE))

    offset = cfo + spec.doppler
    out = apply_freq_shift(sig, offset).samples if offset else sig.samples.copy()

    reference = spec.reference_power
    if reference is None:
        reference = occupied_power(sig.samples) or 1.0
    out = out * 10.0 ** (spec.gain_db / 20.0)

    if math.isfinite(spec.snr_db):
        noise_var = reference / 10.0 ** (spec.snr_db / 10.0)
        noise = rng.standard_normal(out.size) + 1j * rng.standard_normal(out.size)
        out = out + noise * math.sqrt(noise_var / 2.0)
    return sig.with_samples(out)


# ---------------------------------------------------------------------------
# Link budget helpers
# ---------------------------------------------------------------------------

def doppler_from_speed(speed_mps: float, carrier_hz: float) -> float:
    """Maximum Doppler shift ``v f / c`` for a radial speed."""
    return speed_mps * carrier_hz / SPEED_OF_LIGHT


def snr_from_link(
    *,
    tx_power_dbm: float,
    distance_m: float,
    noise_floor_dbm: float = -90.0,
    reference_loss_db: float = 40.0,
    pathloss_exponent: float = 2.0,
    reference_distance_m: float = 1.0,
) -> float:
    """Free-space-like monotone mapping from Tx power and distance to SNR."""
    distance = max(distance_m, reference_distance_m)
    loss = reference_loss_db + 10.0 * pathloss_exponent * math.log10(distance / reference_distance_m)
    return tx_power_dbm - loss - noise_floor_dbm
