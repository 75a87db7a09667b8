"""Experiment configuration and named scenario presets.

Presets (w2b, b2w, legacy_wifi, legacy_ble, mobility, acceptance) are
built by registered builder functions; INI files and CLI flags derive
from one of them.
"""

from __future__ import annotations

import math
from copy import deepcopy
from dataclasses import dataclass, field, fields, is_dataclass
from enum import Enum
from typing import Any, Optional

from dopplerfi import bandplan as bp
from dopplerfi.ble_receiver import BleRxConfig
from dopplerfi.codec import Code
from dopplerfi.dsk_encoder import ShiftMap, b2w_channels, overlap_set, w2b_channels
from dopplerfi.errors import ConfigError
from dopplerfi.medium import doppler_from_speed, snr_from_link
from dopplerfi.waveforms import Mcs
from dopplerfi.wifi_receiver import WifiRxConfig


class Direction(Enum):
    W2B = "w2b"
    B2W = "b2w"
    LEGACY_WIFI = "legacy_wifi"
    LEGACY_BLE = "legacy_ble"

    @property
    def is_side_channel(self) -> bool:
        return self in (Direction.W2B, Direction.B2W)


SWEEP_AXES = ("snr_db", "shift_hz", "distance_m", "tx_power_dbm", "doppler_hz", "speed_mps", "duty_cycle")

# Centre of the default Wi-Fi pair, seen from the reference channel.
_WIFI_PAIR_CENTER = -15e3


# ---------------------------------------------------------------------------
# Data classes
# ---------------------------------------------------------------------------

class _Derivable:
    def derive(self, **overrides):
        """Return a copy with selected fields overridden."""
        clone = deepcopy(self)
        for k, v in overrides.items():
            if hasattr(clone, k):
                setattr(clone, k, v)
        return clone


@dataclass
class WifiSettings(_Derivable):
    channel: int = 1
    mcs: Mcs = Mcs.BPSK
    airtime_us: float = 100.0
    gap_us: float = 40.0
    legacy_payload_bits: int = 400

    @property
    def period(self) -> float:
        return (self.airtime_us + self.gap_us) * 1e-6


@dataclass
class BleSettings(_Derivable):
    """Receiver (W2B) or sender (B2W) hop pattern and packet shape.

    ``channels`` are cycled slot by slot unless ``hop_seed`` is set, in
    which case every slot draws uniformly from the 40 data channels.
    """

    channels: list[int] = field(default_factory=lambda: [3])
    hop_seed: Optional[int] = None
    payload: str = "alternating"
    payload_bits: int = 368
    gain_db: float = 0.0


@dataclass
class ShiftSettings(_Derivable):
    ble_bit0_hz: float = -80e3
    ble_bit1_hz: float = 80e3
    wifi_bit0_hz: float = -130e3
    wifi_bit1_hz: float = 100e3
    wifi_table: dict[int, tuple[float, float]] = field(default_factory=dict)
    anchored: bool = True
    legacy_hz: float = 150e3
    min_separation_hz: float = bp.MIN_SHIFT_SEPARATION

    def shift_map(self, wifi_channel: int) -> ShiftMap:
        kwargs = dict(
            ble_bit0=self.ble_bit0_hz,
            ble_bit1=self.ble_bit1_hz,
            wifi_bit0=self.wifi_bit0_hz,
            wifi_bit1=self.wifi_bit1_hz,
            wifi_table=dict(self.wifi_table),
            min_separation=self.min_separation_hz,
        )
        if self.anchored:
            return ShiftMap.anchored(wifi_channel, **kwargs)
        return ShiftMap(**kwargs)

    def with_magnitude(self, magnitude: float) -> ShiftSettings:
        """Pairs at +-magnitude: around the Wi-Fi pair centre, symmetric for BLE."""
        return self.derive(
            ble_bit0_hz=-magnitude,
            ble_bit1_hz=magnitude,
            wifi_bit0_hz=_WIFI_PAIR_CENTER - magnitude,
            wifi_bit1_hz=_WIFI_PAIR_CENTER + magnitude,
            wifi_table={},
            min_separation_hz=min(self.min_separation_hz, 2 * magnitude),
        )


@dataclass
class ImpairmentSettings(_Derivable):
    snr_db: float = math.inf
    inherent_cfo_hz: Optional[float] = None
    doppler_hz: float = 5.0
    speed_mps: Optional[float] = None
    gain_db: float = 0.0


@dataclass
class ReceiverSettings(_Derivable):
    rssi_threshold: float = 0.02
    eta: int = 8
    eta_table: dict[int, int] = field(default_factory=dict)
    rssi_smoothing: int = 4
    csi_sigma: float = 3.0
    csi_robust: bool = False
    csi_min_diff: float = 0.25
    csi_peak_metric: str = "complex"
    calibrate: bool = True

    def ble_config(self) -> BleRxConfig:
        return BleRxConfig(
            rssi_threshold=self.rssi_threshold,
            eta=self.eta,
            eta_table=dict(self.eta_table),
            rssi_smoothing=self.rssi_smoothing,
        )

    def wifi_config(self) -> WifiRxConfig:
        return WifiRxConfig(
            csi_sigma=self.csi_sigma,
            csi_robust=self.csi_robust,
            csi_min_diff=self.csi_min_diff,
            csi_peak_metric=self.csi_peak_metric,
        )


@dataclass
class LinkSettings(_Derivable):
    """Distance and Tx power to SNR; inactive unless both are set."""

    tx_power_dbm: Optional[float] = None
    distance_m: Optional[float] = None
    noise_floor_dbm: float = -90.0
    reference_loss_db: float = 40.0
    pathloss_exponent: float = 2.0
    reference_distance_m: float = 1.0

    @property
    def active(self) -> bool:
        return self.tx_power_dbm is not None and self.distance_m is not None

    def snr_db(self) -> float:
        return snr_from_link(
            tx_power_dbm=self.tx_power_dbm,
            distance_m=self.distance_m,
            noise_floor_dbm=self.noise_floor_dbm,
            reference_loss_db=self.reference_loss_db,
            pathloss_exponent=self.pathloss_exponent,
            reference_distance_m=self.reference_distance_m,
        )


@dataclass
class SweepSettings(_Derivable):
    axis: Optional[str] = None
    values: list[float] = field(default_factory=list)


@dataclass
class ExperimentConfig(_Derivable):
    """Complete description of one experiment.

    Usage::

        cfg = PresetManager("w2b").config.derive(trials=20, seed=7)
        cfg.impairments.snr_db = 15.0
        cfg.validate()
    """

    name: str = "custom"
    direction: Direction = Direction.W2B
    trials: int = 1
    seed: int = 0
    payload_bits: int = 1000
    code: Code = Code.NONE
    duty_cycle: float = 1.0
    max_opportunities: Optional[int] = None
    packets: int = 20
    wifi: WifiSettings = field(default_factory=WifiSettings)
    ble: BleSettings = field(default_factory=BleSettings)
    shifts: ShiftSettings = field(default_factory=ShiftSettings)
    impairments: ImpairmentSettings = field(default_factory=ImpairmentSettings)
    receiver: ReceiverSettings = field(default_factory=ReceiverSettings)
    link: LinkSettings = field(default_factory=LinkSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)

    # -- derived values -----------------------------------------------------

    def effective_snr_db(self) -> float:
        return self.link.snr_db() if self.link.active else self.impairments.snr_db

    def effective_doppler_hz(self) -> float:
        if self.impairments.speed_mps is None:
            return self.impairments.doppler_hz
        return doppler_from_speed(self.impairments.speed_mps, bp.wifi_center(self.wifi.channel))

    def usable_channels(self) -> frozenset[int]:
        if self.direction is Direction.W2B:
            return w2b_channels(self.wifi.channel)
        if self.direction is Direction.B2W:
            return b2w_channels(self.wifi.channel)
        return overlap_set(self.wifi.channel)

    def shift_map(self) -> ShiftMap:
        return self.shifts.shift_map(self.wifi.channel)

    def opportunity_limit(self, frame_bits: int) -> int:
        if self.max_opportunities is not None:
            return self.max_opportunities
        return max(100, 50 * frame_bits)

    # -- mutation helpers ---------------------------------------------------

    def with_axis(self, axis: str, value: float) -> ExperimentConfig:
        """Copy with one sweep axis set to *value*."""
        if axis not in SWEEP_AXES:
            raise ConfigError(f"Unknown sweep axis {axis!r}. Choose from: {', '.join(SWEEP_AXES)}")
        clone = deepcopy(self)
        if axis == "snr_db":
            clone.impairments.snr_db = float(value)
            clone.link.tx_power_dbm = None
        elif axis == "shift_hz":
            clone.shifts = clone.shifts.with_magnitude(abs(float(value)))
            clone.shifts.legacy_hz = float(value)
        elif axis == "distance_m":
            clone.link.distance_m = float(value)
            if clone.link.tx_power_dbm is None:
                clone.link.tx_power_dbm = 0.0
        elif axis == "tx_power_dbm":
            clone.link.tx_power_dbm = float(value)
            if clone.link.distance_m is None:
                clone.link.distance_m = clone.link.reference_distance_m
        elif axis == "doppler_hz":
            clone.impairments.doppler_hz = float(value)
            clone.impairments.speed_mps = None
        elif axis == "speed_mps":
            clone.impairments.speed_mps = float(value)
        elif axis == "duty_cycle":
            clone.duty_cycle = float(value)
        return clone

    def validate(self) -> ExperimentConfig:
        """Raise :class:`ConfigError` on inconsistent settings; return self."""
        problems = []
        if self.trials < 1:
            problems.append(f"trials must be >= 1, got {self.trials}")
        if self.payload_bits < 1:
            problems.append(f"payload_bits must be >= 1, got {self.payload_bits}")
        if self.packets < 1:
            problems.append(f"packets must be >= 1, got {self.packets}")
        if not 0.0 < self.duty_cycle <= 1.0:
            problems.append(f"duty_cycle must be in (0, 1], got {self.duty_cycle}")
        if self.ble.payload not in ("alternating", "random"):
            problems.append(f"ble payload must be alternating or random, got {self.ble.payload!r}")
        if not self.ble.channels and self.ble.hop_seed is None:
            problems.append("ble needs channels or hop_seed")
        if self.sweep.axis is not None:
            if self.sweep.axis not in SWEEP_AXES:
                problems.append(f"unknown sweep axis {self.sweep.axis!r}")
            if not self.sweep.values:
                problems.append("sweep grid is empty")
        try:
            bp.wifi_center(self.wifi.channel)
            for ch in self.ble.channels:
                bp.ble_center(ch)
            self.shift_map()
            self.receiver.ble_config()
            self.receiver.wifi_config()
        except ValueError as exc:
            problems.append(str(exc))
        if (
            not problems
            and self.direction.is_side_channel
            and self.ble.hop_seed is None
            and not set(self.ble.channels) & self.usable_channels()
        ):
            problems.append(
                f"none of BLE channels {self.ble.channels} can carry {self.direction.value} bits "
                f"on Wi-Fi channel {self.wifi.channel}"
            )
        if problems:
            raise ConfigError("; ".join(problems))
        return self

    def to_dict(self) -> dict[str, Any]:
        """JSON-friendly view (enums by value)."""
        return _plain(self)


def _plain(obj: Any) -> Any:
    if is_dataclass(obj):
        return {f.name: _plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, Enum):
        return obj.value
    if isinstance(obj, dict):
        return {str(k): _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    return obj


# ---------------------------------------------------------------------------
# Preset definitions
# ---------------------------------------------------------------------------

def _build_w2b() -> ExperimentConfig:
    """Wi-Fi to BLE, receiver parked on BLE channel 3."""
    return ExperimentConfig(name="w2b", direction=Direction.W2B, ble=BleSettings(channels=[3]))


def _build_b2w() -> ExperimentConfig:
    """BLE to Wi-Fi, hops cycled over channels 0, 3 and 8."""
    cfg = ExperimentConfig(name="b2w", direction=Direction.B2W)
    # Channel 5 also straddles a subcarrier but its CSI peak does not separate the shifts.
    cfg.ble = BleSettings(channels=[0, 3, 8], gain_db=-10.0)
    return cfg


def _build_legacy_wifi() -> ExperimentConfig:
    """Legacy Wi-Fi decode of frames carrying a fixed artificial shift."""
    cfg = ExperimentConfig(name="legacy_wifi", direction=Direction.LEGACY_WIFI, packets=50)
    cfg.impairments = ImpairmentSettings(snr_db=25.0)
    cfg.shifts = ShiftSettings(legacy_hz=150e3)
    return cfg


def _build_legacy_ble() -> ExperimentConfig:
    """Legacy BLE decode of packets carrying a fixed artificial shift."""
    cfg = ExperimentConfig(name="legacy_ble", direction=Direction.LEGACY_BLE, packets=50)
    cfg.impairments = ImpairmentSettings(snr_db=20.0)
    cfg.shifts = ShiftSettings(legacy_hz=100e3)
    return cfg


def _build_mobility() -> ExperimentConfig:
    """W2B under walking to driving speeds."""
    cfg = _build_w2b().derive(name="mobility", payload_bits=200, trials=5)
    cfg.impairments = ImpairmentSettings(snr_db=30.0)
    cfg.sweep = SweepSettings(axis="speed_mps", values=[0.0, 1.0, 2.0, 5.0, 10.0])
    return cfg


def _build_acceptance() -> ExperimentConfig:
    """Small W2B shift grid used for reproducibility checks."""
    cfg = _build_w2b().derive(name="acceptance", payload_bits=64, trials=2, seed=1)
    cfg.impairments = ImpairmentSettings(snr_db=20.0, inherent_cfo_hz=0.0)
    cfg.sweep = SweepSettings(axis="shift_hz", values=[20e3, 60e3, 100e3, 130e3])
    return cfg


# ---------------------------------------------------------------------------
# Preset registry
# ---------------------------------------------------------------------------

_PRESET_BUILDERS = {
    "w2b": _build_w2b,
    "b2w": _build_b2w,
    "legacy_wifi": _build_legacy_wifi,
    "legacy_ble": _build_legacy_ble,
    "mobility": _build_mobility,
    "acceptance": _build_acceptance,
}


class PresetManager:
    """Look up named experiment presets.

    Usage::

        pm = PresetManager("b2w")
        cfg = pm.config
    """

    PRESETS = list(_PRESET_BUILDERS.keys())

    def __init__(self, preset: str = "w2b") -> None:
        if preset not in _PRESET_BUILDERS:
            raise ConfigError(
                f"Unknown preset {preset!r}. Choose from: {', '.join(_PRESET_BUILDERS)}"
            )
        self.preset = preset
        self._config = _PRESET_BUILDERS[preset]()

    @property
    def config(self) -> ExperimentConfig:
        """A fresh copy of the preset configuration."""
        return deepcopy(self._config)

    @staticmethod
    def describe(preset: str) -> str:
        builder = _PRESET_BUILDERS.get(preset)
        if builder is None:
            raise ConfigError(f"Unknown preset {preset!r}")
        return (builder.__doc__ or preset).strip().splitlines()[0]
