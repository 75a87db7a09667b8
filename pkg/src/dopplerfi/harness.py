"""Experiment orchestration.

Ties the DSK encoder, waveform generators, shared medium, both receive
chains and the side-channel codec into Monte-Carlo trials, sweeps and
legacy-impact measurements.

Usage::

    runner = ExperimentRunner(PresetManager("w2b").config)
    metrics, records = runner.run()
    csv_text = runner.sweep_csv()
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from dopplerfi import bandplan as bp
from dopplerfi.ble_receiver import BleRxConfig, decode_ble_packet, demod_trace, gfsk_demap, gfsk_extract
from dopplerfi.codec import Code, frame_decode, frame_encode
from dopplerfi.dsk_encoder import DskEncoder, HopPlan, ShiftMap, shift_for_bit
from dopplerfi.errors import ConfigError
from dopplerfi.medium import INHERENT_CFO_RANGE, BandTimeline, ImpairmentSpec, impair, render, trial_rng
from dopplerfi.presets import Direction, ExperimentConfig
from dopplerfi.report import METRIC_COLUMNS, render_csv, write_csi_plot_script, write_csv, write_plot_script
from dopplerfi.waveforms import (
    BlePacketSpec,
    IqBuffer,
    WifiFrameSpec,
    apply_freq_shift,
    ble_channelize,
    dump_iq,
    gen_ble_packet,
    gen_wifi_frame,
)
from dopplerfi.wifi_receiver import (
    compensate,
    csi_demap,
    csi_extract,
    decode_wifi_payload,
    detect_and_sync,
    estimate_cfo,
    export_csi_csv,
    receive_frame,
)

logger = logging.getLogger(__name__)

Z95 = 1.959963984540054


# ---------------------------------------------------------------------------
# Records and metrics
# ---------------------------------------------------------------------------

@dataclass
class TrialRecord:
    """Bit-level outcome of one trial."""

    trial: int
    direction: str
    payload_bits: int = 0
    bit_errors: int = 0
    frame_detected: bool = False
    channel_bits: int = 0
    channel_errors: int = 0
    corrections: int = 0
    opportunities: int = 0
    sim_time: float = 0.0
    packets: int = 0
    packet_errors: int = 0
    baseline_packet_errors: int = 0

    @property
    def correct_bits(self) -> int:
        return self.payload_bits - self.bit_errors if self.frame_detected else 0

    @property
    def throughput_bps(self) -> float:
        return self.correct_bits / self.sim_time if self.sim_time > 0 else 0.0


@dataclass
class Metrics:
    trials: int = 0
    bits: int = 0
    bit_errors: int = 0
    ber: float = math.nan
    pre_fec_ber: float = math.nan
    recovered_fraction: float = math.nan
    frames_detected: int = 0
    throughput_bps: float = math.nan
    legacy_per: float = math.nan
    legacy_throughput_loss: float = math.nan
    ci95: dict[str, float] = field(default_factory=dict)

    def as_row(self) -> dict[str, object]:
        row = {k: v for k, v in asdict(self).items() if k != "ci95"}
        row["ber_ci95"] = self.ci95.get("ber")
        row["throughput_ci95"] = self.ci95.get("throughput_bps")
        row["legacy_ci95"] = self.ci95.get("legacy_per")
        return row


def _wald(p: float, n: int) -> float:
    if n <= 0 or math.isnan(p):
        return math.nan
    return Z95 * math.sqrt(p * (1.0 - p) / n)


def aggregate(records: Sequence[TrialRecord]) -> Metrics:
    """Pool per-trial records into :class:`Metrics` with 95% half-widths."""
    m = Metrics(trials=len(records))
    if not records:
        return m
    m.bits = sum(r.payload_bits for r in records)
    m.bit_errors = sum(r.bit_errors for r in records)
    m.frames_detected = sum(r.frame_detected for r in records)
    if m.bits:
        m.ber = m.bit_errors / m.bits
        m.ci95["ber"] = _wald(m.ber, m.bits)
        tput = np.array([r.throughput_bps for r in records])
        m.throughput_bps = float(tput.mean())
        m.ci95["throughput_bps"] = Z95 * float(tput.std(ddof=1)) / math.sqrt(len(tput)) if len(tput) > 1 else 0.0

    channel_bits = sum(r.channel_bits for r in records)
    if channel_bits:
        m.pre_fec_ber = sum(r.channel_errors for r in records) / channel_bits
        if m.pre_fec_ber > 0 and not math.isnan(m.ber):
            m.recovered_fraction = min(1.0, max(0.0, 1.0 - m.ber / m.pre_fec_ber))

    packets = sum(r.packets for r in records)
    if packets:
        failed = sum(r.packet_errors for r in records)
        base_failed = sum(r.baseline_packet_errors for r in records)
        m.legacy_per = failed / packets
        m.ci95["legacy_per"] = _wald(m.legacy_per, packets)
        base_ok = packets - base_failed
        if base_ok:
            m.legacy_throughput_loss = min(1.0, max(0.0, 1.0 - (packets - failed) / base_ok))
        else:
            logger.warning("Baseline legacy decode failed for every packet; loss undefined")
    return m


# ---------------------------------------------------------------------------
# Trial helpers
# ---------------------------------------------------------------------------

def _impairments(cfg: ExperimentConfig, trial: int) -> ImpairmentSpec:
    return ImpairmentSpec(
        snr_db=cfg.effective_snr_db(),
        inherent_cfo=cfg.impairments.inherent_cfo_hz,
        doppler=cfg.effective_doppler_hz(),
        rng_seed=cfg.seed,
        trial=trial,
        gain_db=cfg.impairments.gain_db,
        reference_power=1.0,
    )


def _random_bits(cfg: ExperimentConfig, trial: int, salt: str, n: int) -> np.ndarray:
    return trial_rng(cfg.seed, trial, salt).integers(0, 2, size=n).astype(np.int8)


def _padded(payload: np.ndarray, code: Code) -> np.ndarray:
    extra = -payload.size % code.k
    return np.concatenate([payload, np.zeros(extra, dtype=np.int8)]) if extra else payload


def _hop_lookup(cfg: ExperimentConfig, trial: int, n_slots: int) -> Callable[[int], int]:
    if cfg.ble.hop_seed is not None:
        plan = HopPlan.uniform(n_slots, cfg.ble.hop_seed, trial)
    else:
        plan = HopPlan.cycle(cfg.ble.channels, n_slots)
    return lambda slot: plan.sequence[slot]


def _ble_payload(cfg: ExperimentConfig, trial: int) -> np.ndarray:
    if cfg.ble.payload == "alternating":
        return (np.arange(cfg.ble.payload_bits) % 2).astype(np.int8)
    return _random_bits(cfg, trial, "ble-payload", cfg.ble.payload_bits)


def _in_band(wifi_channel: int, ble_channel: int) -> bool:
    offset = abs(bp.relative_offset(wifi_channel, ble_channel))
    return offset + bp.BLE_HALF_BANDWIDTH <= bp.WIFI_SAMPLE_RATE / 2.0


@dataclass
class _Link:
    """Per-trial side-channel bookkeeping shared by both directions."""

    sent: list[Optional[int]] = field(default_factory=list)
    received: list[int] = field(default_factory=list)
    active: list[bool] = field(default_factory=list)
    channel_bits: int = 0
    channel_errors: int = 0

    def observe(self, sent: Optional[int], rx_bit: Optional[int], active: bool) -> None:
        self.received.append(0 if rx_bit is None else rx_bit)
        self.active.append(active)
        if sent is not None:
            self.channel_bits += 1
            if not active or rx_bit is None or rx_bit != sent:
                self.channel_errors += 1


class _SideChannelTrial:
    """Runs one W2B or B2W trial opportunity by opportunity.

    With a *calibration* the usable set, the BLE bias thresholds and the
    CSI reference indices come from the trained channels.
    """

    def __init__(
        self,
        cfg: ExperimentConfig,
        trial: int,
        calibration: Optional[Mapping[int, ChannelCalibration]] = None,
    ) -> None:
        self.cfg = cfg
        self.trial = trial
        self.shift_map: ShiftMap = cfg.shift_map()
        self.calibration = dict(calibration) if calibration is not None else None
        if self.calibration is None:
            self.usable = cfg.usable_channels()
        else:
            self.usable = frozenset(ch for ch, c in self.calibration.items() if c.usable)
        self.spec = _impairments(cfg, trial)
        self.ble_rx = self._ble_rx_config()
        self.wifi_rx = cfg.receiver.wifi_config()
        self.wifi_center = bp.wifi_center(cfg.wifi.channel)
        legacy_bits = _random_bits(cfg, trial, "wifi-legacy", cfg.wifi.legacy_payload_bits)
        self.wifi_frame = gen_wifi_frame(
            WifiFrameSpec(legacy_bits, cfg.wifi.mcs, cfg.wifi.channel, airtime=cfg.wifi.airtime_us * 1e-6)
        )

    def _ble_rx_config(self) -> BleRxConfig:
        rx = self.cfg.receiver.ble_config()
        if not self.calibration:
            return rx
        table = {ch: int(c.gate) for ch, c in self.calibration.items() if c.usable}
        table.update(rx.eta_table)
        return rx.derive(eta_table=table)

    def reference_index(self, channel: int) -> float:
        """CSI decision point: trained gate, else the nominal index."""
        trained = (self.calibration or {}).get(channel)
        if trained is not None and trained.usable:
            return float(trained.gate)
        return bp.nominal_index(self.cfg.wifi.channel, channel)

    def run(self) -> TrialRecord:
        cfg = self.cfg
        payload = _random_bits(cfg, self.trial, "payload", cfg.payload_bits)
        if not self.usable:
            logger.warning("Trial %d: no BLE channel carries %s bits on Wi-Fi channel %d",
                           self.trial, cfg.direction.value, cfg.wifi.channel)
            return TrialRecord(trial=self.trial, direction=cfg.direction.value,
                               payload_bits=cfg.payload_bits, bit_errors=cfg.payload_bits)
        padded = _padded(payload, cfg.code)
        tx_bits = frame_encode(padded, cfg.code)
        encoder = DskEncoder(self.usable, keep_log=False)
        encoder.submit(tx_bits)

        w2b = cfg.direction is Direction.W2B
        unit = cfg.wifi.period if w2b else bp.BLE_SLOT
        limit = cfg.opportunity_limit(tx_bits.size)
        hop = _hop_lookup(cfg, self.trial, int(limit * unit / bp.BLE_SLOT) + 2)
        traffic_rng = trial_rng(cfg.seed, self.trial, "traffic")
        link = _Link()

        logger.info("Trial %d: %s, %d frame bits", self.trial, cfg.direction.value, tx_bits.size)
        opp = 0
        while encoder.pending and opp < limit:
            channel = hop(int(opp * unit / bp.BLE_SLOT + 1e-9))
            traffic = bool(traffic_rng.random() < cfg.duty_cycle)
            sent = encoder.step(channel) if traffic else None
            if channel in self.usable:
                step = self._w2b_step if w2b else self._b2w_step
                rx_bit, active = step(opp, channel, sent, traffic)
                link.observe(sent, rx_bit, active)
            opp += 1
        if encoder.pending:
            logger.warning("Trial %d stopped after %d opportunities with %d bits queued",
                           self.trial, opp, encoder.pending)

        decoded = frame_decode(link.received, cfg.code, active=link.active, payload_bits=padded.size)
        record = TrialRecord(
            trial=self.trial,
            direction=cfg.direction.value,
            payload_bits=cfg.payload_bits,
            channel_bits=link.channel_bits,
            channel_errors=link.channel_errors,
            opportunities=opp,
            sim_time=opp * unit,
        )
        if decoded is None:
            record.bit_errors = cfg.payload_bits
            logger.debug("Trial %d: preamble not found", self.trial)
        else:
            got = decoded.data[: cfg.payload_bits]
            record.frame_detected = True
            record.corrections = decoded.corrections
            record.bit_errors = int(np.count_nonzero(got != payload[: got.size])) + cfg.payload_bits - got.size
        logger.info("Trial %d: %d/%d bit errors over %d opportunities",
                    self.trial, record.bit_errors, record.payload_bits, opp)
        return record

    # -- Wi-Fi to BLE -------------------------------------------------------

    def w2b_band(
        self,
        opp: int,
        channel: int,
        sent: Optional[int],
        traffic: bool,
        spec: Optional[ImpairmentSpec] = None,
    ) -> IqBuffer:
        cfg = self.cfg
        timeline = BandTimeline(band_center=self.wifi_center, duration=cfg.wifi.period)
        if traffic:
            shift = 0.0 if sent is None else shift_for_bit(sent, "wifi", channel, self.shift_map)
            timeline.place(apply_freq_shift(self.wifi_frame, shift), start_time=cfg.wifi.gap_us * 1e-6)
        return impair(render(timeline), spec or self.spec, salt=f"w2b/{opp}")

    def slicer_ones(self, channel: int, bit: int, spec: ImpairmentSpec) -> Optional[int]:
        """Count of slicer ones for one shifted frame, ``None`` if undetected."""
        narrow = ble_channelize(self.w2b_band(0, channel, bit, True, spec), channel)
        o = gfsk_extract(narrow, self.ble_rx)
        return None if o is None else int(o.sum())

    def _w2b_step(self, opp: int, channel: int, sent: Optional[int], traffic: bool) -> tuple[Optional[int], bool]:
        narrow = ble_channelize(self.w2b_band(opp, channel, sent, traffic), channel)
        o = gfsk_extract(narrow, self.ble_rx)
        if o is None:
            logger.debug("Opportunity %d: no RSSI start on channel %d", opp, channel)
            return None, False
        return gfsk_demap(o, self.ble_rx, channel), True

    # -- BLE to Wi-Fi -------------------------------------------------------

    def b2w_band(
        self,
        opp: int,
        channel: int,
        sent: Optional[int],
        traffic: bool,
        spec: Optional[ImpairmentSpec] = None,
    ) -> IqBuffer:
        cfg = self.cfg
        timeline = BandTimeline(band_center=self.wifi_center, duration=bp.BLE_SLOT)
        for i in range(int(bp.BLE_SLOT // cfg.wifi.period)):
            timeline.place(self.wifi_frame, start_time=cfg.wifi.gap_us * 1e-6 + i * cfg.wifi.period)
        if traffic and _in_band(cfg.wifi.channel, channel):
            shift = 0.0 if sent is None else shift_for_bit(sent, "ble", channel, self.shift_map)
            packet = gen_ble_packet(BlePacketSpec(_ble_payload(cfg, self.trial), channel, shift))
            timeline.place(packet, start_time=0.0, gain_db=cfg.ble.gain_db)
        return impair(render(timeline), spec or self.spec, salt=f"b2w/{opp}")

    def b2w_csi(self, opp: int, band: IqBuffer) -> list:
        cfg = self.cfg
        width = int(round(cfg.wifi.period * band.sample_rate))
        vectors = []
        for i in range(int(bp.BLE_SLOT // cfg.wifi.period)):
            segment = band.with_samples(band.samples[i * width:(i + 1) * width])
            rx = receive_frame(segment, self.wifi_rx, time_origin=opp * bp.BLE_SLOT + i * cfg.wifi.period)
            if rx is None:
                logger.debug("Opportunity %d: Wi-Fi frame %d not detected", opp, i)
                continue
            vectors.append(rx.csi)
        return vectors

    def peak_index(self, channel: int, bit: int, spec: ImpairmentSpec) -> Optional[float]:
        """Mean CSI peak index over one slot, ``None`` without hits."""
        hits = csi_extract(self.b2w_csi(0, self.b2w_band(0, channel, bit, True, spec)), self.wifi_rx)
        return float(np.mean([h.peak_index for h in hits])) if hits else None

    def _b2w_step(self, opp: int, channel: int, sent: Optional[int], traffic: bool) -> tuple[Optional[int], bool]:
        vectors = self.b2w_csi(opp, self.b2w_band(opp, channel, sent, traffic))
        hits = csi_extract(vectors, self.wifi_rx)
        if not hits:
            return None, False
        return csi_demap(hits, self.wifi_rx, nominal_index=self.reference_index(channel)), True


# ---------------------------------------------------------------------------
# Channel calibration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ChannelCalibration:
    """Noiseless training response of one BLE channel.

    ``bit0`` and ``bit1`` are the worst cases over the inherent-CFO
    corners: slicer ones for W2B, mean CSI peak index for B2W. ``gate``
    separates them, or is ``None`` when the two bits overlap.
    """

    channel: int
    bit0: Optional[float] = None
    bit1: Optional[float] = None
    gate: Optional[float] = None

    @property
    def usable(self) -> bool:
        return self.gate is not None


_CALIBRATIONS: dict[str, dict[int, ChannelCalibration]] = {}


def _calibration_key(cfg: ExperimentConfig) -> str:
    return repr((
        cfg.direction, cfg.seed, cfg.wifi, cfg.ble.payload, cfg.ble.payload_bits, cfg.ble.gain_db,
        cfg.shifts, cfg.receiver, cfg.impairments.inherent_cfo_hz, cfg.impairments.gain_db,
        cfg.effective_doppler_hz(),
    ))


def _cfo_corners(cfg: ExperimentConfig) -> tuple[float, ...]:
    if cfg.impairments.inherent_cfo_hz is not None:
        return (cfg.impairments.inherent_cfo_hz,)
    return (-INHERENT_CFO_RANGE, 0.0, INHERENT_CFO_RANGE)


def _w2b_gate(channel: int, bit0: list[int], bit1: list[int], eta: int, window: int) -> ChannelCalibration:
    # Bit 0 (negative shift) reads more ones.
    low0, high1 = min(bit0), max(bit1)
    if high1 <= eta < low0:
        return ChannelCalibration(channel, low0, high1, eta)
    gate = min(max((low0 + high1 - 1) // 2, 1), window - 1)
    return ChannelCalibration(channel, low0, high1, gate if high1 <= gate < low0 else None)


def _b2w_gate(channel: int, bit0: list[float], bit1: list[float], nominal: float) -> ChannelCalibration:
    high0, low1 = max(bit0), min(bit1)
    if high0 < nominal < low1:
        return ChannelCalibration(channel, high0, low1, nominal)
    return ChannelCalibration(channel, high0, low1, (high0 + low1) / 2.0 if high0 < low1 else None)


def _calibrate(cfg: ExperimentConfig) -> dict[int, ChannelCalibration]:
    trial = _SideChannelTrial(cfg, 0)
    w2b = cfg.direction is Direction.W2B
    out = {}
    for channel in sorted(cfg.usable_channels()):
        responses: dict[int, list] = {0: [], 1: []}
        for cfo in _cfo_corners(cfg):
            spec = trial.spec.derive(snr_db=math.inf, inherent_cfo=cfo)
            for bit in (0, 1):
                value = trial.slicer_ones(channel, bit, spec) if w2b else trial.peak_index(channel, bit, spec)
                responses[bit].append(value)
        if any(v is None for v in responses[0] + responses[1]):
            result = ChannelCalibration(channel)
        elif w2b:
            result = _w2b_gate(channel, responses[0], responses[1], trial.ble_rx.eta_for(channel),
                               trial.ble_rx.preamble_window)
        else:
            result = _b2w_gate(channel, responses[0], responses[1], trial.reference_index(channel))
        logger.info("Calibrated %s channel %d: bit0 %s, bit1 %s, gate %s",
                    cfg.direction.value, channel, result.bit0, result.bit1, result.gate)
        out[channel] = result
    return out


def calibrate_channels(cfg: ExperimentConfig) -> dict[int, ChannelCalibration]:
    """Train every candidate channel of a side-channel config.

    Each candidate carries one bit-0 and one bit-1 opportunity without
    noise at every inherent-CFO corner. A channel is usable only when the
    two responses never overlap; its gate then drives the decision.
    Results are cached per setup.
    """
    if not cfg.direction.is_side_channel:
        raise ConfigError(f"calibration needs a side-channel direction, got {cfg.direction.value}")
    key = _calibration_key(cfg)
    if key not in _CALIBRATIONS:
        _CALIBRATIONS[key] = _calibrate(cfg)
        dropped = sorted(ch for ch, c in _CALIBRATIONS[key].items() if not c.usable and ch in cfg.ble.channels)
        if dropped:
            logger.warning("%s: BLE channels %s do not separate the two shifts on Wi-Fi channel %d",
                           cfg.direction.value, dropped, cfg.wifi.channel)
    return _CALIBRATIONS[key]


def _trial_calibration(cfg: ExperimentConfig) -> Optional[dict[int, ChannelCalibration]]:
    return calibrate_channels(cfg) if cfg.receiver.calibrate else None


# ---------------------------------------------------------------------------
# Legacy impact
# ---------------------------------------------------------------------------

def _legacy_direction(direction: Direction) -> Direction:
    return {Direction.W2B: Direction.LEGACY_WIFI, Direction.B2W: Direction.LEGACY_BLE}.get(direction, direction)


def _legacy_wifi_ok(cfg: ExperimentConfig, frame: IqBuffer, bits: np.ndarray, spec: ImpairmentSpec, salt: str) -> bool:
    timeline = BandTimeline(band_center=frame.center_freq, duration=cfg.wifi.period)
    timeline.place(frame, start_time=cfg.wifi.gap_us * 1e-6)
    band = impair(render(timeline), spec, salt=salt)
    start = detect_and_sync(band)
    if start is None:
        return False
    comp = compensate(band, estimate_cfo(band, start))
    decoded = decode_wifi_payload(comp, start, bits.size, mcs=cfg.wifi.mcs, airtime=cfg.wifi.airtime_us * 1e-6)
    return bool(np.array_equal(decoded, bits))


def _legacy_ble_ok(packet: IqBuffer, bits: np.ndarray, spec: ImpairmentSpec, salt: str) -> bool:
    decoded = decode_ble_packet(impair(packet, spec, salt=salt), bits.size)
    return bool(np.array_equal(decoded, bits))


def _legacy_trial(cfg: ExperimentConfig, trial: int) -> TrialRecord:
    direction = _legacy_direction(cfg.direction)
    spec = _impairments(cfg, trial)
    shift = cfg.shifts.legacy_hz
    record = TrialRecord(trial=trial, direction=direction.value, packets=cfg.packets)
    for j in range(cfg.packets):
        salt = f"legacy/{j}"
        if direction is Direction.LEGACY_WIFI:
            bits = _random_bits(cfg, trial, f"legacy-bits/{j}", cfg.wifi.legacy_payload_bits)
            frame = gen_wifi_frame(
                WifiFrameSpec(bits, cfg.wifi.mcs, cfg.wifi.channel, airtime=cfg.wifi.airtime_us * 1e-6)
            )
            shifted_ok = _legacy_wifi_ok(cfg, apply_freq_shift(frame, shift), bits, spec, salt)
            baseline_ok = _legacy_wifi_ok(cfg, frame, bits, spec, salt)
        else:
            bits = _random_bits(cfg, trial, f"legacy-bits/{j}", cfg.ble.payload_bits)
            channel = cfg.ble.channels[0] if cfg.ble.channels else 3
            packet = gen_ble_packet(BlePacketSpec(bits, channel))
            shifted_ok = _legacy_ble_ok(apply_freq_shift(packet, shift), bits, spec, salt)
            baseline_ok = _legacy_ble_ok(packet, bits, spec, salt)
        record.packet_errors += not shifted_ok
        record.baseline_packet_errors += not baseline_ok
    logger.info("Trial %d: %s shift %.0f Hz, %d/%d packets lost (baseline %d)",
                trial, direction.value, shift, record.packet_errors, record.packets,
                record.baseline_packet_errors)
    return record


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------

def run_trial(cfg: ExperimentConfig, trial_index: int) -> TrialRecord:
    """One deterministic trial for ``(cfg.seed, trial_index)``."""
    if cfg.direction.is_side_channel:
        return _SideChannelTrial(cfg, trial_index, _trial_calibration(cfg)).run()
    return _legacy_trial(cfg, trial_index)


def _trial_worker(args: tuple[ExperimentConfig, int]) -> TrialRecord:
    cfg, trial = args
    return run_trial(cfg, trial)


class ExperimentRunner:
    """Run trials, sweeps and legacy-impact measurements for one config.

    Usage::

        runner = ExperimentRunner(cfg, jobs=4)
        metrics, records = runner.run()
        runner.write_sweep("out/")
    """

    def __init__(self, cfg: ExperimentConfig, *, jobs: int = 1) -> None:
        self.cfg = cfg.validate()
        self.jobs = max(1, int(jobs))

    def _records(self, cfg: ExperimentConfig) -> list[TrialRecord]:
        tasks = [(cfg, t) for t in range(cfg.trials)]
        if self.jobs == 1 or cfg.trials == 1:
            return [_trial_worker(t) for t in tasks]
        with ProcessPoolExecutor(max_workers=self.jobs) as pool:
            return list(pool.map(_trial_worker, tasks))

    def run(self) -> tuple[Metrics, list[TrialRecord]]:
        """Run every trial of the configured direction."""
        records = self._records(self.cfg)
        return aggregate(records), records

    def legacy_impact(self) -> Metrics:
        """Legacy decode of shifted packets against an unshifted baseline."""
        cfg = self.cfg.derive(direction=_legacy_direction(self.cfg.direction))
        return aggregate(self._records(cfg))

    def sweep(self, axis: Optional[str] = None, values: Optional[Sequence[float]] = None) -> list[dict[str, object]]:
        """One metrics row per grid value, in grid order."""
        axis = axis or self.cfg.sweep.axis
        values = list(values if values is not None else self.cfg.sweep.values)
        if axis is None or not values:
            raise ConfigError("sweep needs an axis and a non-empty list of values")
        rows = []
        for value in values:
            point = self.cfg.with_axis(axis, value)
            if point.shifts.min_separation_hz < self.cfg.shifts.min_separation_hz:
                logger.warning("Shift %.0f Hz: pairs closer than half a subcarrier", value)
            logger.info("Sweep %s = %g", axis, value)
            metrics = aggregate(self._records(point.validate()))
            rows.append({axis: value, **metrics.as_row()})
        return rows

    def sweep_csv(self, axis: Optional[str] = None, values: Optional[Sequence[float]] = None) -> str:
        axis = axis or self.cfg.sweep.axis
        return render_csv(self.sweep(axis, values), (axis, *METRIC_COLUMNS))

    def write_sweep(self, out_dir: str | Path, *, plot: bool = True) -> Path:
        """Write ``sweep_<axis>.csv`` (plus a plot script) under *out_dir*."""
        axis = self.cfg.sweep.axis
        rows = self.sweep()
        path = write_csv(rows, (axis, *METRIC_COLUMNS), Path(out_dir) / f"sweep_{axis}.csv")
        if plot:
            y = ["legacy_throughput_loss"] if not self.cfg.direction.is_side_channel else ["ber"]
            write_plot_script(path, axis, y, title=f"{self.cfg.name}: {y[0]} vs {axis}")
        return path

    def trace(self, out_dir: str | Path, *, channel: Optional[int] = None) -> list[Path]:
        """Dump receiver intermediates for one bit-0 and one bit-1 opportunity."""
        cfg = self.cfg
        out_dir = Path(out_dir)
        if not cfg.direction.is_side_channel:
            cfg = cfg.derive(direction=Direction.W2B if cfg.direction is Direction.LEGACY_WIFI else Direction.B2W)
        tr = _SideChannelTrial(cfg, 0, _trial_calibration(cfg))
        if channel is None:
            candidates = [c for c in cfg.ble.channels if c in tr.usable] or sorted(tr.usable or cfg.usable_channels())
            channel = candidates[0]
        written = []
        for bit in (0, 1):
            stem = f"{cfg.direction.value}_ch{channel}_bit{bit}"
            if cfg.direction is Direction.W2B:
                narrow = ble_channelize(tr.w2b_band(bit, channel, bit, True), channel)
                written.append(demod_trace(narrow, tr.ble_rx).export_csv(out_dir / f"{stem}_demod.csv"))
                written.append(dump_iq(narrow, out_dir / f"{stem}_ble"))
            else:
                band = tr.b2w_band(bit, channel, bit, True)
                csi_path = export_csi_csv(tr.b2w_csi(bit, band), out_dir / f"{stem}_csi.csv")
                written += [csi_path, write_csi_plot_script(csi_path), dump_iq(band, out_dir / f"{stem}_band")]

        frame_bits = frame_encode(_padded(_random_bits(cfg, 0, "payload", cfg.payload_bits), cfg.code), cfg.code)
        encoder = DskEncoder(tr.usable)
        encoder.submit(frame_bits)
        hop = _hop_lookup(cfg, 0, 64)
        for slot in range(64):
            encoder.step(hop(slot))
        side = "wifi" if cfg.direction is Direction.W2B else "ble"
        written.append(encoder.export_log(out_dir / "dsk_log.csv", side=side, shift_map=tr.shift_map))
        return written


def sweep(cfg: ExperimentConfig, grid: Optional[Sequence[float]] = None, *, jobs: int = 1) -> str:
    """Sweep CSV text over ``cfg.sweep.axis`` (or *grid* on that axis)."""
    return ExperimentRunner(cfg, jobs=jobs).sweep_csv(values=grid)


def legacy_impact(cfg: ExperimentConfig, *, jobs: int = 1) -> Metrics:
    return ExperimentRunner(cfg, jobs=jobs).legacy_impact()
