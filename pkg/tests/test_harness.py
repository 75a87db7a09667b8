"""Tests for trial orchestration, metrics, sweeps and traces."""

from __future__ import annotations

import logging
import math

import numpy as np
import pytest

from dopplerfi import harness
from dopplerfi.codec import Code
from dopplerfi.errors import ConfigError
from dopplerfi.harness import (
    ChannelCalibration,
    ExperimentRunner,
    TrialRecord,
    aggregate,
    calibrate_channels,
    legacy_impact,
    run_trial,
    sweep,
)
from dopplerfi.presets import ExperimentConfig, PresetManager


def _tiny(preset: str, **overrides) -> ExperimentConfig:
    cfg = PresetManager(preset).config.derive(**{"payload_bits": 16, "trials": 1, **overrides})
    cfg.impairments.inherent_cfo_hz = 0.0
    return cfg


class TestAggregate:

    def test_side_channel_metrics(self):
        records = [
            TrialRecord(0, "w2b", payload_bits=100, bit_errors=0, frame_detected=True,
                        channel_bits=200, channel_errors=20, sim_time=0.01),
            TrialRecord(1, "w2b", payload_bits=100, bit_errors=10, frame_detected=True,
                        channel_bits=200, channel_errors=20, sim_time=0.01),
        ]
        m = aggregate(records)
        assert m.trials == 2
        assert m.bits == 200
        assert m.ber == pytest.approx(0.05)
        assert m.pre_fec_ber == pytest.approx(0.1)
        assert m.recovered_fraction == pytest.approx(0.5)
        assert m.frames_detected == 2
        assert m.throughput_bps == pytest.approx(9500.0)
        assert m.ci95["ber"] == pytest.approx(1.959963984540054 * math.sqrt(0.05 * 0.95 / 200))
        assert m.ci95["throughput_bps"] > 0
        assert math.isnan(m.legacy_per)

    def test_legacy_metrics(self):
        records = [
            TrialRecord(0, "legacy_wifi", packets=10, packet_errors=3, baseline_packet_errors=1),
            TrialRecord(1, "legacy_wifi", packets=10, packet_errors=3, baseline_packet_errors=1),
        ]
        m = aggregate(records)
        assert m.legacy_per == pytest.approx(0.3)
        assert m.legacy_throughput_loss == pytest.approx(1 - 14 / 18)
        assert math.isnan(m.ber)

    def test_empty(self):
        m = aggregate([])
        assert m.trials == 0
        assert math.isnan(m.ber)

    def test_undetected_frame_has_no_throughput(self):
        r = TrialRecord(0, "b2w", payload_bits=50, bit_errors=50, frame_detected=False, sim_time=1.0)
        assert r.correct_bits == 0
        assert r.throughput_bps == 0.0
        assert TrialRecord(0, "b2w").throughput_bps == 0.0

    def test_as_row_columns(self):
        row = aggregate([TrialRecord(0, "w2b", payload_bits=4, frame_detected=True, sim_time=1.0)]).as_row()
        assert "ci95" not in row
        for key in ("ber_ci95", "throughput_ci95", "legacy_ci95", "recovered_fraction"):
            assert key in row


class TestSideChannelTrials:

    def test_w2b_clean(self):
        record = run_trial(_tiny("w2b"), 0)
        assert record.frame_detected
        assert record.bit_errors == 0
        assert record.opportunities == 20
        assert record.channel_bits == 20
        assert record.sim_time == pytest.approx(20 * 140e-6)
        assert record.throughput_bps == pytest.approx(16 / (20 * 140e-6))

    def test_b2w_clean(self):
        record = run_trial(_tiny("b2w"), 0)
        assert record.frame_detected
        assert record.bit_errors == 0
        assert record.opportunities == 20
        assert record.sim_time == pytest.approx(20 * 625e-6)

    def test_coded_frame(self):
        record = run_trial(_tiny("w2b", code=Code.H74), 0)
        assert record.bit_errors == 0
        assert record.channel_bits == 4 + 28

    def test_deterministic(self):
        cfg = _tiny("w2b")
        cfg.impairments.snr_db = 10.0
        assert run_trial(cfg, 3) == run_trial(cfg, 3)

    def test_duty_cycle_stretches_time(self):
        record = run_trial(_tiny("w2b", duty_cycle=0.5), 0)
        assert record.bit_errors == 0
        assert record.opportunities > 20
        assert record.channel_bits == 20

    def test_unusable_hops_wait(self):
        cfg = _tiny("w2b")
        cfg.ble.channels = [3, 4]
        record = run_trial(cfg, 0)
        assert record.bit_errors == 0
        # Channel 4 carries nothing; each 625 us slot holds about 4.5 opportunities.
        assert record.opportunities > 30

    def test_opportunity_limit(self, caplog):
        cfg = _tiny("w2b", max_opportunities=3)
        with caplog.at_level(logging.WARNING, logger="dopplerfi.harness"):
            record = run_trial(cfg, 0)
        assert "stopped after 3 opportunities" in caplog.text
        assert not record.frame_detected
        assert record.bit_errors == 16


class TestLegacyImpact:

    def test_wifi_shift_within_cfo_range(self):
        cfg = PresetManager("legacy_wifi").config.derive(packets=3)
        m = ExperimentRunner(cfg).legacy_impact()
        assert m.trials == 1
        assert m.legacy_per == 0.0
        assert m.legacy_throughput_loss == 0.0

    def test_ble_shift(self):
        cfg = PresetManager("legacy_ble").config.derive(packets=3)
        m = legacy_impact(cfg)
        assert 0.0 <= m.legacy_per <= 1.0
        assert not math.isnan(m.legacy_throughput_loss)

    def test_side_channel_config_maps_to_legacy(self):
        cfg = _tiny("w2b", packets=2)
        cfg.impairments.snr_db = 25.0
        m = ExperimentRunner(cfg).legacy_impact()
        assert not math.isnan(m.legacy_per)


class TestSweep:

    def test_rows_follow_grid(self):
        runner = ExperimentRunner(_tiny("w2b"))
        rows = runner.sweep("snr_db", [math.inf, 30.0])
        assert [r["snr_db"] for r in rows] == [math.inf, 30.0]
        assert rows[0]["ber"] == 0.0

    def test_csv_text(self):
        cfg = _tiny("w2b")
        cfg.sweep.axis = "duty_cycle"
        cfg.sweep.values = [1.0]
        text = sweep(cfg)
        header, row = text.strip().splitlines()
        assert header.startswith("duty_cycle,trials,bits,bit_errors,ber")
        assert row.startswith("1,1,16,0,0")

    def test_small_shift_warns(self, caplog):
        runner = ExperimentRunner(_tiny("w2b", max_opportunities=30))
        with caplog.at_level(logging.WARNING, logger="dopplerfi.harness"):
            runner.sweep("shift_hz", [20e3])
        assert "closer than half a subcarrier" in caplog.text

    def test_needs_axis(self):
        with pytest.raises(ConfigError):
            ExperimentRunner(_tiny("w2b")).sweep()

    def test_write_sweep(self, tmp_path):
        cfg = _tiny("w2b")
        cfg.sweep.axis = "snr_db"
        cfg.sweep.values = [40.0]
        path = ExperimentRunner(cfg).write_sweep(tmp_path)
        assert path == tmp_path / "sweep_snr_db.csv"
        assert path.read_text(encoding="utf-8").startswith("snr_db,")
        script = tmp_path / "plot_sweep_snr_db.py"
        assert "sweep_snr_db.csv" in script.read_text(encoding="utf-8")

    def test_parallel_matches_serial(self):
        cfg = _tiny("w2b", trials=2)
        cfg.impairments.snr_db = 12.0
        _, serial = ExperimentRunner(cfg).run()
        _, parallel = ExperimentRunner(cfg, jobs=2).run()
        assert serial == parallel


class TestTrace:

    def test_w2b_trace(self, tmp_path):
        written = ExperimentRunner(_tiny("w2b")).trace(tmp_path)
        names = sorted(p.name for p in written)
        assert names == [
            "dsk_log.csv",
            "w2b_ch3_bit0_ble.iq",
            "w2b_ch3_bit0_demod.csv",
            "w2b_ch3_bit1_ble.iq",
            "w2b_ch3_bit1_demod.csv",
        ]
        assert (tmp_path / "w2b_ch3_bit0_ble.hdr").exists()
        log = (tmp_path / "dsk_log.csv").read_text(encoding="utf-8").splitlines()
        assert log[0] == "slot,channel,bit,shift_hz"
        assert len(log) == 65

    def test_b2w_trace(self, tmp_path):
        written = ExperimentRunner(_tiny("b2w")).trace(tmp_path, channel=5)
        names = {p.name for p in written}
        assert "b2w_ch5_bit1_csi.csv" in names
        assert "plot_b2w_ch5_bit1_csi.py" in names
        assert "b2w_ch5_bit0_band.iq" in names
        csi = (tmp_path / "b2w_ch5_bit0_csi.csv").read_text(encoding="utf-8").splitlines()
        assert csi[0] == "time,k,amplitude"
        assert len(csi) > 1


def _usable(cfg: ExperimentConfig) -> list[int]:
    return sorted(ch for ch, c in calibrate_channels(cfg).items() if c.usable)


class TestCalibration:

    def test_w2b_gate_between_bits(self):
        trained = calibrate_channels(_tiny("w2b"))[3]
        assert trained.usable
        assert trained.bit0 >= 12
        assert trained.bit1 <= 8
        assert trained.bit1 <= trained.gate < trained.bit0

    @pytest.mark.parametrize("cfo", [0.0, None])
    def test_b2w_preset_channels_train(self, cfo):
        cfg = PresetManager("b2w").config.derive(payload_bits=16, trials=1)
        cfg.impairments.inherent_cfo_hz = cfo
        assert set(cfg.ble.channels) <= set(_usable(cfg))

    def test_amplitude_metric(self):
        cfg = _tiny("b2w", payload_bits=40)
        cfg.receiver.csi_peak_metric = "amplitude"
        usable = _usable(cfg)
        assert usable
        for ch in usable:
            cfg.ble.channels = [ch]
            record = run_trial(cfg, 0)
            assert record.channel_errors == 0, ch
            assert record.bit_errors == 0, ch

    def test_cached_per_setup(self):
        cfg = _tiny("w2b")
        assert calibrate_channels(cfg) is calibrate_channels(cfg.derive())
        cfg.impairments.snr_db = 5.0
        assert calibrate_channels(cfg) is calibrate_channels(_tiny("w2b"))

    def test_legacy_direction_rejected(self):
        with pytest.raises(ConfigError, match="side-channel"):
            calibrate_channels(PresetManager("legacy_wifi").config)

    def test_dropped_channels_warn(self, caplog, monkeypatch):
        monkeypatch.setattr(harness, "_CALIBRATIONS", {})
        cfg = _tiny("w2b")
        cfg.ble.channels = sorted(cfg.usable_channels())
        with caplog.at_level(logging.WARNING, logger="dopplerfi.harness"):
            trained = calibrate_channels(cfg)
        dropped = sorted(ch for ch, c in trained.items() if not c.usable)
        assert 3 not in dropped
        if dropped:
            assert f"BLE channels {dropped} do not separate" in caplog.text
        else:
            assert not caplog.text

    def test_no_usable_channel(self, caplog, monkeypatch):
        monkeypatch.setattr(harness, "calibrate_channels", lambda cfg: {3: ChannelCalibration(3)})
        with caplog.at_level(logging.WARNING, logger="dopplerfi.harness"):
            record = run_trial(_tiny("w2b"), 0)
        assert "no BLE channel carries w2b bits" in caplog.text
        assert not record.frame_detected
        assert record.bit_errors == 16
        assert record.opportunities == 0

    def test_geometric_receiver(self):
        cfg = _tiny("w2b")
        cfg.receiver.calibrate = False
        assert run_trial(cfg, 0).bit_errors == 0


class TestCleanChannel:
    """1000-bit noiseless runs over every trained channel."""

    @pytest.mark.parametrize("preset", ["w2b", "b2w"])
    def test_every_usable_channel(self, preset):
        cfg = _tiny(preset, payload_bits=1000)
        usable = _usable(cfg)
        assert usable
        for ch in usable:
            cfg.ble.channels = [ch]
            record = run_trial(cfg, 0)
            assert record.frame_detected, ch
            assert (record.channel_errors, record.bit_errors) == (0, 0), ch

    def test_w2b_throughput(self):
        record = run_trial(_tiny("w2b", payload_bits=1000), 0)
        assert record.opportunities == 1004
        assert 6500 <= record.throughput_bps <= 7150

    def test_b2w_throughput(self):
        record = run_trial(_tiny("b2w", payload_bits=1000), 0)
        assert record.opportunities == 1004
        assert 1590 <= record.throughput_bps <= 1600


class TestShiftTrend:

    def test_ber_falls_with_shift(self):
        base = _tiny("w2b", payload_bits=500, trials=20)
        base.impairments.snr_db = 20.0
        points = []
        for shift in (20e3, 60e3, 100e3, 130e3):
            _, records = ExperimentRunner(base.with_axis("shift_hz", shift)).run()
            ber = np.array([r.bit_errors / r.payload_bits for r in records])
            assert ber.size * 500 >= 10_000
            binomial = math.sqrt(max(ber.mean() * (1 - ber.mean()), 0.25 / 500) / 10_000)
            points.append((ber.mean(), max(ber.std(ddof=1) / math.sqrt(ber.size), binomial)))
        for (ber_lo, sd_lo), (ber_hi, sd_hi) in zip(points, points[1:]):
            assert ber_hi <= ber_lo + 3 * math.hypot(sd_lo, sd_hi)

    def test_acceptance_sweep_is_reproducible(self, tmp_path):
        cfg = PresetManager("acceptance").config
        first = ExperimentRunner(cfg).write_sweep(tmp_path / "a")
        second = ExperimentRunner(cfg).write_sweep(tmp_path / "b")
        assert first.read_bytes() == second.read_bytes()


class TestLegacyShiftLimits:

    def test_within_tolerance(self):
        cfg = PresetManager("legacy_wifi").config.derive(packets=125)
        assert cfg.shifts.legacy_hz == 150e3
        assert legacy_impact(cfg).legacy_throughput_loss < 0.008

    def test_beyond_coarse_range(self):
        cfg = PresetManager("legacy_wifi").config.derive(packets=20)
        cfg.shifts.legacy_hz = 700e3
        assert legacy_impact(cfg).legacy_throughput_loss >= 0.1
