"""Tests for the BLE receive chain."""

from __future__ import annotations

import csv

import numpy as np
import pytest

from dopplerfi import bandplan as bp
from dopplerfi.ble_receiver import (
    BleRxConfig,
    clock_recover,
    decode_ble_packet,
    demod_trace,
    detect_wifi_start,
    gfsk_demap,
    gfsk_extract,
    quad_demod,
    rssi,
    slice_bits,
)
from dopplerfi.errors import SignalError
from dopplerfi.medium import BandTimeline, ImpairmentSpec, impair, render
from dopplerfi.waveforms import (
    BlePacketSpec,
    IqBuffer,
    WifiFrameSpec,
    apply_freq_shift,
    ble_channelize,
    gen_ble_packet,
    gen_wifi_frame,
)


def _w2b_capture(shift: float, ble_channel: int = 3, snr_db: float = float("inf")) -> IqBuffer:
    frame = gen_wifi_frame(WifiFrameSpec(np.zeros(200, dtype=np.int8), channel=1))
    tl = BandTimeline(band_center=bp.wifi_center(1), duration=140e-6)
    tl.place(apply_freq_shift(frame, shift), start_time=40e-6)
    spec = ImpairmentSpec(snr_db=snr_db, inherent_cfo=0.0, doppler=0.0, rng_seed=4, reference_power=1.0)
    return ble_channelize(impair(render(tl), spec), ble_channel)


class TestRxConfig:

    def test_defaults(self):
        cfg = BleRxConfig()
        assert cfg.eta == 8
        assert cfg.preamble_window == 16
        assert cfg.eta_for(3) == 8

    def test_eta_must_be_inside_window(self):
        with pytest.raises(ValueError):
            BleRxConfig(eta=16)
        with pytest.raises(ValueError):
            BleRxConfig(eta=0)
        with pytest.raises(ValueError, match="channel 5"):
            BleRxConfig(eta_table={5: 20})

    def test_eta_table(self):
        cfg = BleRxConfig(eta_table={3: 12})
        assert cfg.eta_for(3) == 12
        assert cfg.eta_for(5) == 8
        assert cfg.eta_for(None) == 8


class TestPrimitives:

    def test_quad_demod_tone(self):
        x = np.exp(1j * 0.3 * np.arange(50))
        np.testing.assert_allclose(quad_demod(x), 0.3)

    def test_quad_demod_zero_sample(self):
        x = np.array([1.0, 0.0, 1.0, 1j])
        phases = quad_demod(x)
        assert phases[0] == 0.0
        assert phases[1] == 0.0
        assert phases[2] == pytest.approx(np.pi / 2)

    def test_quad_demod_too_short(self):
        with pytest.raises(SignalError):
            quad_demod(np.ones(1))

    def test_rssi_is_causal_average(self):
        r = rssi(np.ones(8), smoothing=4)
        np.testing.assert_allclose(r, [0.25, 0.5, 0.75, 1, 1, 1, 1, 1])

    def test_slice_bits(self):
        assert slice_bits(np.array([0.2, -0.1, 0.0, 1.0])).tolist() == [1, 0, 0, 1]

    def test_clock_recover_steady_input(self):
        out = clock_recover(np.ones(20), 2)
        assert out.size == 10
        np.testing.assert_allclose(out, 1.0)

    def test_clock_recover_needs_oversampling(self):
        with pytest.raises(SignalError):
            clock_recover(np.ones(20), 1)


class TestClockRecovery:

    def _phases(self, n_bits: int = 200, seed: int = 6) -> tuple[np.ndarray, np.ndarray]:
        bits = np.random.default_rng(seed).integers(0, 2, size=n_bits).astype(np.int8)
        pkt = gen_ble_packet(BlePacketSpec(bits, with_preamble=False))
        # Index 2k is the first sample of symbol k.
        return bits, quad_demod(pkt)[2:]

    def test_aligned_input_returns_every_second_phase(self):
        bits, ph = self._phases()
        out = clock_recover(ph, 2)
        np.testing.assert_array_equal(slice_bits(out[: bits.size]), bits)
        # The loop settles between the two samples of a symbol; early symbols stay close.
        assert np.max(np.abs(out[:50] - ph[::2][:50])) < 0.06

    def test_half_sample_offset(self):
        bits, ph = self._phases(seed=8)
        shifted = (ph[:-1] + ph[1:]) / 2.0
        out = clock_recover(shifted, 2)
        ideal = shifted[::2]
        np.testing.assert_array_equal(slice_bits(out[: bits.size]), bits)
        err = np.abs(out[32 : bits.size] - ideal[32 : bits.size])
        assert err.mean() <= 0.05 * np.abs(ideal[32 : bits.size]).mean()

    def test_legacy_packet_at_30_db(self):
        bits = np.random.default_rng(9).integers(0, 2, size=120).astype(np.int8)
        pkt = gen_ble_packet(BlePacketSpec(bits))
        noisy = impair(pkt, ImpairmentSpec(snr_db=30.0, inherent_cfo=0.0, doppler=0.0, rng_seed=2))
        np.testing.assert_array_equal(decode_ble_packet(noisy, bits.size), bits)


class TestDetectWifiStart:

    def test_first_crossing(self):
        cfg = BleRxConfig()
        assert detect_wifi_start(np.array([0.0, 0.01, 0.5, 1.0, 0.0, 0.5]), cfg) == 2

    def test_crossing_at_zero(self):
        assert detect_wifi_start(np.array([0.5, 0.5]), BleRxConfig()) == 0

    def test_no_crossing(self):
        assert detect_wifi_start(np.full(10, 0.001), BleRxConfig()) is None
        assert detect_wifi_start(np.zeros(0), BleRxConfig()) is None


class TestSideChannel:

    def test_extract_silence(self):
        assert gfsk_extract(np.zeros(100, dtype=complex), BleRxConfig()) is None

    def test_extract_truncated(self):
        x = np.concatenate([np.zeros(20), np.ones(5)]).astype(complex)
        with pytest.raises(SignalError):
            gfsk_extract(x, BleRxConfig())

    def test_extract_window_size(self):
        o = gfsk_extract(_w2b_capture(-130e3), BleRxConfig())
        assert o is not None
        assert o.shape == (16,)
        assert set(np.unique(o)) <= {0, 1}

    def test_shift_biases_slicer(self):
        cfg = BleRxConfig()
        ones_neg = int(gfsk_extract(_w2b_capture(-130e3), cfg).sum())
        ones_pos = int(gfsk_extract(_w2b_capture(100e3), cfg).sum())
        # Two tones 1.25 MHz apart flip the envelope sign on most samples,
        # so the clean window reads 12 against 8 rather than 16 against 0.
        assert ones_neg >= 12
        assert ones_pos <= 8
        assert ones_neg > cfg.eta >= ones_pos

    def test_window_starts_on_the_stf(self):
        cfg = BleRxConfig()
        x = _w2b_capture(-130e3)
        start = detect_wifi_start(rssi(x, cfg.rssi_smoothing), cfg)
        # The frame begins 40 us into the capture and its STF lasts 8 us.
        stf_start = round(40e-6 * bp.BLE_SAMPLE_RATE)
        stf_end = stf_start + round(8e-6 * bp.BLE_SAMPLE_RATE)
        assert abs(start - stf_start) <= 2
        assert start + cfg.preamble_window <= stf_end + 2

    def test_bits_decode_end_to_end(self):
        cfg = BleRxConfig()
        assert gfsk_demap(gfsk_extract(_w2b_capture(-130e3), cfg), cfg, 3) == 0
        assert gfsk_demap(gfsk_extract(_w2b_capture(100e3), cfg), cfg, 3) == 1

    def test_demap_threshold(self):
        cfg = BleRxConfig()
        assert gfsk_demap(np.ones(16), cfg) == 0
        assert gfsk_demap(np.zeros(16), cfg) == 1
        eight = np.array([1] * 8 + [0] * 8)
        assert gfsk_demap(eight, cfg) == 1
        assert gfsk_demap(np.array([1] * 9 + [0] * 7), cfg) == 0

    def test_demap_per_channel_eta(self):
        cfg = BleRxConfig(eta_table={3: 12})
        ten = np.array([1] * 10 + [0] * 6)
        assert gfsk_demap(ten, cfg, 3) == 1
        assert gfsk_demap(ten, cfg, 5) == 0

    def test_demap_wrong_size(self):
        with pytest.raises(SignalError):
            gfsk_demap(np.ones(15), BleRxConfig())


class TestLegacyDecode:

    def _payload(self, n: int, seed: int) -> np.ndarray:
        return np.random.default_rng(seed).integers(0, 2, size=n).astype(np.int8)

    def test_clean_packet(self):
        bits = self._payload(120, 1)
        pkt = gen_ble_packet(BlePacketSpec(bits))
        np.testing.assert_array_equal(decode_ble_packet(pkt, bits.size), bits)

    def test_shifted_packet(self):
        bits = self._payload(120, 2)
        pkt = gen_ble_packet(BlePacketSpec(bits, artificial_shift=80e3))
        np.testing.assert_array_equal(decode_ble_packet(pkt, bits.size), bits)

    def test_short_capture_zero_pads(self):
        bits = self._payload(40, 3)
        pkt = gen_ble_packet(BlePacketSpec(bits))
        out = decode_ble_packet(pkt, 60)
        assert out.size == 60
        np.testing.assert_array_equal(out[:40], bits)


class TestDemodTrace:

    def test_trace_fields(self):
        trace = demod_trace(_w2b_capture(-130e3))
        assert trace.phi.size == trace.rssi.size - 1
        assert trace.slicer_bits.size == trace.phi.size
        assert trace.symbol_bits is not None
        # Noiseless silence before the frame stays exactly zero.
        assert trace.zero_samples.size > 0
        assert trace.zero_samples[0] == 0

    def test_export_csv(self, tmp_path):
        x = np.exp(1j * 0.5 * np.arange(6))
        trace = demod_trace(x)
        path = trace.export_csv(tmp_path / "trace.csv")
        with path.open(encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["n", "phi", "rssi", "o"]
        assert len(rows) == 6
        assert rows[1][0] == "1"
        assert float(rows[1][1]) == pytest.approx(0.5)
        assert rows[1][3] == "1"
