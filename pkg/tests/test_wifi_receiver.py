"""Tests for the Wi-Fi receive chain."""

from __future__ import annotations

import csv

import numpy as np
import pytest

from dopplerfi import bandplan as bp
from dopplerfi.errors import SignalError
from dopplerfi.medium import BandTimeline, ImpairmentSpec, impair, render
from dopplerfi.waveforms import (
    BlePacketSpec,
    IqBuffer,
    Mcs,
    WifiFrameSpec,
    apply_freq_shift,
    gen_ble_packet,
    gen_wifi_frame,
)
from dopplerfi.wifi_receiver import (
    CsiHit,
    CsiVector,
    WifiRxConfig,
    compensate,
    csi_demap,
    csi_diff,
    csi_extract,
    decode_wifi_payload,
    detect_and_sync,
    estimate_cfo,
    estimate_csi,
    export_csi_csv,
    receive_frame,
    stf_metric,
)

FRAME_START = 800


def _bits(n: int, seed: int) -> np.ndarray:
    return np.random.default_rng(seed).integers(0, 2, size=n).astype(np.int8)


def _band(frame: IqBuffer, *, snr_db: float = float("inf"), cfo: float = 0.0, seed: int = 0) -> IqBuffer:
    tl = BandTimeline(band_center=frame.center_freq, duration=140e-6)
    tl.place(frame, start_time=FRAME_START / bp.WIFI_SAMPLE_RATE)
    spec = ImpairmentSpec(snr_db=snr_db, inherent_cfo=cfo, doppler=0.0, rng_seed=seed, reference_power=1.0)
    return impair(render(tl), spec)


def _vector(bump_k: int | None = None, bump: complex = 3.0) -> CsiVector:
    csi = np.ones(len(bp.USED_SUBCARRIERS), dtype=complex)
    if bump_k is not None:
        csi[bp.USED_SUBCARRIERS.index(bump_k)] = bump
    return CsiVector(csi)


def _hit(peak: int) -> CsiHit:
    v = _vector(peak)
    return CsiHit(v, csi_diff(v), peak)


@pytest.fixture
def frame():
    return gen_wifi_frame(WifiFrameSpec(_bits(400, 7), channel=1))


class TestRxConfig:

    def test_rejects_unknown_peak_metric(self):
        with pytest.raises(ValueError):
            WifiRxConfig(csi_peak_metric="phase")

    def test_rejects_nonpositive_sigma(self):
        with pytest.raises(ValueError):
            WifiRxConfig(csi_sigma=0.0)

    def test_derive(self):
        cfg = WifiRxConfig().derive(csi_robust=True, unknown=1)
        assert cfg.csi_robust is True
        assert cfg.csi_sigma == 3.0


class TestDetection:

    def test_stf_plateau(self, frame):
        metric = stf_metric(frame)
        assert metric.size == len(frame) - 31
        assert np.all(metric[:129] > 0.99)

    def test_detect_clean(self, frame):
        assert detect_and_sync(_band(frame)) == FRAME_START

    def test_detect_with_noise_and_cfo(self, frame):
        assert detect_and_sync(_band(frame, snr_db=20.0, cfo=350.0, seed=3)) == FRAME_START

    def test_detect_late_frame_at_10_db(self, frame):
        tl = BandTimeline(band_center=frame.center_freq, duration=320e-6)
        tl.place(frame, start_time=4000 / bp.WIFI_SAMPLE_RATE)
        spec = ImpairmentSpec(snr_db=10.0, inherent_cfo=0.0, doppler=0.0, rng_seed=8, reference_power=1.0)
        start = detect_and_sync(impair(render(tl), spec))
        assert start is not None
        assert abs(start - 4000) <= 4

    def test_detect_silence(self):
        assert detect_and_sync(np.zeros(2800, dtype=complex)) is None

    def test_detect_noise_only(self):
        noise = np.random.default_rng(1).standard_normal(2800) * (1 + 1j)
        assert detect_and_sync(noise) is None

    def test_detect_truncated_preamble(self, frame):
        assert detect_and_sync(frame.samples[:250]) is None

    def test_detect_too_short(self):
        assert detect_and_sync(np.ones(10, dtype=complex)) is None


class TestCfo:

    @pytest.mark.parametrize("offset", [300.0, -45e3, 200e3])
    def test_estimate(self, frame, offset):
        shifted = apply_freq_shift(frame, offset)
        assert estimate_cfo(shifted, 0) == pytest.approx(offset, abs=1.0)

    def test_estimate_noisy(self, frame):
        band = _band(frame, snr_db=25.0, cfo=-280.0, seed=5)
        assert estimate_cfo(band, FRAME_START) == pytest.approx(-280.0, abs=1500.0)

    def test_estimate_monte_carlo_at_20_db(self, frame):
        shifted = apply_freq_shift(frame, -130e3)
        estimates = [estimate_cfo(_band(shifted, snr_db=20.0, seed=s), FRAME_START) for s in range(100)]
        assert np.mean(estimates) == pytest.approx(-130e3, abs=500.0)

    def test_truncated_frame(self, frame):
        with pytest.raises(SignalError):
            estimate_cfo(frame.samples[:300], 0)

    def test_compensate_undoes_rotation(self, frame):
        back = compensate(apply_freq_shift(frame, 1e3), 1e3)
        np.testing.assert_allclose(back.samples, frame.samples, atol=1e-9)


class TestCsi:

    def test_flat_channel(self, frame):
        v = estimate_csi(frame, 0)
        np.testing.assert_allclose(v.csi, 1.0, atol=1e-9)
        assert v.packet_time == 0.0

    def test_packet_time_from_start(self, frame):
        v = estimate_csi(_band(frame), FRAME_START)
        assert v.packet_time == pytest.approx(40e-6)
        np.testing.assert_allclose(v.amplitude, 1.0, atol=1e-9)

    def test_gain_scales_csi(self, frame):
        v = estimate_csi(frame.with_samples(0.5j * frame.samples), 0)
        np.testing.assert_allclose(v.csi, 0.5j, atol=1e-9)

    def test_missing_ltf(self, frame):
        with pytest.raises(SignalError):
            estimate_csi(frame.samples[:250], 0)

    def test_vector_shape(self):
        with pytest.raises(SignalError):
            CsiVector(np.ones(64, dtype=complex))
        v = _vector(-7, 2.0)
        assert v.at(-7) == 2.0
        assert v.at(1) == 1.0

    def test_tone_disturbs_its_subcarrier(self, frame):
        n = np.arange(len(frame))
        tone = 0.5 * np.exp(2j * np.pi * (-7 * bp.SUBCARRIER_SPACING) * n / bp.WIFI_SAMPLE_RATE)
        v = estimate_csi(frame.with_samples(frame.samples + tone), 0)
        amp = v.amplitude
        k7 = bp.USED_SUBCARRIERS.index(-7)
        assert abs(amp[k7] - 1.0) > 1.0
        np.testing.assert_allclose(np.delete(amp, k7), 1.0, atol=1e-9)


class TestCsiSideChannel:

    def test_diff_zeroes_dc_pair(self):
        csi = np.ones(52, dtype=complex)
        csi[26:] = 2.0     # k >= 1
        d = csi_diff(CsiVector(csi))
        assert d.shape == (51,)
        assert not d.any()

    def test_flat_vector_is_not_a_hit(self):
        assert csi_extract([_vector()]) == []

    @pytest.mark.parametrize("metric", ["complex", "amplitude"])
    def test_bump_is_a_hit(self, metric):
        cfg = WifiRxConfig(csi_peak_metric=metric)
        hits = csi_extract([_vector(), _vector(-7), _vector(19, 0.1)], cfg)
        assert [h.peak_index for h in hits] == [-7, 19]

    def test_robust_threshold(self):
        hits = csi_extract([_vector(-7)], WifiRxConfig(csi_robust=True))
        assert len(hits) == 1

    def test_min_diff_floor(self):
        # A 10% bump stands out statistically but stays below the floor.
        assert csi_extract([_vector(-7, 1.1)]) == []
        assert len(csi_extract([_vector(-7, 1.1)], WifiRxConfig(csi_min_diff=0.05))) == 1

    def test_demap_sides(self):
        assert csi_demap([_hit(-7)], nominal_index=-6.4) == 0
        assert csi_demap([_hit(-6)], nominal_index=-6.4) == 1
        assert csi_demap([_hit(-7), _hit(-6), _hit(-6)], nominal_index=-6.4) == 1

    def test_demap_tie_and_empty(self):
        assert csi_demap([_hit(-7), _hit(-6)], nominal_index=-6.5) is None
        assert csi_demap([], nominal_index=-6.4) is None

    def test_demap_nominal_from_config(self):
        assert csi_demap([_hit(7)], WifiRxConfig(nominal_index=6.4)) == 1
        with pytest.raises(ValueError):
            csi_demap([_hit(7)])

    def test_export_csv(self, tmp_path):
        path = export_csi_csv([_vector(-7), CsiVector(np.ones(52, dtype=complex), 1e-3)], tmp_path / "csi.csv")
        with path.open(encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        assert rows[0] == ["time", "k", "amplitude"]
        assert len(rows) == 1 + 2 * 52
        assert rows[1][1] == "-26"
        assert rows[20] == ["0.000000000", "-7", "3.000000"]
        assert rows[53][0] == "0.001000000"


class TestCsiOverlap:

    def test_ble_packet_hits_three_consecutive_frames(self, frame):
        tl = BandTimeline(band_center=frame.center_freq, duration=bp.BLE_SLOT)
        for i in range(4):
            tl.place(frame, start_time=40e-6 + i * 140e-6)
        packet = gen_ble_packet(BlePacketSpec(np.arange(368) % 2, ble_channel=3, artificial_shift=-80e3))
        tl.place(packet, start_time=0.0, gain_db=-10.0)
        band = render(tl)
        width = int(140e-6 * bp.WIFI_SAMPLE_RATE)
        vectors = []
        for i in range(4):
            rx = receive_frame(band.with_samples(band.samples[i * width:(i + 1) * width]), time_origin=i * 140e-6)
            assert rx is not None
            vectors.append(rx.csi)
        hits = csi_extract(vectors)
        # The 376 us packet covers the LTFs of the first three frames only.
        assert [round(h.vector.packet_time * 1e6) for h in hits] == [40, 180, 320]


class TestLegacyPayload:

    def test_clean_decode(self, frame):
        decoded = decode_wifi_payload(frame, 0, 400)
        np.testing.assert_array_equal(decoded, _bits(400, 7))

    def test_qpsk_decode(self):
        bits = _bits(900, 8)
        frame = gen_wifi_frame(WifiFrameSpec(bits, Mcs.QPSK))
        np.testing.assert_array_equal(decode_wifi_payload(frame, 0, 900, mcs=Mcs.QPSK), bits)

    def test_noisy_decode_after_sync(self, frame):
        band = _band(frame, snr_db=25.0, cfo=320.0, seed=9)
        start = detect_and_sync(band)
        comp = compensate(band, estimate_cfo(band, start))
        decoded = decode_wifi_payload(comp, start, 400)
        np.testing.assert_array_equal(decoded, _bits(400, 7))

    def test_truncated_payload(self, frame):
        out = decode_wifi_payload(frame.samples[:400], 0, 50)
        assert out.shape == (50,)


class TestReceiveFrame:

    def test_full_chain(self, frame):
        rx = receive_frame(_band(frame, cfo=150.0), time_origin=1e-3)
        assert rx is not None
        assert rx.start == FRAME_START
        assert rx.cfo == pytest.approx(150.0, abs=1.0)
        assert rx.csi.packet_time == pytest.approx(1e-3 + 40e-6)
        np.testing.assert_allclose(rx.csi.amplitude, 1.0, atol=1e-3)

    def test_nothing_to_receive(self):
        silence = IqBuffer(np.zeros(2800), bp.WIFI_SAMPLE_RATE, bp.wifi_center(1))
        assert receive_frame(silence) is None
