"""2.4 GHz band plan shared by the Wi-Fi and BLE sides.

Holds the radio constants (sample rates, OFDM numerology, GFSK
parameters) and the frequency geometry that relates a Wi-Fi channel to
the BLE data channels it covers.
"""

from __future__ import annotations

from dopplerfi.errors import ChannelError

# ---------------------------------------------------------------------------
# Radio constants
# ---------------------------------------------------------------------------

WIFI_SAMPLE_RATE = 20e6
BLE_SAMPLE_RATE = 2e6
DECIMATION = int(WIFI_SAMPLE_RATE // BLE_SAMPLE_RATE)

FFT_SIZE = 64
CP_LEN = 16
SUBCARRIER_SPACING = WIFI_SAMPLE_RATE / FFT_SIZE   # 312.5 kHz
USED_SUBCARRIERS = tuple(k for k in range(-26, 27) if k != 0)
STF_SUBCARRIERS = tuple(k for k in range(-24, 25, 4) if k != 0)
STF_PERIOD = 16
STF_REPEATS = 10
LTF_GUARD = 32

BLE_SYMBOL_RATE = 1e6
BLE_SPS = int(BLE_SAMPLE_RATE // BLE_SYMBOL_RATE)
BLE_DEVIATION = 250e3
BLE_BT = 0.5
BLE_HALF_BANDWIDTH = 1e6
BLE_NUM_CHANNELS = 40
BLE_SLOT = 625e-6

WIFI_MAX_SHIFT = 625e3
BLE_MAX_SHIFT = 130e3
# Largest Wi-Fi shift with measured-negligible legacy cost.
LEGACY_SHIFT_TOLERANCE = 150e3
MIN_SHIFT_SEPARATION = SUBCARRIER_SPACING / 2

# Occupied half-width of a 20 MHz OFDM channel (subcarriers -26..26).
WIFI_OCCUPIED_HALF_SPAN = 26 * SUBCARRIER_SPACING

_WIFI_CHANNELS = {n: 2412e6 + 5e6 * (n - 1) for n in range(1, 14)}
_WIFI_CHANNELS[14] = 2484e6

# Floating-point slack for edge-of-passband comparisons.
_EDGE_EPS = 1.0


def wifi_center(channel: int) -> float:
    """Center frequency in Hz of a 2.4 GHz Wi-Fi channel (1-14)."""
    try:
        return _WIFI_CHANNELS[int(channel)]
    except (KeyError, TypeError, ValueError):
        raise ChannelError(f"Unknown 2.4 GHz Wi-Fi channel {channel!r}") from None


def ble_center(channel: int) -> float:
    """Center frequency in Hz of BLE data channel *channel* (0-39)."""
    if not 0 <= int(channel) < BLE_NUM_CHANNELS:
        raise ChannelError(f"BLE channel must be within 0..39, got {channel!r}")
    return 2404e6 + 2e6 * int(channel)


def relative_offset(wifi_channel: int, ble_channel: int) -> float:
    """BLE channel center minus Wi-Fi channel center, in Hz."""
    return ble_center(ble_channel) - wifi_center(wifi_channel)


def nominal_index(wifi_channel: int, ble_channel: int) -> float:
    """Real-valued subcarrier position of the BLE carrier inside the Wi-Fi channel."""
    return relative_offset(wifi_channel, ble_channel) / SUBCARRIER_SPACING


def geometric_overlap(wifi_channel: int) -> list[int]:
    """BLE channels whose 2 MHz span intersects the occupied Wi-Fi span."""
    center = wifi_center(wifi_channel)
    out = []
    for ch in range(BLE_NUM_CHANNELS):
        rel = ble_center(ch) - center
        if abs(rel) - BLE_HALF_BANDWIDTH < WIFI_OCCUPIED_HALF_SPAN:
            out.append(ch)
    return out


def stf_inband_subcarriers(wifi_channel: int, ble_channel: int) -> list[int]:
    """Non-zero STF subcarriers that fall inside the BLE channel's +-1 MHz passband."""
    rel = relative_offset(wifi_channel, ble_channel)
    return [
        k for k in STF_SUBCARRIERS
        if abs(k * SUBCARRIER_SPACING - rel) <= BLE_HALF_BANDWIDTH + _EDGE_EPS
    ]


def stf_centroid(wifi_channel: int, ble_channel: int) -> float:
    """Mean frequency of the in-band STF tones, relative to the BLE channel center.

    Returns ``0.0`` for channels with no in-band STF tone.
    """
    tones = stf_inband_subcarriers(wifi_channel, ble_channel)
    if not tones:
        return 0.0
    rel = relative_offset(wifi_channel, ble_channel)
    return sum(k * SUBCARRIER_SPACING - rel for k in tones) / len(tones)
