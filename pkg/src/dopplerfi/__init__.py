"""dopplerfi - artificial Doppler side-channel simulator for Wi-Fi and BLE."""

__version__ = "0.1.0"
