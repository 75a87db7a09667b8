"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`DopplerFiError`, which is itself a :class:`ValueError` so that
callers catching ``ValueError`` on bad input keep working.
"""

from __future__ import annotations


class DopplerFiError(ValueError):
    """Base class for all dopplerfi errors."""


class ShiftOutOfRangeError(DopplerFiError):
    """Artificial frequency shift above the receiver's recoverable range."""


class PayloadTooLongError(DopplerFiError):
    """Payload does not fit one Wi-Fi frame or one BLE slot."""


class ChannelError(DopplerFiError):
    """Unknown channel, or a channel outside the simulated band."""


class SignalError(DopplerFiError):
    """Sample buffer too short or otherwise unusable for an operation."""


class CodecError(DopplerFiError):
    """Side-channel framing or Hamming coding misuse."""


class ConfigError(DopplerFiError):
    """Malformed or inconsistent experiment configuration."""
