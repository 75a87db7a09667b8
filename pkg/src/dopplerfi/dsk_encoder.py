"""Doppler Shift Keying encoder.

Follows the BLE hop sequence and releases one buffered side-channel bit
per slot that lands on a channel overlapping the target Wi-Fi channel;
every other slot carries an unshifted legacy packet.

Usage::

    enc = DskEncoder(overlap_set(1))
    enc.submit([1, 0, 1, 1])
    for ch in HopPlan.uniform(64, seed=7).sequence:
        bit = enc.step(ch)
"""

from __future__ import annotations

import csv
import logging
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from dopplerfi import bandplan as bp
from dopplerfi.errors import ChannelError, ShiftOutOfRangeError
from dopplerfi.medium import trial_rng

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Channel geometry
# ---------------------------------------------------------------------------

def overlap_set(wifi_channel: int) -> frozenset[int]:
    """BLE data channels inside the Wi-Fi channel that see >= 1 STF tone."""
    return frozenset(
        ch for ch in bp.geometric_overlap(wifi_channel)
        if bp.stf_inband_subcarriers(wifi_channel, ch)
    )


def w2b_channels(wifi_channel: int) -> frozenset[int]:
    """Overlapping channels whose slicer bias follows the shift sign.

    Needs exactly two in-band STF tones; with a single tone the
    discriminator output has the same polarity for both shifts.
    """
    return frozenset(
        ch for ch in overlap_set(wifi_channel)
        if len(bp.stf_inband_subcarriers(wifi_channel, ch)) == 2
    )


def b2w_channels(wifi_channel: int, shift_map: Optional[ShiftMap] = None) -> frozenset[int]:
    """Overlapping channels where the two BLE shifts hit distinct subcarriers.

    The shifted carriers must round to used subcarriers on opposite
    sides of the nominal index.
    """
    shift_map = shift_map or ShiftMap()
    out = set()
    for ch in overlap_set(wifi_channel):
        nominal = bp.nominal_index(wifi_channel, ch)
        k0 = int(np.rint(nominal + shift_map.ble_bit0 / bp.SUBCARRIER_SPACING))
        k1 = int(np.rint(nominal + shift_map.ble_bit1 / bp.SUBCARRIER_SPACING))
        if k0 in bp.USED_SUBCARRIERS and k1 in bp.USED_SUBCARRIERS and k0 < nominal < k1:
            out.add(ch)
    return frozenset(out)


# ---------------------------------------------------------------------------
# Hop plan
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HopPlan:
    """BLE channel per 625 us slot."""

    sequence: tuple[int, ...]
    slot_duration: float = bp.BLE_SLOT

    @classmethod
    def uniform(cls, n_slots: int, seed: int, trial: int = 0) -> HopPlan:
        """Uniform, independent choice over the 40 data channels."""
        rng = trial_rng(seed, trial, "hop")
        seq = rng.integers(0, bp.BLE_NUM_CHANNELS, size=n_slots)
        return cls(tuple(int(c) for c in seq))

    @classmethod
    def cycle(cls, channels: Sequence[int], n_slots: int) -> HopPlan:
        """Repeat *channels* in order for *n_slots* slots."""
        if not channels:
            raise ChannelError("channel list for a hop plan is empty")
        for ch in channels:
            bp.ble_center(ch)
        return cls(tuple(int(channels[i % len(channels)]) for i in range(n_slots)))

    def __len__(self) -> int:
        return len(self.sequence)


# ---------------------------------------------------------------------------
# Shift map
# ---------------------------------------------------------------------------

# STF tone centroid seen by a BLE channel centered 2 MHz below the Wi-Fi
# center; the default Wi-Fi pair is tuned for this geometry.
_REFERENCE_CENTROID = 125e3


@dataclass(frozen=True)
class ShiftMap:
    """Bit-to-shift mapping for both directions.

    ``wifi_table`` overrides the Wi-Fi pair per BLE receive channel.
    """

    ble_bit0: float = -80e3
    ble_bit1: float = 80e3
    wifi_bit0: float = -130e3
    wifi_bit1: float = 100e3
    wifi_table: dict[int, tuple[float, float]] = field(default_factory=dict)
    min_separation: float = bp.MIN_SHIFT_SEPARATION

    def __post_init__(self) -> None:
        self._check_pair(self.ble_bit0, self.ble_bit1, bp.BLE_MAX_SHIFT, "BLE")
        self._check_pair(self.wifi_bit0, self.wifi_bit1, bp.WIFI_MAX_SHIFT, "Wi-Fi")
        for ch, (s0, s1) in self.wifi_table.items():
            self._check_pair(s0, s1, bp.WIFI_MAX_SHIFT, f"Wi-Fi (BLE channel {ch})")

    def _check_pair(self, s0: float, s1: float, cap: float, what: str) -> None:
        if max(abs(s0), abs(s1)) > cap:
            raise ShiftOutOfRangeError(f"{what} shift pair ({s0:+.0f}, {s1:+.0f}) Hz exceeds {cap:.0f} Hz")
        if abs(s1 - s0) < self.min_separation:
            raise ShiftOutOfRangeError(
                f"{what} shift pair ({s0:+.0f}, {s1:+.0f}) Hz is closer than {self.min_separation:.0f} Hz"
            )

    def wifi_pair(self, ble_channel: int) -> tuple[float, float]:
        return self.wifi_table.get(ble_channel, (self.wifi_bit0, self.wifi_bit1))

    def derive(self, **overrides) -> ShiftMap:
        """Return a copy with selected fields overridden."""
        return replace(self, **{k: v for k, v in overrides.items() if hasattr(self, k)})

    @classmethod
    def anchored(
        cls,
        wifi_channel: int,
        *,
        budget: float = bp.LEGACY_SHIFT_TOLERANCE,
        **overrides,
    ) -> ShiftMap:
        """Per-channel Wi-Fi pairs placed relative to each channel's STF centroid.

        Every W2B channel gets the default pair moved by the difference
        between its STF tone centroid and the reference geometry, as long
        as both moved shifts stay within *budget*. Other channels keep the
        default pair.
        """
        base = cls(**overrides)
        table = {}
        for ch in sorted(w2b_channels(wifi_channel)):
            move = _REFERENCE_CENTROID - bp.stf_centroid(wifi_channel, ch)
            pair = (base.wifi_bit0 + move, base.wifi_bit1 + move)
            if max(abs(s) for s in pair) > budget:
                logger.debug("BLE channel %d: anchored pair (%+.0f, %+.0f) Hz over budget", ch, *pair)
                continue
            table[ch] = pair
        table.update(base.wifi_table)
        return base.derive(wifi_table=table)


def shift_for_bit(bit: int, side: str, channel: int, shift_map: ShiftMap) -> float:
    """Signed artificial shift in Hz carrying *bit* on *side* ("ble" or "wifi")."""
    bit = int(bit)
    if bit not in (0, 1):
        raise ValueError(f"bit must be 0 or 1, got {bit!r}")
    if side == "ble":
        return shift_map.ble_bit1 if bit else shift_map.ble_bit0
    if side == "wifi":
        s0, s1 = shift_map.wifi_pair(channel)
        return s1 if bit else s0
    raise ValueError(f"side must be 'ble' or 'wifi', got {side!r}")


# ---------------------------------------------------------------------------
# Encoder state
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DskState:
    """FIFO bit buffer, usable channel set and emission log.

    ``queued[cursor:]`` is the pending FIFO. The log is skipped when
    ``keep_log`` is false.
    """

    queued: tuple[int, ...] = ()
    overlap_set: frozenset[int] = frozenset()
    emitted_log: tuple[tuple[int, int, Optional[int]], ...] = ()
    cursor: int = 0
    slot: int = 0
    keep_log: bool = True

    @property
    def pending_bits(self) -> tuple[int, ...]:
        return self.queued[self.cursor:]

    def submit(self, bits: Iterable[int]) -> DskState:
        return replace(self, queued=self.pending_bits + tuple(int(b) for b in bits), cursor=0)


def dsk_step(state: DskState, slot_channel: int) -> tuple[Optional[int], DskState]:
    """Advance one slot: pop the oldest bit iff the slot channel overlaps."""
    decision: Optional[int] = None
    cursor = state.cursor
    if slot_channel in state.overlap_set and cursor < len(state.queued):
        decision = state.queued[cursor]
        cursor += 1
    log = state.emitted_log
    if state.keep_log:
        log = log + ((state.slot, int(slot_channel), decision),)
    return decision, replace(state, cursor=cursor, slot=state.slot + 1, emitted_log=log)


class DskEncoder:
    """Single-owner encoder applying the :func:`dsk_step` rule in place.

    Bits wait in a deque; the slot log is only recorded with
    ``keep_log=True``.
    """

    def __init__(self, usable: Iterable[int], *, keep_log: bool = True) -> None:
        self.usable = frozenset(usable)
        self.keep_log = keep_log
        self._queue: deque[int] = deque()
        self._log: list[tuple[int, int, Optional[int]]] = []
        self._slot = 0

    @property
    def state(self) -> DskState:
        """Immutable snapshot of the encoder."""
        return DskState(
            queued=tuple(self._queue),
            overlap_set=self.usable,
            emitted_log=tuple(self._log),
            slot=self._slot,
            keep_log=self.keep_log,
        )

    @property
    def pending(self) -> int:
        return len(self._queue)

    @property
    def slots(self) -> int:
        return self._slot

    def submit(self, bits: Iterable[int]) -> None:
        self._queue.extend(int(b) for b in bits)

    def step(self, slot_channel: int) -> Optional[int]:
        decision = None
        if slot_channel in self.usable and self._queue:
            decision = self._queue.popleft()
        if self.keep_log:
            self._log.append((self._slot, int(slot_channel), decision))
        self._slot += 1
        return decision

    def export_log(
        self,
        path: str | Path,
        *,
        side: str,
        shift_map: Optional[ShiftMap] = None,
    ) -> Path:
        """Write ``slot,channel,bit,shift_hz`` rows (empty bit for legacy slots)."""
        if not self.keep_log:
            raise ValueError("encoder was created with keep_log=False; no slot log to export")
        shift_map = shift_map or ShiftMap()
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(["slot", "channel", "bit", "shift_hz"])
            for slot, channel, bit in self._log:
                shift = 0.0 if bit is None else shift_for_bit(bit, side, channel, shift_map)
                writer.writerow([slot, channel, "" if bit is None else bit, f"{shift:.0f}"])
        logger.info("Wrote %d DSK log rows to %s", len(self._log), path)
        return path
