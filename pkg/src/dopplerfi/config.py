"""INI scenario files.

Example::

    [experiment]
    preset = w2b
    trials = 10
    seed = 3

    [impairments]
    snr_db = 15

    [sweep]
    axis = shift_hz
    values = 20e3, 60e3, 100e3, 130e3

Every section and key is optional; unknown ones are rejected. Values
start from the named preset (``w2b`` by default).
"""

from __future__ import annotations

import configparser
import logging
import math
from pathlib import Path
from typing import Any, Callable, Optional

from dopplerfi.codec import Code
from dopplerfi.errors import ConfigError
from dopplerfi.presets import Direction, ExperimentConfig, PresetManager
from dopplerfi.waveforms import Mcs

logger = logging.getLogger(__name__)


# ---------------------------------------------------------------------------
# Value converters
# ---------------------------------------------------------------------------

def _float(text: str) -> float:
    text = text.strip().lower()
    if text in ("inf", "+inf", "infinity"):
        return math.inf
    return float(text)


def _opt_float(text: str) -> Optional[float]:
    return None if not text.strip() or text.strip().lower() == "none" else _float(text)


def _opt_int(text: str) -> Optional[int]:
    return None if not text.strip() or text.strip().lower() == "none" else int(text)


def _int(text: str) -> int:
    return int(text.strip())


def _bool(text: str) -> bool:
    value = text.strip().lower()
    if value in ("1", "yes", "true", "on"):
        return True
    if value in ("0", "no", "false", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _str(text: str) -> str:
    return text.strip().lower()


def _int_list(text: str) -> list[int]:
    return [int(x) for x in _split(text)]


def _float_list(text: str) -> list[float]:
    return [_float(x) for x in _split(text)]


def _split(text: str) -> list[str]:
    return [x.strip() for x in text.replace("\n", ",").split(",") if x.strip()]


def _wifi_table(text: str) -> dict[int, tuple[float, float]]:
    table = {}
    for entry in _split(text):
        parts = entry.split(":")
        if len(parts) != 3:
            raise ValueError(f"wifi_table entry {entry!r} is not chan:bit0:bit1")
        table[int(parts[0])] = (_float(parts[1]), _float(parts[2]))
    return table


def _eta_table(text: str) -> dict[int, int]:
    table = {}
    for entry in _split(text):
        chan, _, eta = entry.partition(":")
        if not eta:
            raise ValueError(f"eta_table entry {entry!r} is not chan:eta")
        table[int(chan)] = int(eta)
    return table


# section -> key -> (attribute path, converter)
_SCHEMA: dict[str, dict[str, tuple[str, Callable[[str], Any]]]] = {
    "experiment": {
        "direction": ("direction", lambda s: Direction(_str(s))),
        "trials": ("trials", _int),
        "seed": ("seed", _int),
        "payload_bits": ("payload_bits", _int),
        "code": ("code", Code.parse),
        "duty_cycle": ("duty_cycle", _float),
        "max_opportunities": ("max_opportunities", _opt_int),
        "packets": ("packets", _int),
    },
    "wifi": {
        "channel": ("wifi.channel", _int),
        "mcs": ("wifi.mcs", lambda s: Mcs(_str(s))),
        "airtime_us": ("wifi.airtime_us", _float),
        "gap_us": ("wifi.gap_us", _float),
        "legacy_payload_bits": ("wifi.legacy_payload_bits", _int),
    },
    "ble": {
        "channels": ("ble.channels", _int_list),
        "hop_seed": ("ble.hop_seed", _opt_int),
        "payload": ("ble.payload", _str),
        "payload_bits": ("ble.payload_bits", _int),
        "gain_db": ("ble.gain_db", _float),
    },
    "shifts": {
        "ble_bit0_hz": ("shifts.ble_bit0_hz", _float),
        "ble_bit1_hz": ("shifts.ble_bit1_hz", _float),
        "wifi_bit0_hz": ("shifts.wifi_bit0_hz", _float),
        "wifi_bit1_hz": ("shifts.wifi_bit1_hz", _float),
        "wifi_table": ("shifts.wifi_table", _wifi_table),
        "anchored": ("shifts.anchored", _bool),
        "legacy_hz": ("shifts.legacy_hz", _float),
    },
    "impairments": {
        "snr_db": ("impairments.snr_db", _float),
        "inherent_cfo_hz": ("impairments.inherent_cfo_hz", _opt_float),
        "doppler_hz": ("impairments.doppler_hz", _float),
        "speed_mps": ("impairments.speed_mps", _opt_float),
        "gain_db": ("impairments.gain_db", _float),
    },
    "receiver": {
        "rssi_threshold": ("receiver.rssi_threshold", _float),
        "eta": ("receiver.eta", _int),
        "eta_table": ("receiver.eta_table", _eta_table),
        "rssi_smoothing": ("receiver.rssi_smoothing", _int),
        "csi_sigma": ("receiver.csi_sigma", _float),
        "csi_robust": ("receiver.csi_robust", _bool),
        "csi_min_diff": ("receiver.csi_min_diff", _float),
        "csi_peak_metric": ("receiver.csi_peak_metric", _str),
        "calibrate": ("receiver.calibrate", _bool),
    },
    "link": {
        "tx_power_dbm": ("link.tx_power_dbm", _opt_float),
        "distance_m": ("link.distance_m", _opt_float),
        "noise_floor_dbm": ("link.noise_floor_dbm", _float),
        "reference_loss_db": ("link.reference_loss_db", _float),
        "pathloss_exponent": ("link.pathloss_exponent", _float),
        "reference_distance_m": ("link.reference_distance_m", _float),
    },
    "sweep": {
        "axis": ("sweep.axis", _str),
        "values": ("sweep.values", _float_list),
    },
}


def _assign(cfg: ExperimentConfig, path: str, value: Any) -> None:
    target = cfg
    *parents, leaf = path.split(".")
    for name in parents:
        target = getattr(target, name)
    setattr(target, leaf, value)


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------

def parse_config(text: str, *, source: str = "<string>", base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """Parse INI *text* into a validated :class:`ExperimentConfig`."""
    parser = configparser.ConfigParser(interpolation=None, default_section="__defaults__")
    try:
        parser.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    unknown = [s for s in parser.sections() if s not in _SCHEMA]
    if unknown:
        raise ConfigError(f"{source}: unknown section(s): {', '.join(unknown)}")

    preset = "w2b"
    if parser.has_option("experiment", "preset"):
        preset = parser.get("experiment", "preset").strip()
    cfg = base if base is not None else PresetManager(preset).config
    if source != "<string>":
        cfg.name = Path(source).stem

    for section in parser.sections():
        schema = _SCHEMA[section]
        for key, raw in parser.items(section):
            if section == "experiment" and key == "preset":
                continue
            if key not in schema:
                raise ConfigError(f"{source}: unknown key {key!r} in [{section}]")
            path, convert = schema[key]
            try:
                value = convert(raw)
            except (ValueError, TypeError) as exc:
                raise ConfigError(f"{source}: [{section}] {key} = {raw!r}: {exc}") from exc
            _assign(cfg, path, value)

    if cfg.sweep.axis in ("", "none"):
        cfg.sweep.axis = None
    logger.debug("Loaded %s (preset %s)", source, preset)
    return cfg.validate()


def load_config(path: str | Path, *, encoding: str = "utf-8") -> ExperimentConfig:
    """Read and parse an INI scenario file."""
    path = Path(path)
    try:
        text = path.read_text(encoding=encoding)
    except OSError as exc:
        raise ConfigError(f"Cannot read config {path}: {exc}") from exc
    return parse_config(text, source=str(path))


def dump_config(cfg: ExperimentConfig) -> str:
    """Render *cfg* back to INI text that :func:`parse_config` accepts."""
    lines = []
    for section, schema in _SCHEMA.items():
        lines.append(f"[{section}]")
        for key, (path, _) in schema.items():
            value = cfg
            for name in path.split("."):
                value = getattr(value, name)
            lines.append(f"{key} = {_format(key, value)}")
        lines.append("")
    return "\n".join(lines)


def _format(key: str, value: Any) -> str:
    if value is None:
        return ""
    if hasattr(value, "value"):
        return str(value.value)
    if key == "wifi_table":
        return ", ".join(f"{ch}:{a!r}:{b!r}" for ch, (a, b) in sorted(value.items()))
    if key == "eta_table":
        return ", ".join(f"{ch}:{eta}" for ch, eta in sorted(value.items()))
    if isinstance(value, list):
        return ", ".join(repr(v) if isinstance(v, float) else str(v) for v in value)
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return "inf" if math.isinf(value) else repr(value)
    return str(value)
