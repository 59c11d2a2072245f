"""Received-power to electric-field conversion and band aggregation.

A spectrum monitor reports narrow-band received power in dBm per
frequency channel.  Each channel has a calibration record (frequency
and antenna factor); converting power to field strength walks through
the antenna's effective aperture:

    lambda = c / f
    G      = (A_GC / (lambda * 10**(af/20)))**2
    A_e    = G * lambda**2 / (4*pi)
    E      = sqrt(10**((P_dBm - 30)/10) * Z0 / A_e)      [V/m]

Per-operator or per-technology exposure is the root-sum-square of the
member channels' fields.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import InvalidInputError

__all__ = [
    "ChannelSpec",
    "PhysicalConstants",
    "dbm_to_field",
    "aggregate_band",
    "read_channel_specs",
    "DBM_FLOOR",
]

# Readings below this are clamped before bulk conversion: far below any
# physical signal in this setting, and keeping them avoids denormal fields.
DBM_FLOOR = -150.0


@dataclass(frozen=True)
class ChannelSpec:
    """Calibration record for one monitored frequency channel."""

    frequency_hz: float
    antenna_factor_db_per_m: float
    labels: frozenset[str] = field(default_factory=frozenset)

    def __post_init__(self):
        if not (self.frequency_hz > 0):
            raise InvalidInputError(f"frequency must be positive, got {self.frequency_hz}")
        if not math.isfinite(self.antenna_factor_db_per_m):
            raise InvalidInputError("antenna factor must be finite")
        if not self.labels:
            raise InvalidInputError("channel needs at least one band label")
        object.__setattr__(self, "labels", frozenset(self.labels))


@dataclass(frozen=True)
class PhysicalConstants:
    """Free-space and instrument calibration constants."""

    wave_impedance_ohm: float = 376.73
    antenna_gain_calibration: float = 9.73
    speed_of_light_m_s: float = 299792458.0

    def __post_init__(self):
        for name in ("wave_impedance_ohm", "antenna_gain_calibration", "speed_of_light_m_s"):
            if not (getattr(self, name) > 0):
                raise InvalidInputError(f"{name} must be strictly positive")


def dbm_to_field(p_dbm: float, spec: ChannelSpec, consts: PhysicalConstants = PhysicalConstants()) -> float:
    """Convert a received-power reading (dBm) to field strength (V/m)."""
    if not math.isfinite(p_dbm):
        raise InvalidInputError(f"received power must be finite, got {p_dbm}")
    lam = consts.speed_of_light_m_s / spec.frequency_hz
    gain = (consts.antenna_gain_calibration / (lam * 10.0 ** (spec.antenna_factor_db_per_m / 20.0))) ** 2
    aperture = gain * lam**2 / (4.0 * math.pi)
    p_watt = 10.0 ** ((p_dbm - 30.0) / 10.0)
    return math.sqrt(p_watt * consts.wave_impedance_ohm / aperture)


def aggregate_band(fields) -> float:
    """Root-sum-square aggregate field of a set of channels (V/m)."""
    values = np.asarray(fields, dtype=float)
    if values.size == 0:
        raise InvalidInputError("cannot aggregate an empty set of channels")
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise InvalidInputError("channel fields must be finite and non-negative")
    return float(np.sqrt(np.sum(values**2)))


def read_channel_specs(path) -> list[ChannelSpec]:
    """Parse a channel-spec file.

    One record per line: ``<freq MHz>,<antenna factor dB/m>,<label>[,<label>...]``.
    Blank lines and ``#`` comments are skipped.
    """
    specs = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            parts = [p.strip() for p in line.split(",")]
            if len(parts) < 3:
                raise InvalidInputError(f"{path}:{lineno}: expected freq,antenna_factor,label[,...]")
            try:
                freq_mhz = float(parts[0])
                af = float(parts[1])
            except ValueError as exc:
                raise InvalidInputError(f"{path}:{lineno}: {exc}") from exc
            specs.append(ChannelSpec(freq_mhz * 1e6, af, frozenset(p for p in parts[2:] if p)))
    if not specs:
        raise InvalidInputError(f"{path}: no channel records found")
    return specs
