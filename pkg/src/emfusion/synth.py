"""Synthetic EMF dataset generator for desk-scale experiments.

Each channel is a strictly positive daily sinusoid whose amplitude is
boosted inside working hours, plus optional Gaussian noise and random
missingness:

    clean[t, j] = base_j * (1 + amp * sin(2*pi*tau_t + phase_j))
                         * (1 + boost * working_hour_t)

with tau_t the UTC fraction of day and base_j = base * (1 + j/2).
The generator emits its parameters alongside the data so tests can
recompute expectations exactly; with zero noise the values above are
reproduced bit for bit.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from datetime import datetime, timezone

import numpy as np

from . import rng
from .data.conditions import build_conditions
from .data.convert import ChannelSpec
from .data.frames import SeriesFrame
from .errors import InvalidInputError

__all__ = ["SynthSpec", "generate_synthetic", "write_synthetic"]

_SYNTH_STREAM = 11  # rng namespace tag


@dataclass(frozen=True)
class SynthSpec:
    channels: int = 4
    days: int = 14
    cadence_minutes: int = 60
    start: str = "2024-01-01T00:00:00"  # UTC
    base_level: float = 0.2             # V/m floor of the cleanest channel
    daily_amplitude: float = 0.5        # relative sinusoid swing, < 1
    working_hour_boost: float = 1.0     # multiplicative boost inside [09:00, 17:00)
    noise_level: float = 0.05           # Gaussian sigma relative to the channel base
    missing_rate: float = 0.0
    seed: int = 0
    tz: str = "Europe/Rome"

    def __post_init__(self):
        if self.channels < 1 or self.days < 1 or self.cadence_minutes < 1:
            raise InvalidInputError("channels, days and cadence must be positive")
        if not (0.0 <= self.daily_amplitude < 1.0):
            raise InvalidInputError("daily amplitude must be in [0, 1)")
        if self.working_hour_boost < 0 or self.noise_level < 0:
            raise InvalidInputError("boost and noise level must be non-negative")
        if not (0.0 <= self.missing_rate < 1.0):
            raise InvalidInputError("missing rate must be in [0, 1)")


def _start_seconds(spec: SynthSpec) -> int:
    dt = datetime.fromisoformat(spec.start)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def clean_values(spec: SynthSpec, timestamps: np.ndarray, working_hour: np.ndarray) -> np.ndarray:
    """The noise-free signal; doubles as the test oracle."""
    tau = (timestamps % 86400) / 86400.0
    out = np.zeros((timestamps.size, spec.channels))
    for j in range(spec.channels):
        base = spec.base_level * (1.0 + 0.5 * j)
        phase = 2.0 * math.pi * j / spec.channels
        daily = 1.0 + spec.daily_amplitude * np.sin(2.0 * math.pi * tau + phase)
        out[:, j] = base * daily * (1.0 + spec.working_hour_boost * working_hour)
    return out


def generate_synthetic(spec: SynthSpec):
    """Build (frame, condition features, spec dict).

    The frame keeps the true values everywhere; the mask marks which
    cells a downstream consumer may treat as observed.
    """
    steps_per_day = (24 * 60) // spec.cadence_minutes
    steps = spec.days * steps_per_day
    start = _start_seconds(spec)
    timestamps = start + np.arange(steps, dtype=np.int64) * spec.cadence_minutes * 60
    track = build_conditions(timestamps, "multi", tz=spec.tz)
    wh_track = build_conditions(timestamps, "working_hour", tz=spec.tz)
    working_hour = wh_track.features[:, 0]
    values = clean_values(spec, timestamps, working_hour)
    stream = rng.stream(spec.seed, _SYNTH_STREAM)
    if spec.noise_level > 0:
        bases = spec.base_level * (1.0 + 0.5 * np.arange(spec.channels))
        values = values + spec.noise_level * bases * stream.standard_normal(values.shape)
        values = np.maximum(values, 1e-9)
    if spec.missing_rate > 0:
        mask = (stream.random(values.shape) >= spec.missing_rate).astype(float)
    else:
        mask = np.ones_like(values)
    specs = tuple(
        ChannelSpec(900e6 + j * 1e7, 30.0 + j, frozenset({"synthetic"})) for j in range(spec.channels)
    )
    frame = SeriesFrame(timestamps, values, mask, specs)
    features = np.column_stack(
        [
            build_conditions(timestamps, "working_day", tz=spec.tz).features[:, 0],
            working_hour,
            track.features[:, 0],  # season
        ]
    )
    return frame, features, asdict(spec)


def write_synthetic(spec: SynthSpec, out_dir, stem: str = "synth"):
    """Write the dataset files; returns the field CSV path."""
    import os

    from .data.frames import write_field_csv

    frame, features, params = generate_synthetic(spec)
    os.makedirs(out_dir, exist_ok=True)
    data_path = os.path.join(out_dir, f"{stem}.csv")
    write_field_csv(frame, data_path)
    with open(os.path.join(out_dir, f"{stem}.channels.csv"), "w", encoding="utf-8") as fh:
        for s in frame.channel_specs:
            labels = ",".join(sorted(s.labels))
            fh.write(f"{s.frequency_hz / 1e6:g},{s.antenna_factor_db_per_m:g},{labels}\n")
    with open(os.path.join(out_dir, f"{stem}.conditions.csv"), "w", encoding="utf-8") as fh:
        fh.write("timestamp,working_day,working_hour,season\n")
        for i in range(len(frame)):
            wd, wh, season = features[i]
            fh.write(f"{int(frame.timestamps[i])},{int(wd)},{int(wh)},{int(season)}\n")
    with open(os.path.join(out_dir, f"{stem}.params.json"), "w", encoding="utf-8") as fh:
        json.dump(params, fh, indent=2, sort_keys=True)
    return data_path
