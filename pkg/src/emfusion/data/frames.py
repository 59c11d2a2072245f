"""Timestamped multichannel field series: container, CSV I/O, scaling.

The on-disk formats are deliberately plain:

* raw power CSV      — header ``timestamp,<freq MHz>,...``, ISO-8601
                       timestamps, cell values in dBm, empty cell = missing
* field CSV          — same shape with values in V/m, accompanied by a
                       parallel ``<name>.mask.csv`` of 0/1 observation flags
"""
from __future__ import annotations

import os
from dataclasses import dataclass, replace
from datetime import datetime, timezone

import numpy as np

from ..errors import InvalidInputError
from .convert import DBM_FLOOR, ChannelSpec, PhysicalConstants, aggregate_band, dbm_to_field

__all__ = [
    "SeriesFrame",
    "NormalizationRecord",
    "read_power_csv",
    "convert_power_frame",
    "write_field_csv",
    "read_field_csv",
    "mask_path_for",
    "normalize",
    "denormalize",
    "correlation_matrix",
]


@dataclass(frozen=True)
class SeriesFrame:
    """(steps x channels) matrix of field values with an observation mask."""

    timestamps: np.ndarray  # (steps,) int64 UTC seconds, strictly increasing
    values: np.ndarray      # (steps, channels) float
    mask: np.ndarray        # (steps, channels) 0/1, 1 = observed
    channel_specs: tuple[ChannelSpec, ...]
    units: str = "V/m"      # physical frames forbid negative observed values

    def __post_init__(self):
        ts = np.asarray(self.timestamps, dtype=np.int64)
        vals = np.asarray(self.values, dtype=float)
        msk = np.asarray(self.mask, dtype=float)
        if vals.ndim != 2 or msk.shape != vals.shape or ts.shape != (vals.shape[0],):
            raise InvalidInputError(
                f"shape mismatch: timestamps {ts.shape}, values {vals.shape}, mask {msk.shape}"
            )
        if len(self.channel_specs) != vals.shape[1]:
            raise InvalidInputError("one ChannelSpec per value column required")
        if ts.size > 1 and not np.all(np.diff(ts) > 0):
            raise InvalidInputError("timestamps must be strictly increasing")
        if not np.all(np.isin(msk, (0, 1))):
            raise InvalidInputError("mask must be binary")
        if self.units == "V/m" and np.any(vals[msk == 1] < 0):
            raise InvalidInputError("observed field values must be non-negative")
        object.__setattr__(self, "timestamps", ts)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "mask", msk)
        object.__setattr__(self, "channel_specs", tuple(self.channel_specs))

    def __len__(self) -> int:
        return self.values.shape[0]

    @property
    def n_channels(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class NormalizationRecord:
    """Per-channel affine scaling fitted on the training split."""

    offset: np.ndarray  # (channels,) per-channel minimum
    scale: np.ndarray   # (channels,) max - min, or 1.0 for constant channels


def _parse_timestamp(text: str) -> int:
    dt = datetime.fromisoformat(text.strip())
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return int(dt.timestamp())


def _format_timestamp(seconds: int) -> str:
    return datetime.fromtimestamp(int(seconds), tz=timezone.utc).strftime("%Y-%m-%dT%H:%M:%S")


def mask_path_for(csv_path) -> str:
    base = str(csv_path)
    if base.endswith(".csv"):
        base = base[:-4]
    return base + ".mask.csv"


def read_power_csv(path):
    """Read a raw dBm CSV -> (timestamps, freq_mhz list, values, mask)."""
    with open(path, "r", encoding="utf-8") as fh:
        lines = [ln.rstrip("\n") for ln in fh if ln.strip()]
    if not lines:
        raise InvalidInputError(f"{path}: empty file")
    header = [h.strip() for h in lines[0].split(",")]
    if len(header) < 2 or header[0] != "timestamp":
        raise InvalidInputError(f"{path}: header must be 'timestamp,<freq MHz>,...'")
    try:
        freqs_mhz = [float(h) for h in header[1:]]
    except ValueError as exc:
        raise InvalidInputError(f"{path}: non-numeric frequency column: {exc}") from exc
    n = len(freqs_mhz)
    ts, rows, masks = [], [], []
    for lineno, line in enumerate(lines[1:], 2):
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != n + 1:
            raise InvalidInputError(f"{path}:{lineno}: expected {n + 1} cells, got {len(parts)}")
        ts.append(_parse_timestamp(parts[0]))
        row = np.zeros(n)
        m = np.zeros(n)
        for j, cell in enumerate(parts[1:]):
            if cell != "":
                row[j] = float(cell)
                m[j] = 1.0
        rows.append(row)
        masks.append(m)
    if not rows:
        raise InvalidInputError(f"{path}: no data rows")
    return np.asarray(ts, dtype=np.int64), freqs_mhz, np.asarray(rows), np.asarray(masks)


def _match_spec(freq_mhz: float, specs) -> ChannelSpec:
    for spec in specs:
        if abs(spec.frequency_hz - freq_mhz * 1e6) <= 0.5e3:  # 500 Hz tolerance
            return spec
    raise InvalidInputError(f"no channel spec for column {freq_mhz} MHz")


def convert_power_frame(
    timestamps,
    freqs_mhz,
    dbm_values,
    mask,
    specs,
    consts: PhysicalConstants = PhysicalConstants(),
) -> SeriesFrame:
    """Convert a raw dBm matrix to a field-strength SeriesFrame.

    Missing cells become (value 0, mask 0); readings below the dBm
    floor are clamped before conversion.
    """
    dbm = np.asarray(dbm_values, dtype=float)
    msk = np.asarray(mask, dtype=float)
    cols = [_match_spec(f, specs) for f in freqs_mhz]
    out = np.zeros_like(dbm)
    for j, spec in enumerate(cols):
        for i in range(dbm.shape[0]):
            if msk[i, j] == 1:
                out[i, j] = dbm_to_field(max(dbm[i, j], DBM_FLOOR), spec, consts)
    return SeriesFrame(timestamps, out, msk, tuple(cols))


def write_field_csv(frame: SeriesFrame, path) -> str:
    """Write values and the parallel mask CSV; returns the mask path."""
    headers = ",".join(f"{s.frequency_hz / 1e6:g}" for s in frame.channel_specs)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"timestamp,{headers}\n")
        for i in range(len(frame)):
            cells = ",".join(repr(float(v)) for v in frame.values[i])
            fh.write(f"{_format_timestamp(frame.timestamps[i])},{cells}\n")
    mpath = mask_path_for(path)
    with open(mpath, "w", encoding="utf-8") as fh:
        fh.write(f"timestamp,{headers}\n")
        for i in range(len(frame)):
            cells = ",".join(str(int(v)) for v in frame.mask[i])
            fh.write(f"{_format_timestamp(frame.timestamps[i])},{cells}\n")
    return mpath


def read_field_csv(path, specs) -> SeriesFrame:
    """Read a field CSV (+ mask CSV when present) into a SeriesFrame."""
    ts, freqs, values, present = read_power_csv(path)  # same cell layout, V/m units
    cols = tuple(_match_spec(f, specs) for f in freqs)
    mpath = mask_path_for(path)
    if os.path.exists(mpath):
        _, _, mvals, _ = read_power_csv(mpath)
        if mvals.shape != values.shape:
            raise InvalidInputError(f"{mpath}: mask shape {mvals.shape} != values shape {values.shape}")
        mask = mvals
    else:
        mask = present
    return SeriesFrame(ts, values, mask, cols)


def normalize(frame: SeriesFrame, fit_rows: slice | None = None):
    """Min-max scale each channel to [0, 1].

    Statistics come from the observed entries of ``fit_rows`` (the
    training split; defaults to the whole frame) so later splits carry
    no leakage. Constant channels fall back to unit scale.
    """
    fit = fit_rows if fit_rows is not None else slice(None)
    vals, msk = frame.values[fit], frame.mask[fit]
    offset = np.zeros(frame.n_channels)
    scale = np.ones(frame.n_channels)
    for j in range(frame.n_channels):
        observed = vals[msk[:, j] == 1, j]
        if observed.size == 0:
            raise InvalidInputError(f"channel {j}: no observed value in the fitting split")
        lo, hi = observed.min(), observed.max()
        offset[j] = lo
        scale[j] = (hi - lo) if hi > lo else 1.0
    normalized = replace(
        frame,
        values=(frame.values - offset) / scale * frame.mask,  # masked cells stay 0
        units="normalized",
    )
    return normalized, NormalizationRecord(offset, scale)


def denormalize(values, record: NormalizationRecord) -> np.ndarray:
    """Inverse of :func:`normalize` on a value array."""
    return np.asarray(values, dtype=float) * record.scale + record.offset


def correlation_matrix(frame: SeriesFrame, grouping: dict[str, list[int]] | None = None):
    """Pearson correlation across channels or label groups.

    ``grouping`` maps a name to member column indices; each group is
    aggregated to a root-sum-square series first (rows where any member
    is unobserved count as missing). Returns ``(names, matrix)`` with a
    unit diagonal; zero-variance series produce NaN entries.
    """
    if grouping is None:
        names = [f"{s.frequency_hz / 1e6:g}MHz" for s in frame.channel_specs]
        series = frame.values.copy()
        observed = frame.mask.copy()
    else:
        names = list(grouping.keys())
        series = np.zeros((len(frame), len(names)))
        observed = np.zeros_like(series)
        for k, name in enumerate(names):
            idx = list(grouping[name])
            if not idx:
                raise InvalidInputError(f"group {name!r} is empty")
            observed[:, k] = np.all(frame.mask[:, idx] == 1, axis=1)
            for i in np.nonzero(observed[:, k])[0]:
                series[i, k] = aggregate_band(frame.values[i, idx])
    k = len(names)
    out = np.full((k, k), np.nan)
    for a in range(k):
        for b in range(a, k):
            both = (observed[:, a] == 1) & (observed[:, b] == 1)
            if both.sum() < 2:
                raise InvalidInputError(f"pair ({names[a]}, {names[b]}): fewer than 2 joint observations")
            xa, xb = series[both, a], series[both, b]
            da, db = xa - xa.mean(), xb - xb.mean()
            va, vb = np.dot(da, da), np.dot(db, db)
            if va == 0 or vb == 0:
                continue  # NaN sentinel for zero-variance series
            r = float(np.dot(da, db) / np.sqrt(va * vb))
            out[a, b] = out[b, a] = 1.0 if a == b else min(1.0, max(-1.0, r))
    return names, out
