"""Calendar condition tracks attached to EMF series.

Exposure follows human activity, so each timestamp gets exogenous
flags derived from the local clock:

* ``working_day``  — 1 on Mondays..Fridays that are not in the holiday list
* ``working_hour`` — 1 when the local time is inside [09:00, 17:00)
* ``season``       — 1 spring (Mar 21 - Jun 20), 2 summer (Jun 21 - Sep 22),
                     3 autumn (Sep 23 - Dec 20), 4 winter (Dec 21 - Mar 20)
* ``multi``        — the (season, working_day) pair

Timestamps are UTC epoch seconds; the zone used for "local" is
configurable (the measurement campaigns this targets are Italian,
hence the Europe/Rome default).
"""
from __future__ import annotations

from dataclasses import dataclass
from datetime import date, datetime, timezone
from zoneinfo import ZoneInfo

import numpy as np

from ..errors import ConfigError, InvalidInputError

__all__ = [
    "SCHEMAS",
    "ConditionTrack",
    "build_conditions",
    "read_holidays",
    "season_of",
    "condition_width",
    "encode_conditions",
    "null_condition",
]

SCHEMAS = ("none", "working_day", "working_hour", "season", "multi")

_FEATURE_COLUMNS = {
    "none": (),
    "working_day": ("working_day",),
    "working_hour": ("working_hour",),
    "season": ("season",),
    "multi": ("season", "working_day"),
}

_ENCODED_WIDTH = {"none": 1, "working_day": 1, "working_hour": 1, "season": 4, "multi": 5}


def season_of(d: date) -> int:
    """Season index from the equinox/solstice date boundaries."""
    m, day = d.month, d.day
    if (m, day) >= (3, 21) and (m, day) <= (6, 20):
        return 1
    if (m, day) >= (6, 21) and (m, day) <= (9, 22):
        return 2
    if (m, day) >= (9, 23) and (m, day) <= (12, 20):
        return 3
    return 4


@dataclass(frozen=True)
class ConditionTrack:
    """Per-timestep exogenous features under a named schema."""

    schema: str
    features: np.ndarray  # (steps, n_columns) float, columns per _FEATURE_COLUMNS

    def __post_init__(self):
        if self.schema not in SCHEMAS:
            raise ConfigError(f"unknown condition schema {self.schema!r}; expected one of {SCHEMAS}")
        feats = np.asarray(self.features, dtype=float)
        expected = len(_FEATURE_COLUMNS[self.schema])
        if feats.ndim != 2 or feats.shape[1] != expected:
            raise InvalidInputError(
                f"schema {self.schema!r} expects {expected} feature columns, got shape {feats.shape}"
            )
        for j, name in enumerate(_FEATURE_COLUMNS[self.schema]):
            col = feats[:, j]
            if name == "season":
                if not np.all(np.isin(col, (1, 2, 3, 4))):
                    raise InvalidInputError("season values must be in {1,2,3,4}")
            else:
                if not np.all(np.isin(col, (0, 1))):
                    raise InvalidInputError(f"{name} values must be binary")
        object.__setattr__(self, "features", feats)

    def __len__(self) -> int:
        return self.features.shape[0]

    def slice(self, start: int, stop: int) -> "ConditionTrack":
        return ConditionTrack(self.schema, self.features[start:stop])


def read_holidays(path) -> frozenset[date]:
    """Holiday list file: one ISO date per line, ``#`` comments allowed."""
    days = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            try:
                days.add(date.fromisoformat(line))
            except ValueError as exc:
                raise InvalidInputError(f"{path}:{lineno}: {exc}") from exc
    return frozenset(days)


def build_conditions(
    timestamps,
    schema: str,
    holidays: frozenset[date] = frozenset(),
    tz: str = "Europe/Rome",
) -> ConditionTrack:
    """Compute the condition track for UTC-second timestamps.

    Deterministic in (timestamps, schema, holidays, tz): recomputation
    always yields an identical track.
    """
    if schema not in SCHEMAS:
        raise ConfigError(f"unknown condition schema {schema!r}; expected one of {SCHEMAS}")
    ts = np.asarray(timestamps, dtype=np.int64)
    zone = ZoneInfo(tz)
    cols = _FEATURE_COLUMNS[schema]
    out = np.zeros((ts.size, len(cols)), dtype=float)
    for i, t in enumerate(ts):
        local = datetime.fromtimestamp(int(t), tz=timezone.utc).astimezone(zone)
        for j, name in enumerate(cols):
            if name == "working_day":
                out[i, j] = 1.0 if (local.weekday() < 5 and local.date() not in holidays) else 0.0
            elif name == "working_hour":
                out[i, j] = 1.0 if 9 <= local.hour < 17 else 0.0
            else:  # season
                out[i, j] = season_of(local.date())
    return ConditionTrack(schema, out)


def condition_width(schema: str) -> int:
    """Feature width ``d_f`` of the encoded condition tensor."""
    if schema not in SCHEMAS:
        raise ConfigError(f"unknown condition schema {schema!r}")
    return _ENCODED_WIDTH[schema]


def encode_conditions(track: ConditionTrack, cond_len: int) -> np.ndarray:
    """Encode a window's condition slice as an (cond_len, d_f) tensor.

    The raw per-timestep rows are coarsened to ``cond_len`` rows by
    block-averaging contiguous chunks of the time axis; seasons are
    one-hot encoded (averaged across a chunk when it straddles a
    boundary), binary flags stay scalar.
    """
    steps = len(track)
    if cond_len < 1 or cond_len > steps:
        raise ConfigError(f"condition length {cond_len} must be in [1, {steps}]")
    width = condition_width(track.schema)
    expanded = np.zeros((steps, width), dtype=float)
    if track.schema in ("working_day", "working_hour"):
        expanded[:, 0] = track.features[:, 0]
    elif track.schema == "season":
        for k in range(4):
            expanded[:, k] = track.features[:, 0] == k + 1
    elif track.schema == "multi":
        for k in range(4):
            expanded[:, k] = track.features[:, 0] == k + 1
        expanded[:, 4] = track.features[:, 1]
    chunks = np.array_split(expanded, cond_len, axis=0)
    return np.stack([c.mean(axis=0) for c in chunks])


def null_condition(schema: str, cond_len: int) -> np.ndarray:
    """The unconditional placeholder: a zero tensor of the schema's shape."""
    return np.zeros((cond_len, condition_width(schema)), dtype=float)
