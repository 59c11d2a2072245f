"""Sliding lookback/horizon window extraction."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import InvalidInputError
from .conditions import ConditionTrack
from .frames import SeriesFrame

__all__ = ["WindowPair", "make_windows"]


@dataclass(frozen=True)
class WindowPair:
    """One training/inference sample: H past rows and F future rows."""

    past: np.ndarray         # (H, N)
    future: np.ndarray       # (F, N)
    past_mask: np.ndarray    # (H, N)
    future_mask: np.ndarray  # (F, N)
    conditions: ConditionTrack  # H+F rows
    start: int               # source row of the first past step

    def __post_init__(self):
        h, f = self.past.shape[0], self.future.shape[0]
        if h < 1 or f < 1:
            raise InvalidInputError("window needs at least one past and one future row")
        if self.past_mask.shape != self.past.shape or self.future_mask.shape != self.future.shape:
            raise InvalidInputError("mask shapes must match value shapes")
        if self.past.shape[1] != self.future.shape[1]:
            raise InvalidInputError("past and future must share the channel axis")
        if len(self.conditions) != h + f:
            raise InvalidInputError(f"condition track must cover {h + f} rows, has {len(self.conditions)}")

    @property
    def horizon(self) -> int:
        return self.future.shape[0]

    @property
    def history(self) -> int:
        return self.past.shape[0]

    def full_values(self) -> np.ndarray:
        """The concatenated (H+F, N) window."""
        return np.concatenate([self.past, self.future], axis=0)

    def full_mask(self) -> np.ndarray:
        return np.concatenate([self.past_mask, self.future_mask], axis=0)


def make_windows(
    frame: SeriesFrame,
    conditions: ConditionTrack,
    history: int,
    horizon: int,
    stride: int,
) -> list[WindowPair]:
    """Cut contiguous (past, future) pairs starting every ``stride`` rows.

    Produces ``floor((len - H - F) / stride) + 1`` windows; raises when
    the frame is shorter than one full window.
    """
    if history < 1 or horizon < 1 or stride < 1:
        raise InvalidInputError("history, horizon and stride must be positive")
    total = history + horizon
    if len(frame) < total:
        raise InvalidInputError(f"frame has {len(frame)} rows, need at least {total}")
    if len(conditions) != len(frame):
        raise InvalidInputError("condition track length must equal frame length")
    out = []
    for start in range(0, len(frame) - total + 1, stride):
        mid, stop = start + history, start + total
        out.append(
            WindowPair(
                past=frame.values[start:mid],
                future=frame.values[mid:stop],
                past_mask=frame.mask[start:mid],
                future_mask=frame.mask[mid:stop],
                conditions=conditions.slice(start, stop),
                start=start,
            )
        )
    return out
