"""Seedable counter-based random streams.

All stochastic operations in the package take an explicit
``numpy.random.Generator`` built on the Philox counter-based bit
generator.  Streams are derived from a single master seed plus an
integer path (e.g. ``(epoch, step)`` or ``(scenario_index,)``), so any
part of a run can be reproduced in isolation and ensemble members can
be drawn independently, in any order, with identical results.
"""
from __future__ import annotations

import hashlib

import numpy as np

__all__ = ["stream", "derive_seed"]

_MASK64 = (1 << 64) - 1


def derive_seed(seed: int, *path: int) -> int:
    """Collapse (seed, path...) into a 128-bit integer Philox key."""
    h = hashlib.sha256()
    h.update(repr(int(seed)).encode())
    for p in path:
        h.update(b"/")
        h.update(repr(int(p)).encode())
    return int.from_bytes(h.digest()[:16], "little")


def stream(seed: int, *path: int) -> np.random.Generator:
    """Independent Philox stream for the given seed and derivation path."""
    key = derive_seed(seed, *path)
    return np.random.Generator(np.random.Philox(key=key & ((1 << 128) - 1)))
