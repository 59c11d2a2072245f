"""CLI-owned file formats: scenario-ensemble binary and loss log."""
from __future__ import annotations

import struct

import numpy as np

from .errors import InvalidInputError
from .intervals import ScenarioEnsemble

__all__ = ["write_ensemble", "read_ensemble", "write_loss_log"]

ENSEMBLE_MAGIC = b"EMFUSENS"
ENSEMBLE_VERSION = 1


def write_ensemble(path, ensemble: ScenarioEnsemble) -> None:
    """Header (N_hat, F, N, seed, version), then row-major f64 LE."""
    n_hat, horizon, channels = ensemble.trajectories.shape
    with open(path, "wb") as fh:
        fh.write(ENSEMBLE_MAGIC)
        fh.write(struct.pack("<IIIIq", ENSEMBLE_VERSION, n_hat, horizon, channels, ensemble.seed))
        fh.write(np.ascontiguousarray(ensemble.trajectories, dtype="<f8").tobytes())


def read_ensemble(path, channel_names=None) -> ScenarioEnsemble:
    with open(path, "rb") as fh:
        raw = fh.read()
    head = len(ENSEMBLE_MAGIC) + struct.calcsize("<IIIIq")
    if len(raw) < head or raw[: len(ENSEMBLE_MAGIC)] != ENSEMBLE_MAGIC:
        raise InvalidInputError(f"{path}: not an ensemble file")
    version, n_hat, horizon, channels, seed = struct.unpack(
        "<IIIIq", raw[len(ENSEMBLE_MAGIC) : head]
    )
    if version != ENSEMBLE_VERSION:
        raise InvalidInputError(f"{path}: unsupported ensemble version {version}")
    expected = n_hat * horizon * channels * 8
    if len(raw) - head != expected:
        raise InvalidInputError(f"{path}: payload is {len(raw) - head} bytes, expected {expected}")
    data = np.frombuffer(raw[head:], dtype="<f8").astype(np.float64)
    names = tuple(channel_names) if channel_names else tuple(f"ch{j}" for j in range(channels))
    return ScenarioEnsemble(data.reshape(n_hat, horizon, channels), names, seed)


def write_loss_log(path, rows) -> None:
    """CSV of (epoch, mean loss); float repr keeps the log reproducible."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("epoch,mean_loss\n")
        for epoch, loss in rows:
            fh.write(f"{epoch},{float(loss)!r}\n")
