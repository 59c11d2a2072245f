"""Point and probabilistic forecast metrics.

Point metrics compare the truth against the ensemble median (lower of
the two middles for even counts); CRPS scores the whole empirical
predictive distribution via the pairwise energy identity

    CRPS = mean|X - y| - 0.5 * mean|X - X'|

over all S*S sample pairs, which equals the integral of
(F_hat(z) - 1{y<=z})^2 exactly.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidInputError
from .intervals import PredictionInterval, pointwise_median

__all__ = [
    "mape",
    "nd",
    "rmse",
    "nrmse",
    "picp",
    "crps_empirical",
    "energy_score",
    "EvalReport",
    "build_report",
    "write_report_text",
    "write_report_csv",
]

ZERO_TARGET_EPS = 1e-12


def mape(y, y_hat) -> float:
    """Mean absolute percentage error; near-zero targets are excluded.

    Returns NaN when every target is below the zero-target threshold.
    """
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    if y.shape != y_hat.shape:
        raise InvalidInputError("y and y_hat must have the same length")
    keep = np.abs(y) >= ZERO_TARGET_EPS
    if not np.any(keep):
        return float("nan")
    return float(100.0 * np.mean(np.abs(y[keep] - y_hat[keep]) / np.abs(y[keep])))


def nd(y, y_hat) -> float:
    """Normalized deviation: total absolute error over total magnitude."""
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    denom = np.sum(np.abs(y))
    if denom <= 0:
        return float("nan")
    return float(np.sum(np.abs(y - y_hat)) / denom)


def rmse(y, y_hat) -> float:
    y = np.asarray(y, dtype=np.float64).ravel()
    y_hat = np.asarray(y_hat, dtype=np.float64).ravel()
    return float(np.sqrt(np.mean((y - y_hat) ** 2)))


def nrmse(y, y_hat) -> float:
    """RMSE over the root mean square of the targets."""
    y = np.asarray(y, dtype=np.float64).ravel()
    denom = np.sqrt(np.mean(y**2))
    if denom <= 0:
        return float("nan")
    return rmse(y, y_hat) / float(denom)


def picp(y, lower, upper) -> float:
    """Percentage of targets inside the closed interval [lower, upper]."""
    y = np.asarray(y, dtype=np.float64).ravel()
    lo = np.asarray(lower, dtype=np.float64).ravel()
    hi = np.asarray(upper, dtype=np.float64).ravel()
    if np.any(lo > hi):
        raise InvalidInputError("interval bounds are crossed")
    return float(100.0 * np.mean((y >= lo) & (y <= hi)))


def _mean_pairwise_abs(sorted_z: np.ndarray) -> float:
    # sum_{i,j} |z_i - z_j| = 2 * sum_k (2k - n - 1) * z_(k), 1-based k
    n = sorted_z.size
    weights = 2.0 * np.arange(1, n + 1) - n - 1.0
    return float(2.0 * np.dot(weights, sorted_z) / (n * n))


def crps_empirical(samples, y: float) -> float:
    """CRPS of the empirical CDF of ``samples`` at observation ``y``."""
    z = np.asarray(samples, dtype=np.float64).ravel()
    if z.size < 1:
        raise InvalidInputError("need at least one sample")
    term1 = float(np.mean(np.abs(z - y)))
    if z.size == 1:
        return term1
    return term1 - 0.5 * _mean_pairwise_abs(np.sort(z))


def energy_score(sample_vectors, y_vector) -> float:
    """Multivariate generalization: mean||X-y|| - 0.5 * mean||X-X'||.

    With a single sample the pair term is zero (the report carries a
    degeneracy flag for that case); in one dimension this equals the
    pairwise CRPS.
    """
    x = np.asarray(sample_vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 1:
        raise InvalidInputError("sample_vectors must be (S, d)")
    y = np.asarray(y_vector, dtype=np.float64).ravel()
    term1 = float(np.mean(np.linalg.norm(x - y, axis=1)))
    if x.shape[0] == 1:
        return term1
    diffs = np.linalg.norm(x[:, None, :] - x[None, :, :], axis=2)
    return term1 - 0.5 * float(diffs.mean())


@dataclass(frozen=True)
class EvalReport:
    """Per-channel and pooled metric values."""

    rows: dict[str, dict[str, float]]  # channel name (or "ALL") -> metric -> value
    sample_count: int
    gamma_levels: tuple[float, ...]
    notes: tuple[str, ...] = field(default=())

    def metric(self, channel: str, name: str) -> float:
        return self.rows[channel][name]


def _point_metrics(y, y_hat) -> dict[str, float]:
    return {
        "mape": mape(y, y_hat),
        "nd": nd(y, y_hat),
        "rmse": rmse(y, y_hat),
        "nrmse": nrmse(y, y_hat),
        "excluded_zero_targets": float(np.sum(np.abs(np.ravel(y)) < ZERO_TARGET_EPS)),
    }


def build_report(
    truth: np.ndarray,
    trajectories: np.ndarray,
    intervals: list[PredictionInterval],
    channel_names,
    include_energy: bool = True,
) -> EvalReport:
    """Score an ensemble against the realized future block.

    ``truth``: (F, N); ``trajectories``: (S, F, N).  Point metrics use
    the per-cell ensemble median; PICP is reported once per supplied
    interval (keyed by method and level); CRPS and the energy score are
    averaged over future steps.
    """
    truth = np.asarray(truth, dtype=np.float64)
    traj = np.asarray(trajectories, dtype=np.float64)
    if truth.ndim != 2 or traj.ndim != 3 or traj.shape[1:] != truth.shape:
        raise InvalidInputError(
            f"truth {truth.shape} and trajectories {traj.shape} do not line up"
        )
    horizon, channels = truth.shape
    scenario_count = traj.shape[0]
    median = pointwise_median(traj, axis=0)
    notes = []
    if scenario_count == 1:
        notes.append("single-scenario ensemble: energy-score pair term is zero")
    rows: dict[str, dict[str, float]] = {}
    for j in range(channels):
        row = _point_metrics(truth[:, j], median[:, j])
        row["crps"] = float(
            np.mean([crps_empirical(traj[:, k, j], truth[k, j]) for k in range(horizon)])
        )
        for pi in intervals:
            key = f"picp_{pi.method}_{pi.gamma:g}"
            row[key] = picp(truth[:, j], pi.lower[:, j], pi.upper[:, j])
        rows[channel_names[j]] = row
    pooled = _point_metrics(truth, median)
    pooled["crps"] = float(
        np.mean(
            [crps_empirical(traj[:, k, j], truth[k, j]) for k in range(horizon) for j in range(channels)]
        )
    )
    for pi in intervals:
        pooled[f"picp_{pi.method}_{pi.gamma:g}"] = picp(truth, pi.lower, pi.upper)
    if include_energy:
        pooled["energy_score"] = float(
            np.mean([energy_score(traj[:, k, :], truth[k, :]) for k in range(horizon)])
        )
    rows["ALL"] = pooled
    gammas = tuple(sorted({pi.gamma for pi in intervals}))
    return EvalReport(rows, truth.size, gammas, tuple(notes))


def write_report_text(report: EvalReport, path) -> None:
    """Flat ``channel.metric = value`` listing."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"samples = {report.sample_count}\n")
        fh.write(f"gamma_levels = {','.join(f'{g:g}' for g in report.gamma_levels)}\n")
        for note in report.notes:
            fh.write(f"note = {note}\n")
        for channel, row in report.rows.items():
            for name, value in row.items():
                fh.write(f"{channel}.{name} = {value!r}\n")


def write_report_csv(report: EvalReport, path) -> None:
    """One row per channel plus the pooled ALL row."""
    names: list[str] = []
    for row in report.rows.values():
        for name in row:
            if name not in names:
                names.append(name)
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("channel," + ",".join(names) + "\n")
        for channel, row in report.rows.items():
            cells = ",".join(repr(row[n]) if n in row else "" for n in names)
            fh.write(f"{channel},{cells}\n")
