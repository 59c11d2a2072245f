"""Prediction intervals from scenario ensembles.

Two routes from the N-hat sampled trajectories to an interval at level
gamma, both computed marginally per (future step, channel):

* KDE: a Gaussian kernel density over the samples, integrated to a CDF
  on a grid, then inverted at the symmetric quantile levels
  (1-gamma)/2 and (1+gamma)/2.
* order statistics: sort the samples and read off
  [z_k, z_{N-k}] with k = floor((1-gamma) * N), 1-indexed, index 0
  clamped to 1.  Note this formula's implied coverage is
  1 - 2*(1-gamma), not gamma; both numbers are exposed.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InvalidInputError

__all__ = [
    "ScenarioEnsemble",
    "PredictionInterval",
    "silverman_bandwidth",
    "kde_density",
    "kde_interval",
    "order_statistic_interval",
    "order_statistic_coverage",
    "ensemble_intervals",
    "pointwise_median",
    "export_intervals_csv",
]

GRID_POINTS = 512
GRID_SPAN = 5.0  # bandwidths beyond the sample range


@dataclass(frozen=True)
class ScenarioEnsemble:
    """N-hat sampled future trajectories, (N_hat, F, N)."""

    trajectories: np.ndarray
    channel_names: tuple[str, ...]
    seed: int

    def __post_init__(self):
        traj = np.asarray(self.trajectories, dtype=np.float64)
        if traj.ndim != 3 or traj.shape[0] < 1:
            raise InvalidInputError(f"trajectories must be (N_hat, F, N), got {traj.shape}")
        if not np.all(np.isfinite(traj)):
            raise InvalidInputError("trajectories must be finite")
        if len(self.channel_names) != traj.shape[2]:
            raise InvalidInputError("one channel name per trajectory column required")
        object.__setattr__(self, "trajectories", traj)
        object.__setattr__(self, "channel_names", tuple(self.channel_names))

    @property
    def n_scenarios(self) -> int:
        return self.trajectories.shape[0]

    @property
    def horizon(self) -> int:
        return self.trajectories.shape[1]


@dataclass(frozen=True)
class PredictionInterval:
    """Elementwise (F, N) lower/upper bounds at a nominal level."""

    lower: np.ndarray
    upper: np.ndarray
    gamma: float
    method: str  # "kde" or "order_statistic"

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=np.float64)
        hi = np.asarray(self.upper, dtype=np.float64)
        if lo.shape != hi.shape:
            raise InvalidInputError("lower/upper shapes differ")
        if np.any(lo > hi):
            raise InvalidInputError("interval bounds are crossed")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)


def silverman_bandwidth(samples) -> float:
    """Rule-of-thumb bandwidth 1.06 * std * n^(-1/5)."""
    z = np.asarray(samples, dtype=np.float64)
    if z.size < 2:
        return 0.0
    return 1.06 * float(np.std(z, ddof=1)) * z.size ** (-0.2)


def kde_density(samples, bandwidth: float):
    """Gaussian-kernel density estimate; returns a vectorized callable."""
    z = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    if z.size < 1:
        raise InvalidInputError("KDE needs at least one sample")
    if not (bandwidth > 0):
        raise InvalidInputError(f"bandwidth must be positive, got {bandwidth}")
    norm = 1.0 / (z.size * bandwidth * math.sqrt(2.0 * math.pi))

    def density(points):
        pts = np.atleast_1d(np.asarray(points, dtype=np.float64))
        u = (pts[:, None] - z[None, :]) / bandwidth
        out = norm * np.exp(-0.5 * u * u).sum(axis=1)
        return out if np.ndim(points) else float(out[0])

    return density


def _kde_quantiles(z: np.ndarray, levels, bandwidth: float) -> list[float]:
    grid = np.linspace(z.min() - GRID_SPAN * bandwidth, z.max() + GRID_SPAN * bandwidth, GRID_POINTS)
    pdf = kde_density(z, bandwidth)(grid)
    steps = np.diff(grid)
    cdf = np.concatenate([[0.0], np.cumsum(0.5 * (pdf[1:] + pdf[:-1]) * steps)])
    cdf /= cdf[-1]
    return [float(np.interp(level, cdf, grid)) for level in levels]


def kde_interval(samples, gamma: float, bandwidth_rule=silverman_bandwidth):
    """Symmetric-quantile interval [F^-1((1-g)/2), F^-1((1+g)/2)] of the KDE.

    Degenerate ensembles (all samples equal, so the bandwidth rule
    returns zero) collapse to the point interval [c, c].
    """
    if not (0.0 < gamma < 1.0):
        raise InvalidInputError(f"gamma must be in (0, 1), got {gamma}")
    z = np.asarray(samples, dtype=np.float64).ravel()
    if z.size < 1:
        raise InvalidInputError("need at least one sample")
    bandwidth = float(bandwidth_rule(z))
    if bandwidth <= 0.0 or np.all(z == z[0]):
        return float(z[0]), float(z[0])
    lo, hi = _kde_quantiles(z, ((1.0 - gamma) / 2.0, (1.0 + gamma) / 2.0), bandwidth)
    return lo, hi


def _order_index(gamma: float, n: int) -> int:
    # the 1e-9 absorbs float representation of gamma (e.g. 1-0.8 is
    # slightly below 0.2, but floor((1-0.8)*100) must be 20)
    return int(math.floor((1.0 - gamma) * n + 1e-9))


def order_statistic_interval(samples, gamma: float):
    """[z_k, z_{N-k}] on the sorted samples, k = floor((1-gamma)*N)."""
    if not (0.0 < gamma <= 1.0):
        raise InvalidInputError(f"gamma must be in (0, 1], got {gamma}")
    z = np.sort(np.asarray(samples, dtype=np.float64).ravel())
    n = z.size
    if n < 1:
        raise InvalidInputError("need at least one sample")
    k = _order_index(gamma, n)
    if n <= 2 * k:
        raise InvalidInputError(
            f"ensemble of N={n} is too small for gamma={gamma}: "
            f"floor((1-gamma)*N)={k} requires N > {2 * k}"
        )
    lower_idx = max(k, 1)  # index-0 clamp when k = 0
    return float(z[lower_idx - 1]), float(z[n - k - 1])


def order_statistic_coverage(gamma: float, n: int) -> float:
    """Coverage the order-statistic formula actually targets: 1 - 2k/N."""
    return 1.0 - 2.0 * _order_index(gamma, n) / n


def pointwise_median(values, axis: int = 0) -> np.ndarray:
    """Ensemble median; even counts take the lower of the two middles."""
    z = np.sort(np.asarray(values, dtype=np.float64), axis=axis)
    idx = (z.shape[axis] - 1) // 2
    return np.take(z, idx, axis=axis)


def ensemble_intervals(ensemble: ScenarioEnsemble, gamma: float, method: str) -> PredictionInterval:
    """Marginal interval per (step, channel) cell of the ensemble."""
    traj = ensemble.trajectories
    horizon, channels = traj.shape[1], traj.shape[2]
    lower = np.zeros((horizon, channels))
    upper = np.zeros((horizon, channels))
    for k in range(horizon):
        for j in range(channels):
            cell = traj[:, k, j]
            if method == "kde":
                lower[k, j], upper[k, j] = kde_interval(cell, gamma)
            elif method == "order_statistic":
                lower[k, j], upper[k, j] = order_statistic_interval(cell, gamma)
            else:
                raise InvalidInputError(f"unknown interval method {method!r}")
    return PredictionInterval(lower, upper, gamma, method)


def export_intervals_csv(path, intervals, median: np.ndarray, channel_names) -> None:
    """Write rows of ``step,channel,gamma,method,lower,upper,median``."""
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("step,channel,gamma,method,lower,upper,median\n")
        for pi in intervals:
            horizon, channels = pi.lower.shape
            for k in range(horizon):
                for j in range(channels):
                    fh.write(
                        f"{k},{channel_names[j]},{pi.gamma:g},{pi.method},"
                        f"{float(pi.lower[k, j])!r},{float(pi.upper[k, j])!r},{float(median[k, j])!r}\n"
                    )
