"""Forward corruption, training loss and imputation-clamped sampling.

Training draws a random diffusion step per sample, corrupts the window
with the closed-form marginal and regresses the injected noise.
Sampling runs the learned reverse chain from pure noise; at every step
the observed entries (past measurements) are re-noised to the target
step's level and clamped back in, so generation only ever fills the
unobserved cells (missing past readings and the whole future block).
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from . import rng
from .autodiff import Tensor, no_grad
from .data.conditions import ConditionTrack, encode_conditions
from .errors import ConfigError, InvalidInputError

__all__ = [
    "NoiseSchedule",
    "GuidanceConfig",
    "forward_sample",
    "training_step",
    "guided_noise",
    "reverse_step",
    "sample_paths",
    "sample_with_imputation",
    "sample_ensemble",
]


@dataclass(frozen=True)
class NoiseSchedule:
    """Per-step noise intensities of the diffusion chain (1-indexed)."""

    alpha: np.ndarray      # (T,) per-step retention, in (0, 1]
    alpha_bar: np.ndarray  # (T,) cumulative products
    sigma: np.ndarray      # (T,) reverse-step noise scale

    def __post_init__(self):
        a = np.asarray(self.alpha, dtype=np.float64)
        ab = np.asarray(self.alpha_bar, dtype=np.float64)
        s = np.asarray(self.sigma, dtype=np.float64)
        if a.ndim != 1 or a.size < 1 or ab.shape != a.shape or s.shape != a.shape:
            raise InvalidInputError("alpha, alpha_bar and sigma must be equal-length vectors")
        if np.any(a <= 0) or np.any(a > 1):
            raise InvalidInputError("alpha values must lie in (0, 1]")
        if np.any(np.diff(ab) >= 0):
            raise InvalidInputError("alpha_bar must be strictly decreasing")
        if np.max(np.abs(ab - np.cumprod(a))) > 1e-12:
            raise InvalidInputError("alpha_bar does not match the cumulative product of alpha")
        if np.any(s < 0) or not np.all(np.isfinite(s)):
            raise InvalidInputError("sigma values must be finite and non-negative")
        object.__setattr__(self, "alpha", a)
        object.__setattr__(self, "alpha_bar", ab)
        object.__setattr__(self, "sigma", s)

    @property
    def steps(self) -> int:
        return self.alpha.size

    def alpha_bar_at(self, t: int) -> float:
        """Cumulative product at step t, with the t=0 convention of 1."""
        if t == 0:
            return 1.0
        return float(self.alpha_bar[t - 1])

    @classmethod
    def linear(cls, steps: int, beta_start: float | None = None, beta_end: float | None = None):
        """Linear-beta schedule.

        Default endpoints scale inversely with the step count
        (0.1/T .. 20/T, capped below 1) so the chain ends near pure
        noise at any T; at T=1000 this is the standard 1e-4 .. 0.02
        range.
        """
        if steps < 1:
            raise InvalidInputError("schedule needs at least one step")
        if beta_start is None:
            beta_start = min(0.1 / steps, 0.5)
        if beta_end is None:
            beta_end = min(20.0 / steps, 0.999)
        if not (0 < beta_start <= beta_end < 1):
            raise InvalidInputError(f"invalid beta range [{beta_start}, {beta_end}]")
        betas = np.linspace(beta_start, beta_end, steps)
        alpha = 1.0 - betas
        return cls(alpha, np.cumprod(alpha), np.sqrt(betas))


@dataclass(frozen=True)
class GuidanceConfig:
    """Classifier-free guidance settings."""

    scale: float = 0.0              # s_c; 0 keeps the conditional branch only
    condition_dropout: float = 0.1  # training-time probability of the null condition

    def __post_init__(self):
        if not np.isfinite(self.scale) or self.scale < 0:
            raise InvalidInputError("guidance scale must be finite and >= 0")
        if not (0.0 <= self.condition_dropout <= 1.0):
            raise InvalidInputError("condition dropout must be in [0, 1]")


# -- forward process ------------------------------------------------------
def forward_sample(x0, t: int, schedule: NoiseSchedule, stream):
    """Corrupt x0 to step t; returns (x_t, the exact noise used)."""
    x0 = np.asarray(x0, dtype=np.float64)
    if not np.all(np.isfinite(x0)):
        raise InvalidInputError("x0 must be finite")
    if not (1 <= t <= schedule.steps):
        raise InvalidInputError(f"step {t} outside [1, {schedule.steps}]")
    eps = stream.standard_normal(x0.shape)
    ab = schedule.alpha_bar[t - 1]
    return np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps, eps


# -- training --------------------------------------------------------------
def training_step(
    pairs: Sequence,
    denoiser,
    schedule: NoiseSchedule,
    guidance: GuidanceConfig,
    stream,
    encoded_conditions: np.ndarray | None = None,
):
    """One noise-regression step over a batch of WindowPair samples.

    Returns (loss, gradients); the loss is the batch mean of the
    per-window squared noise error.  With probability
    ``guidance.condition_dropout`` a sample's condition rows are zeroed
    (the null condition), which is what makes guided sampling possible
    later.  Stream draw order: step indices, noise, dropout uniforms.
    """
    if len(pairs) == 0:
        raise InvalidInputError("empty training batch")
    x0 = np.stack([p.full_values() for p in pairs])
    batch, window_len, channels = x0.shape
    if encoded_conditions is None:
        cond_len = denoiser.config.cond_len
        cond = np.stack([encode_conditions(p.conditions, cond_len) for p in pairs])
    else:
        cond = np.array(encoded_conditions, dtype=np.float64)
    cfg = getattr(denoiser, "config", None)
    if cfg is not None and (window_len != cfg.window_len or channels != cfg.channels):
        raise ConfigError(
            f"batch windows are ({window_len}, {channels}), "
            f"denoiser expects ({cfg.window_len}, {cfg.channels})"
        )
    t_batch = stream.integers(1, schedule.steps + 1, size=batch)
    eps = stream.standard_normal(x0.shape)
    drop = stream.random(batch) < guidance.condition_dropout
    cond[drop] = 0.0
    ab = schedule.alpha_bar[t_batch - 1][:, None, None]
    x_t = np.sqrt(ab) * x0 + np.sqrt(1.0 - ab) * eps

    params = denoiser.parameters()
    for p in params.values():
        p.zero_grad()
    pred = denoiser.predict(x_t, t_batch, cond, dropout_stream=stream)
    diff = pred - Tensor(eps)
    loss = (diff * diff).sum() * (1.0 / batch)
    if loss.requires_grad:
        loss.backward()
    grads = {name: np.array(p.grad) for name, p in params.items()}
    return float(loss.data), grads


# -- reverse process -------------------------------------------------------
def guided_noise(denoiser, x_t, t, cond, scale: float) -> np.ndarray:
    """Classifier-free-guided noise estimate.

    scale 0 returns the conditional prediction itself (bit-identical);
    otherwise (1+s)*conditional - s*unconditional with a zero condition
    tensor standing in for the null condition.
    """
    x_t = np.asarray(x_t, dtype=np.float64)
    cond = np.asarray(cond, dtype=np.float64)
    with no_grad():
        conditional = denoiser.predict(x_t, t, cond).data
        if scale == 0.0:
            return conditional
        unconditional = denoiser.predict(x_t, t, np.zeros_like(cond)).data
    return (1.0 + scale) * conditional - scale * unconditional


def reverse_step(x_t, t: int, eps_hat, schedule: NoiseSchedule, stream):
    """One ancestral denoising step; the final step (t=1) is noiseless."""
    if not (1 <= t <= schedule.steps):
        raise InvalidInputError(f"step {t} outside [1, {schedule.steps}]")
    x_t = np.asarray(x_t, dtype=np.float64)
    eps_hat = np.asarray(eps_hat, dtype=np.float64)
    a = schedule.alpha[t - 1]
    ab = schedule.alpha_bar[t - 1]
    coef = 0.0 if ab == 1.0 else (1.0 - a) / np.sqrt(1.0 - ab)
    mean = (x_t - coef * eps_hat) / np.sqrt(a)
    if t == 1:
        return mean
    return mean + schedule.sigma[t - 1] * stream.standard_normal(x_t.shape)


def _encode_condition(conditions, denoiser) -> np.ndarray:
    if isinstance(conditions, ConditionTrack):
        return encode_conditions(conditions, denoiser.config.cond_len)
    return np.asarray(conditions, dtype=np.float64)


def _check_sampling_inputs(x_past, mask, x_future):
    x_past = np.asarray(x_past, dtype=np.float64)
    mask = np.asarray(mask, dtype=np.float64)
    if x_past.ndim != 2 or mask.ndim != 2 or mask.shape[1] != x_past.shape[1]:
        raise InvalidInputError("x_past must be (H, N) and mask (H+F, N)")
    if mask.shape[0] < x_past.shape[0]:
        raise InvalidInputError("mask must cover the past plus the horizon")
    if not np.all(np.isin(mask, (0, 1))):
        raise InvalidInputError("mask must be binary")
    horizon = mask.shape[0] - x_past.shape[0]
    if x_future is None:
        x_future = np.zeros((horizon, x_past.shape[1]))
    else:
        x_future = np.asarray(x_future, dtype=np.float64)
        if x_future.shape != (horizon, x_past.shape[1]):
            raise InvalidInputError(f"x_future must be ({horizon}, {x_past.shape[1]})")
    return x_past, mask, np.concatenate([x_past, x_future], axis=0)


def _reverse_loop(x0_source, mask, cond, denoiser, schedule, scale, streams, state_hook=None):
    """Shared clamped reverse chain over a batch of independent streams.

    Each scenario's randomness comes from its own stream in a fixed
    order (init noise, then per step: reverse noise, re-noising noise),
    so results are reproducible scenario by scenario.
    """
    batch = len(streams)
    window_len, channels = x0_source.shape
    cond_b = np.broadcast_to(cond, (batch,) + cond.shape[-2:])
    observed = mask == 1
    x = np.stack([s.standard_normal((window_len, channels)) for s in streams])
    for t in range(schedule.steps, 0, -1):
        eps_hat = guided_noise(denoiser, x, np.full(batch, t), cond_b, scale)
        a = schedule.alpha[t - 1]
        ab = schedule.alpha_bar[t - 1]
        coef = 0.0 if ab == 1.0 else (1.0 - a) / np.sqrt(1.0 - ab)
        x_prime = (x - coef * eps_hat) / np.sqrt(a)
        if t > 1:
            z = np.stack([s.standard_normal((window_len, channels)) for s in streams])
            x_prime = x_prime + schedule.sigma[t - 1] * z
        if t > 1:
            eps_obs = np.stack([s.standard_normal((window_len, channels)) for s in streams])
            ab_prev = schedule.alpha_bar_at(t - 1)
            x_obs = np.sqrt(ab_prev) * x0_source + np.sqrt(1.0 - ab_prev) * eps_obs
        else:
            # final step: no re-noising, observed cells revert to the
            # inputs bit for bit
            x_obs = np.broadcast_to(x0_source, x.shape).copy()
        x = np.where(observed, x_obs, x_prime)
        if state_hook is not None:
            state_hook(t - 1, x.copy(), x_obs.copy())
    return x


def sample_with_imputation(
    x_past,
    mask,
    conditions,
    denoiser,
    schedule: NoiseSchedule,
    guidance: GuidanceConfig,
    stream,
    x_future=None,
    state_hook=None,
    return_full: bool = False,
):
    """Generate one future trajectory, inpainting unobserved past cells.

    ``mask`` covers the full window: 1 marks an observed (clamped)
    entry, all future rows and missing past readings are 0.  Returns
    the (F, N) future block, or the whole window with ``return_full``.
    """
    x_past, mask, x0_source = _check_sampling_inputs(x_past, mask, x_future)
    cond = _encode_condition(conditions, denoiser)
    hook = None
    if state_hook is not None:
        hook = lambda t, xs, obs: state_hook(t, xs[0], obs[0])  # noqa: E731
    out = _reverse_loop(x0_source, mask, cond, denoiser, schedule,
                        guidance.scale, [stream], state_hook=hook)[0]
    return out if return_full else out[x_past.shape[0]:]


def sample_paths(
    x_past,
    mask,
    conditions,
    denoiser,
    schedule: NoiseSchedule,
    guidance: GuidanceConfig,
    seed: int,
    n_scenarios: int,
    x_future=None,
) -> np.ndarray:
    """Full-window scenario draws, (n_scenarios, H+F, N).

    Scenario i draws from the stream derived as (seed, i), so the
    ensemble is reproducible and order-independent.
    """
    if n_scenarios < 1:
        raise InvalidInputError("need at least one scenario")
    x_past, mask, x0_source = _check_sampling_inputs(x_past, mask, x_future)
    cond = _encode_condition(conditions, denoiser)
    streams = [rng.stream(seed, i) for i in range(n_scenarios)]
    return _reverse_loop(x0_source, mask, cond, denoiser, schedule, guidance.scale, streams)


def sample_ensemble(
    x_past,
    mask,
    conditions,
    denoiser,
    schedule: NoiseSchedule,
    guidance: GuidanceConfig,
    seed: int,
    n_scenarios: int,
    x_future=None,
    channel_names: tuple[str, ...] | None = None,
):
    """Draw an ensemble of future trajectories as a ScenarioEnsemble."""
    from .intervals import ScenarioEnsemble

    history = np.asarray(x_past).shape[0]
    paths = sample_paths(x_past, mask, conditions, denoiser, schedule,
                         guidance, seed, n_scenarios, x_future)
    names = channel_names or tuple(f"ch{j}" for j in range(paths.shape[2]))
    return ScenarioEnsemble(paths[:, history:, :], names, seed)
