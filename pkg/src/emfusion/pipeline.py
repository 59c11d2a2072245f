"""End-to-end command implementations behind the CLI.

Every command is deterministic given its inputs and the run seed: all
randomness flows through counter-based streams derived from
(seed, purpose tag, indices...), outputs are written under the
configured output directory, and inputs are never mutated.
"""
from __future__ import annotations

import math
import os
from dataclasses import replace

import numpy as np

from . import rng
from .artifacts import read_ensemble, write_ensemble, write_loss_log
from .autodiff import Tensor
from .checkpoint import Checkpoint, read_checkpoint, write_checkpoint
from .config import RunConfig, require_paths
from .data import (
    NormalizationRecord,
    SeriesFrame,
    build_conditions,
    convert_power_frame,
    denormalize,
    encode_conditions,
    make_windows,
    normalize,
    read_channel_specs,
    read_field_csv,
    read_holidays,
    read_power_csv,
    write_field_csv,
)
from .denoiser import Denoiser
from .diffusion import GuidanceConfig, NoiseSchedule, sample_paths, training_step
from .errors import ConfigError, InvalidInputError, NumericError
from .intervals import ensemble_intervals, export_intervals_csv, pointwise_median, ScenarioEnsemble
from .metrics import build_report, write_report_csv, write_report_text
from .optim import Adam
from .synth import write_synthetic

__all__ = ["cmd_convert", "cmd_synth", "cmd_train", "cmd_forecast", "cmd_evaluate"]

# rng purpose tags
_TAG_INIT = 1
_TAG_SHUFFLE = 2
_TAG_STEP = 3
_TAG_SCENARIO = 4


def _frame_rows(frame: SeriesFrame, stop: int) -> SeriesFrame:
    return SeriesFrame(frame.timestamps[:stop], frame.values[:stop], frame.mask[:stop],
                       frame.channel_specs, frame.units)


def _channel_column(frame: SeriesFrame, j: int) -> SeriesFrame:
    return SeriesFrame(frame.timestamps, frame.values[:, j : j + 1], frame.mask[:, j : j + 1],
                       (frame.channel_specs[j],), frame.units)


def _holidays(config: RunConfig):
    if config.holidays:
        return read_holidays(config.holidays)
    return frozenset()


def _checkpoint_path(config: RunConfig) -> str:
    # bare filenames land in the output directory
    ckpt = config.checkpoint
    if not os.path.isabs(ckpt) and os.sep not in ckpt:
        ckpt = os.path.join(config.output_dir, ckpt)
    return ckpt


def cmd_convert(config: RunConfig, output: str | None = None) -> tuple[str, str]:
    """Raw dBm CSV -> field CSV (V/m) plus parallel mask CSV."""
    require_paths(config, "data", "channel_specs")
    specs = read_channel_specs(config.channel_specs)
    ts, freqs, dbm, mask = read_power_csv(config.data)
    frame = convert_power_frame(ts, freqs, dbm, mask, specs)
    os.makedirs(config.output_dir, exist_ok=True)
    out = output or os.path.join(config.output_dir, "fields.csv")
    mask_path = write_field_csv(frame, out)
    return out, mask_path


def cmd_synth(config: RunConfig, seed: int | None = None) -> str:
    """Generate the synthetic dataset described by the [synth] section."""
    spec = config.synth if seed is None else replace(config.synth, seed=seed)
    return write_synthetic(spec, config.output_dir)


def _load_training_frame(config: RunConfig):
    require_paths(config, "data", "channel_specs")
    specs = read_channel_specs(config.channel_specs)
    frame = read_field_csv(config.data, specs)
    window = config.history + config.horizon
    if len(frame) < window:
        raise InvalidInputError(f"dataset has {len(frame)} rows, one window needs {window}")
    train_len = max(int(len(frame) * config.train_fraction), window)
    return frame, _frame_rows(frame, min(train_len, len(frame)))


def _fully_observed(windows):
    return [w for w in windows if np.all(w.full_mask() == 1)]


def _train_single(config: RunConfig, train_frame: SeriesFrame, schedule: NoiseSchedule,
                  seed_path: tuple[int, ...], log_path: str, ckpt_path: str,
                  mode_tag: str, channel_index: int | None = None) -> str:
    track = build_conditions(train_frame.timestamps, config.condition,
                             _holidays(config), config.timezone)
    norm_frame, record = normalize(train_frame)
    windows = _fully_observed(
        make_windows(norm_frame, track, config.history, config.horizon, config.stride)
    )
    if not windows:
        raise InvalidInputError("no fully observed training window; cannot fit the loss")
    net_cfg = config.net_config(config.history + config.horizon, train_frame.n_channels)
    denoiser = Denoiser.initialize(net_cfg, rng.stream(config.seed, _TAG_INIT, *seed_path))
    guidance = GuidanceConfig(config.guidance_scale, config.condition_dropout)
    optimizer = Adam(config.learning_rate)
    encoded = np.stack([encode_conditions(w.conditions, net_cfg.cond_len) for w in windows])
    log_rows = []
    for epoch in range(1, config.epochs + 1):
        order = rng.stream(config.seed, _TAG_SHUFFLE, *seed_path, epoch).permutation(len(windows))
        epoch_losses = []
        for b in range(0, len(order), config.batch_size):
            batch_idx = order[b : b + config.batch_size]
            loss, grads = training_step(
                [windows[i] for i in batch_idx],
                denoiser,
                schedule,
                guidance,
                rng.stream(config.seed, _TAG_STEP, *seed_path, epoch, b),
                encoded_conditions=encoded[batch_idx],
            )
            if not math.isfinite(loss):
                raise NumericError(f"training loss became non-finite at epoch {epoch}")
            optimizer.apply(denoiser.params, grads)
            epoch_losses.append(loss)
        log_rows.append((epoch, float(np.mean(epoch_losses))))
    write_loss_log(log_path, log_rows)
    extra = {
        "mode": mode_tag,
        "channel_index": channel_index,
        "history": config.history,
        "horizon": config.horizon,
        "condition": config.condition,
        "timezone": config.timezone,
        "cadence_seconds": config.cadence_seconds,
        "seed": config.seed,
        "offset": record.offset.tolist(),
        "scale": record.scale.tolist(),
        "channel_frequencies_mhz": [s.frequency_hz / 1e6 for s in train_frame.channel_specs],
    }
    write_checkpoint(ckpt_path, net_cfg, schedule, denoiser.params, extra)
    return ckpt_path


def cmd_train(config: RunConfig) -> dict:
    """Fit the denoiser; writes checkpoint(s) and loss log(s)."""
    frame, train_frame = _load_training_frame(config)
    schedule = NoiseSchedule.linear(config.steps, config.beta_start, config.beta_end)
    os.makedirs(config.output_dir, exist_ok=True)
    ckpt = config.checkpoint
    if not os.path.isabs(ckpt) and os.sep not in ckpt:
        ckpt = os.path.join(config.output_dir, ckpt)
    if config.mode == "mv":
        log = os.path.join(config.output_dir, "loss_log.csv")
        path = _train_single(config, train_frame, schedule, (), log, ckpt, "mv")
        return {"checkpoints": [path], "loss_logs": [log]}
    paths, logs = [], []
    for j in range(train_frame.n_channels):
        log = os.path.join(config.output_dir, f"loss_log.ch{j}.csv")
        path = _train_single(config, _channel_column(train_frame, j), schedule,
                             (j,), log, f"{ckpt}.ch{j}", "uv", channel_index=j)
        paths.append(path)
        logs.append(log)
    return {"checkpoints": paths, "loss_logs": logs}


def _rebuild_denoiser(ckpt: Checkpoint) -> Denoiser:
    params = {name: Tensor(data, requires_grad=True) for name, data in ckpt.params.items()}
    return Denoiser(ckpt.net_config, params)


def _forecast_inputs(config: RunConfig, ckpt: Checkpoint, frame: SeriesFrame):
    extra = ckpt.extra
    history, horizon = extra["history"], extra["horizon"]
    if len(frame) < history:
        raise InvalidInputError(f"need at least {history} rows of history, have {len(frame)}")
    record = NormalizationRecord(np.asarray(extra["offset"]), np.asarray(extra["scale"]))
    if frame.n_channels != record.offset.size:
        raise ConfigError(
            f"checkpoint was trained on {record.offset.size} channels, data has {frame.n_channels}"
        )
    past = frame.values[-history:]
    past_mask = frame.mask[-history:]
    x_past = (past - record.offset) / record.scale * past_mask
    mask = np.concatenate([past_mask, np.zeros((horizon, frame.n_channels))], axis=0)
    cadence = int(extra["cadence_seconds"])
    last = int(frame.timestamps[-1])
    future_ts = last + cadence * np.arange(1, horizon + 1, dtype=np.int64)
    all_ts = np.concatenate([frame.timestamps[-history:], future_ts])
    track = build_conditions(all_ts, extra["condition"], _holidays(config), extra["timezone"])
    cond = encode_conditions(track, ckpt.net_config.cond_len)
    return x_past, mask, cond, record, history, horizon


def _assert_clamped(paths: np.ndarray, x_past: np.ndarray, past_mask: np.ndarray) -> None:
    history = x_past.shape[0]
    observed = past_mask == 1
    for i in range(paths.shape[0]):
        if not np.array_equal(paths[i, :history][observed], x_past[observed]):
            raise NumericError(f"scenario {i}: observed entries drifted during sampling")


def cmd_forecast(config: RunConfig, checkpoint: str | None = None) -> dict:
    """Sample the scenario ensemble and derive intervals and the median."""
    require_paths(config, "data", "channel_specs")
    specs = read_channel_specs(config.channel_specs)
    frame = read_field_csv(config.data, specs)
    ckpt_path = checkpoint or config.checkpoint
    guidance = GuidanceConfig(config.guidance_scale, config.condition_dropout)
    names = tuple(f"{s.frequency_hz / 1e6:g}MHz" for s in frame.channel_specs)

    if config.mode == "mv":
        ckpt = read_checkpoint(ckpt_path)
        denoiser = _rebuild_denoiser(ckpt)
        x_past, mask, cond, record, history, horizon = _forecast_inputs(config, ckpt, frame)
        paths = sample_paths(x_past, mask, cond, denoiser, ckpt.schedule, guidance,
                             rng.derive_seed(config.seed, _TAG_SCENARIO), config.scenarios)
        _assert_clamped(paths, x_past, mask[:history])
        physical = denormalize(paths, record)
    else:
        blocks, history = [], None
        for j in range(frame.n_channels):
            ckpt = read_checkpoint(f"{ckpt_path}.ch{j}")
            denoiser = _rebuild_denoiser(ckpt)
            column = _channel_column(frame, j)
            x_past, mask, cond, record, history, horizon = _forecast_inputs(config, ckpt, column)
            paths = sample_paths(x_past, mask, cond, denoiser, ckpt.schedule, guidance,
                                 rng.derive_seed(config.seed, _TAG_SCENARIO, j), config.scenarios)
            _assert_clamped(paths, x_past, mask[:history])
            blocks.append(denormalize(paths, record))
        physical = np.concatenate(blocks, axis=2)

    ensemble = ScenarioEnsemble(physical[:, history:, :], names, config.seed)
    median = pointwise_median(ensemble.trajectories, axis=0)
    intervals = [
        ensemble_intervals(ensemble, gamma, method)
        for method in ("kde", "order_statistic")
        for gamma in config.gammas
    ]
    os.makedirs(config.output_dir, exist_ok=True)
    out = {
        "ensemble": os.path.join(config.output_dir, "ensemble.bin"),
        "intervals": os.path.join(config.output_dir, "intervals.csv"),
        "median": os.path.join(config.output_dir, "median.csv"),
    }
    write_ensemble(out["ensemble"], ensemble)
    export_intervals_csv(out["intervals"], intervals, median, names)
    with open(out["median"], "w", encoding="utf-8") as fh:
        fh.write("step," + ",".join(names) + "\n")
        for k in range(median.shape[0]):
            fh.write(f"{k}," + ",".join(repr(float(v)) for v in median[k]) + "\n")
    return out


def cmd_evaluate(config: RunConfig, ensemble_path: str, truth_path: str) -> dict:
    """Score a stored ensemble against the realized future block."""
    require_paths(config, "channel_specs")
    specs = read_channel_specs(config.channel_specs)
    truth_frame = read_field_csv(truth_path, specs)
    names = tuple(f"{s.frequency_hz / 1e6:g}MHz" for s in truth_frame.channel_specs)
    ensemble = read_ensemble(ensemble_path, names)
    if len(truth_frame) != ensemble.horizon or truth_frame.n_channels != ensemble.trajectories.shape[2]:
        raise InvalidInputError(
            f"truth is {len(truth_frame)}x{truth_frame.n_channels}, "
            f"ensemble horizon is {ensemble.horizon}x{ensemble.trajectories.shape[2]}"
        )
    intervals = [
        ensemble_intervals(ensemble, gamma, method)
        for method in ("kde", "order_statistic")
        for gamma in config.gammas
    ]
    report = build_report(truth_frame.values, ensemble.trajectories, intervals, names)
    os.makedirs(config.output_dir, exist_ok=True)
    out = {
        "report_txt": os.path.join(config.output_dir, "report.txt"),
        "report_csv": os.path.join(config.output_dir, "report.csv"),
    }
    write_report_text(report, out["report_txt"])
    write_report_csv(report, out["report_csv"])
    return out
