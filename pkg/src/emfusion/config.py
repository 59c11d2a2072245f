"""Run configuration: flat key = value file with section headers."""
from __future__ import annotations

import configparser
import os
from dataclasses import dataclass, field, replace

from .denoiser import DESK_SCALE, NetConfig
from .errors import ConfigError
from .synth import SynthSpec

__all__ = ["RunConfig", "load_run_config", "CONDITION_ALIASES"]

CONDITION_ALIASES = {
    "none": "none",
    "workingday": "working_day",
    "working_day": "working_day",
    "workinghour": "working_hour",
    "working_hour": "working_hour",
    "season": "season",
    "multi": "multi",
}


@dataclass(frozen=True)
class RunConfig:
    """Everything a pipeline run needs, with published-scale defaults."""

    # paths
    data: str = ""
    channel_specs: str = ""
    holidays: str = ""
    checkpoint: str = "model.ckpt"
    output_dir: str = "out"
    # window
    history: int = 1344
    horizon: int = 192
    stride: int = 192
    # schedule
    steps: int = 50
    beta_start: float | None = None
    beta_end: float | None = None
    # net
    depth: int = 6
    base_width: int = 64
    heads: int = 8
    attention_width: int = 64
    time_embed_width: int = 128
    cond_len: int = 96
    dropout: float = 0.1
    mode: str = "mv"  # mv | uv
    # training
    learning_rate: float = 5e-4
    batch_size: int = 64
    epochs: int = 1500
    seed: int = 0
    condition: str = "none"
    condition_dropout: float = 0.1
    train_fraction: float = 1.0
    timezone: str = "Europe/Rome"
    cadence_seconds: int = 450
    # sampling
    scenarios: int = 100
    guidance_scale: float = 0.0
    gammas: tuple[float, ...] = (0.8,)
    # synthetic data generation
    synth: SynthSpec = field(default_factory=SynthSpec)

    def __post_init__(self):
        for name in ("history", "horizon", "steps", "scenarios", "batch_size", "epochs", "stride"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.mode not in ("mv", "uv"):
            raise ConfigError(f"mode must be 'mv' or 'uv', got {self.mode!r}")
        if self.condition not in CONDITION_ALIASES.values():
            raise ConfigError(f"unknown condition schema {self.condition!r}")
        if not all(0.0 < g <= 1.0 for g in self.gammas):
            raise ConfigError("gamma levels must be in (0, 1]")
        if not (0.0 < self.train_fraction <= 1.0):
            raise ConfigError("train_fraction must be in (0, 1]")

    def net_config(self, window_len: int, channels: int) -> NetConfig:
        from .data.conditions import condition_width

        return NetConfig(
            window_len=window_len,
            channels=channels,
            depth=self.depth,
            base_width=self.base_width,
            heads=self.heads,
            attention_width=self.attention_width,
            time_embed_width=self.time_embed_width,
            cond_len=self.cond_len,
            cond_width=condition_width(self.condition),
            dropout=self.dropout,
            mode="univariate" if self.mode == "uv" else "multivariate",
        )


_DESK_OVERRIDES = dict(
    history=96,
    horizon=24,
    stride=24,
    steps=50,
    batch_size=16,
    epochs=50,
    scenarios=40,
    cond_len=24,
    dropout=0.0,
    cadence_seconds=3600,
    **DESK_SCALE,
)

_SECTIONS = {
    "paths": ("data", "channel_specs", "holidays", "checkpoint", "output_dir"),
    "window": ("history", "horizon", "stride"),
    "schedule": ("steps", "beta_start", "beta_end"),
    "net": ("depth", "base_width", "heads", "attention_width", "time_embed_width",
            "cond_len", "dropout", "mode"),
    "train": ("learning_rate", "batch_size", "epochs", "seed", "condition",
              "condition_dropout", "train_fraction", "timezone", "cadence_seconds"),
    "sampling": ("scenarios", "guidance_scale", "gammas"),
}

_INT_KEYS = {"history", "horizon", "stride", "steps", "depth", "base_width", "heads",
             "attention_width", "time_embed_width", "cond_len", "batch_size", "epochs",
             "seed", "cadence_seconds", "scenarios"}
_FLOAT_KEYS = {"beta_start", "beta_end", "dropout", "learning_rate", "condition_dropout",
               "train_fraction", "guidance_scale"}


def _coerce(key: str, raw: str):
    raw = raw.strip()
    if key == "gammas":
        return tuple(float(g) for g in raw.split(",") if g.strip())
    if key == "condition":
        try:
            return CONDITION_ALIASES[raw.lower()]
        except KeyError:
            raise ConfigError(f"unknown condition schema {raw!r}") from None
    if key in _INT_KEYS:
        return int(raw)
    if key in _FLOAT_KEYS:
        return float(raw)
    return raw


def load_run_config(path: str | None = None, desk_scale: bool = False, overrides: dict | None = None) -> RunConfig:
    """Assemble a RunConfig; precedence: defaults < desk preset < file < CLI."""
    values: dict = dict(_DESK_OVERRIDES) if desk_scale else {}
    synth_values: dict = {}
    if path is not None:
        if not os.path.exists(path):
            raise ConfigError(f"config file not found: {path}")
        parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
        parser.read(path)
        known = {key: section for section, keys in _SECTIONS.items() for key in keys}
        for section in parser.sections():
            for key, raw in parser.items(section):
                if section == "synth":
                    synth_values[key] = raw
                    continue
                if key not in known:
                    raise ConfigError(f"unknown config key {key!r} in [{section}]")
                if raw.strip() != "":
                    values[key] = _coerce(key, raw)
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = _coerce(key, str(value)) if isinstance(value, str) else value
    if synth_values:
        spec_kwargs = {}
        for key, raw in synth_values.items():
            if key in ("channels", "days", "cadence_minutes", "seed"):
                spec_kwargs[key] = int(raw)
            elif key in ("base_level", "daily_amplitude", "working_hour_boost",
                         "noise_level", "missing_rate"):
                spec_kwargs[key] = float(raw)
            elif key in ("start", "tz"):
                spec_kwargs[key] = raw.strip()
            else:
                raise ConfigError(f"unknown synth key {key!r}")
        values["synth"] = SynthSpec(**spec_kwargs)
    return RunConfig(**values)


def require_paths(config: RunConfig, *names: str) -> None:
    """Check that the named input paths exist before a command runs."""
    for name in names:
        value = getattr(config, name)
        if not value:
            raise ConfigError(f"config is missing the {name!r} path")
        if not os.path.exists(value):
            raise ConfigError(f"{name} path does not exist: {value}")
