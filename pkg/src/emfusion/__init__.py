"""EMFusion: conditional-diffusion probabilistic EMF forecasting.

Pipeline: received-power logs -> field-strength series -> calendar
conditions -> windowed training of a cross-attention residual U-Net
denoiser -> imputation-clamped ensemble sampling -> prediction
intervals and probabilistic metrics.
"""
from .data import (
    ChannelSpec,
    ConditionTrack,
    PhysicalConstants,
    SeriesFrame,
    WindowPair,
    aggregate_band,
    build_conditions,
    correlation_matrix,
    dbm_to_field,
    denormalize,
    make_windows,
    normalize,
)
from .denoiser import Denoiser, NetConfig, embed_timestep, positional_encode
from .diffusion import (
    GuidanceConfig,
    NoiseSchedule,
    forward_sample,
    guided_noise,
    reverse_step,
    sample_ensemble,
    sample_with_imputation,
    training_step,
)
from .errors import ConfigError, EmfusionError, InvalidInputError, NumericError
from .intervals import (
    PredictionInterval,
    ScenarioEnsemble,
    kde_density,
    kde_interval,
    order_statistic_interval,
)
from .metrics import EvalReport, crps_empirical, energy_score, mape, nd, nrmse, picp
from .optim import Adam

__version__ = "0.1.0"

__all__ = [
    "ChannelSpec",
    "ConditionTrack",
    "PhysicalConstants",
    "SeriesFrame",
    "WindowPair",
    "aggregate_band",
    "build_conditions",
    "correlation_matrix",
    "dbm_to_field",
    "denormalize",
    "make_windows",
    "normalize",
    "Denoiser",
    "NetConfig",
    "embed_timestep",
    "positional_encode",
    "GuidanceConfig",
    "NoiseSchedule",
    "forward_sample",
    "guided_noise",
    "reverse_step",
    "sample_ensemble",
    "sample_with_imputation",
    "training_step",
    "ConfigError",
    "EmfusionError",
    "InvalidInputError",
    "NumericError",
    "PredictionInterval",
    "ScenarioEnsemble",
    "kde_density",
    "kde_interval",
    "order_statistic_interval",
    "EvalReport",
    "crps_empirical",
    "energy_score",
    "mape",
    "nd",
    "nrmse",
    "picp",
    "Adam",
    "__version__",
]
