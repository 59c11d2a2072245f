"""Data layer: power-to-field conversion, condition tracks, windowing."""
from .convert import (
    DBM_FLOOR,
    ChannelSpec,
    PhysicalConstants,
    aggregate_band,
    dbm_to_field,
    read_channel_specs,
)
from .conditions import (
    SCHEMAS,
    ConditionTrack,
    build_conditions,
    condition_width,
    encode_conditions,
    null_condition,
    read_holidays,
    season_of,
)
from .frames import (
    NormalizationRecord,
    SeriesFrame,
    convert_power_frame,
    correlation_matrix,
    denormalize,
    mask_path_for,
    normalize,
    read_field_csv,
    read_power_csv,
    write_field_csv,
)
from .windows import WindowPair, make_windows

__all__ = [
    "DBM_FLOOR",
    "ChannelSpec",
    "PhysicalConstants",
    "aggregate_band",
    "dbm_to_field",
    "read_channel_specs",
    "SCHEMAS",
    "ConditionTrack",
    "build_conditions",
    "condition_width",
    "encode_conditions",
    "null_condition",
    "read_holidays",
    "season_of",
    "NormalizationRecord",
    "SeriesFrame",
    "convert_power_frame",
    "correlation_matrix",
    "denormalize",
    "mask_path_for",
    "normalize",
    "read_field_csv",
    "read_power_csv",
    "write_field_csv",
    "WindowPair",
    "make_windows",
]
