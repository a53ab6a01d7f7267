from .dataset import (
    DEFAULT_RATIOS,
    DatasetContainer,
    build_dataset,
    read_dataset,
    split_counts,
    write_dataset,
)
from .forecast import ForecastResult, forecast, forecast_interval, recursive_forecast
from .inpaint import inpaint, inpaint_targets
from .synthetic import SyntheticSpec, generate_clean, generate_synthetic, synthesize

__all__ = [
    "DEFAULT_RATIOS",
    "DatasetContainer",
    "ForecastResult",
    "SyntheticSpec",
    "build_dataset",
    "forecast",
    "forecast_interval",
    "generate_clean",
    "generate_synthetic",
    "inpaint",
    "inpaint_targets",
    "read_dataset",
    "recursive_forecast",
    "split_counts",
    "synthesize",
    "write_dataset",
]
