"""Layer-stress attention classifier with a C++ core."""

from ._xnn import (
    CheckpointError,
    ConfigError,
    DataError,
    Error,
    Model,
    NumericError,
    ShapeError,
    TrainConfig,
    auc,
    load_csv,
    macro_f1,
    run_cli,
    split,
    synth_deep,
    synth_shallow,
)

__all__ = [
    "CheckpointError",
    "ConfigError",
    "DataError",
    "Error",
    "Model",
    "NumericError",
    "ShapeError",
    "TrainConfig",
    "auc",
    "load_csv",
    "macro_f1",
    "run_cli",
    "split",
    "synth_deep",
    "synth_shallow",
]

