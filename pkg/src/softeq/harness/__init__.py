from .config import ConfigError, EqualizerSpec, ExperimentConfig, config_from_dict, load_config
from .equalizers import TrainedEqualizer, fit_equalizer
from .reports import emit_reports, load_summary
from .sweep import PointResult, SweepResult, run_sweep

__all__ = [
    "ConfigError",
    "EqualizerSpec",
    "ExperimentConfig",
    "PointResult",
    "SweepResult",
    "TrainedEqualizer",
    "config_from_dict",
    "emit_reports",
    "fit_equalizer",
    "load_config",
    "load_summary",
    "run_sweep",
]
