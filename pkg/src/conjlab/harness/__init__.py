from .cache import Cache, cache_key
from .config import ExperimentConfig, apply_overrides, load_config
from .report import RunReport, emit, sanitize
from .run import COMMANDS, run

__all__ = [
    "COMMANDS",
    "Cache",
    "ExperimentConfig",
    "RunReport",
    "apply_overrides",
    "cache_key",
    "emit",
    "load_config",
    "run",
    "sanitize",
]
