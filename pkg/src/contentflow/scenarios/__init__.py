from .config import ConfigError, ScenarioConfig, parse_config
from .runner import RunResult, World, metrics_csv, run_config, run_text, sweep

__all__ = [
    "ConfigError", "ScenarioConfig", "parse_config",
    "RunResult", "World", "metrics_csv", "run_config", "run_text", "sweep",
]
