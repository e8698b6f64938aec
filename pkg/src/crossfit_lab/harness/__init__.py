"""Config-driven Monte Carlo experiments: run, summarise, plot."""

from .config import ConfigError, ExperimentConfig, load_config, parse_config
from .demo import demo_bias, demo_config
from .plotting import plot
from .runner import RESULT_COLUMNS, run, run_task
from .summary import SUMMARY_COLUMNS, summarize

__all__ = ["ConfigError", "ExperimentConfig", "RESULT_COLUMNS", "SUMMARY_COLUMNS", "demo_bias",
           "demo_config", "load_config", "parse_config", "plot", "run", "run_task", "summarize"]
