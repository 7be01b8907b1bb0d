"""Command-line interface and pipeline configuration."""

# Authors: HistoML developers
# License: BSD 3 clause

from ._commands import build_parser, main
from ._config import DEFAULTS, PipelineConfig, load_config

__all__ = ["main", "build_parser", "PipelineConfig", "load_config", "DEFAULTS"]
