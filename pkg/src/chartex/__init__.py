"""chartex: bar-chart image parsing into structured data.

A four-stage pipeline (figure extraction, text detection, image
disassembly, data extraction) turns raster bar charts into chart models,
with a synthetic-chart generator for ground truth and agreement
statistics for evaluation.
"""

from .config import Config, ConfigError, load_config, parse_config
from .pipeline import PageResult, PanelResult, extract_page, extract_panel
from .semantics import CalibrationImpossible, ChartModel, LogScaleError

__version__ = "0.1.0"

__all__ = [
    "CalibrationImpossible",
    "ChartModel",
    "Config",
    "ConfigError",
    "LogScaleError",
    "PageResult",
    "PanelResult",
    "extract_page",
    "extract_panel",
    "load_config",
    "parse_config",
    "__version__",
]
