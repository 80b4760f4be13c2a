from .config import RunConfig, load_config
from .features import (
    FeatureFileError,
    read_features,
    read_features_binary,
    read_features_csv,
    write_features,
    write_features_binary,
    write_features_csv,
)
from .report import format_report, strip_timing, write_report, write_report_jsonl

__all__ = [
    "FeatureFileError",
    "RunConfig",
    "format_report",
    "load_config",
    "read_features",
    "read_features_binary",
    "read_features_csv",
    "strip_timing",
    "write_features",
    "write_features_binary",
    "write_features_csv",
    "write_report",
    "write_report_jsonl",
]
