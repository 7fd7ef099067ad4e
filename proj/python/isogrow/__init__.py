"""Dense partial near-isometric correspondences by metric region growing."""

from ._core import (
    Config,
    Correspondence,
    Error,
    FormatError,
    PipelineResult,
    PreconditionError,
    Surface,
    SyntheticPair,
    error_curve,
    evaluate,
    generate_synthetic,
    match,
    match_files,
    write_truth_seeds,
)

__all__ = [
    "Config",
    "Correspondence",
    "Error",
    "FormatError",
    "PipelineResult",
    "PreconditionError",
    "Surface",
    "SyntheticPair",
    "error_curve",
    "evaluate",
    "generate_synthetic",
    "match",
    "match_files",
    "write_truth_seeds",
]
