"""Token-as-score decoding, scoring heads, and evaluation tooling for aesthetic scores."""

from .codec import (
    CodecStrategy,
    NormalizedScore,
    ScoreTokenTable,
    build_table,
    decode_argmax,
    decode_expectation,
    encode_score,
    level_of_score,
    normalize_score,
)
from .metrics import bootstrap_ci, plcc, srcc

__version__ = "0.1.0"

__all__ = [
    "CodecStrategy",
    "NormalizedScore",
    "ScoreTokenTable",
    "bootstrap_ci",
    "build_table",
    "decode_argmax",
    "decode_expectation",
    "encode_score",
    "level_of_score",
    "normalize_score",
    "plcc",
    "srcc",
]
