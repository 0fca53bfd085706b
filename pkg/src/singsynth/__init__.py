"""Singing voice synthesis toolkit.

Score and alignment parsing, mel/LF0 signal features, mixture-density
duration and pitch models, and a frame-synchronous autoregressive
acoustic model with adversarial style disentanglement, wired together
behind a pipeline CLI.
"""

from .config import PipelineConfig, load_config
from .corpus import (
    PhonemeVocabulary,
    ScoreEntry,
    IntervalEntry,
    Utterance,
    build_vocabulary,
    parse_intervals,
    parse_score,
    pitch_to_midi,
)
from .errors import MissingArtifactError, ParseError, SingsynthError, ValidationError

__version__ = "0.1.0"

__all__ = [
    "PipelineConfig",
    "load_config",
    "PhonemeVocabulary",
    "ScoreEntry",
    "IntervalEntry",
    "Utterance",
    "build_vocabulary",
    "parse_intervals",
    "parse_score",
    "pitch_to_midi",
    "MissingArtifactError",
    "ParseError",
    "SingsynthError",
    "ValidationError",
    "__version__",
]
