"""Learning-to-rank training and evaluation for choosing the most plausible
hypothesis between two observations."""

__version__ = "0.1.0"

from .core import (
    BinaryChoiceInstance,
    ConfigError,
    DataError,
    LossResult,
    NumericalError,
    RankingInstance,
    UntrainableQueryError,
)
from .losses import LOSS_KINDS, LossSpec, evaluate_loss

__all__ = [
    "BinaryChoiceInstance",
    "ConfigError",
    "DataError",
    "LOSS_KINDS",
    "LossResult",
    "LossSpec",
    "NumericalError",
    "RankingInstance",
    "UntrainableQueryError",
    "evaluate_loss",
]
