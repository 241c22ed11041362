"""Joint multi-intent detection and slot filling with slot-to-intent mapping."""

from .data import LabelMap, UtteranceRecord
from .encoder import EncoderConfig, Vocabulary
from .metrics import EvalReport
from .model import Prediction, SlimModel
from .objective import LossWeights

__version__ = "0.1.0"

__all__ = [
    "EncoderConfig",
    "EvalReport",
    "LabelMap",
    "LossWeights",
    "Prediction",
    "SlimModel",
    "UtteranceRecord",
    "Vocabulary",
]
