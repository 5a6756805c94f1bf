"""Distribution-cognisant loss and baselines for label distribution learning."""

__version__ = "0.1.0"

from .errors import DomainError, FormatError, TrainingDiverged
from .label_codec import decode_argmax, encode_gaussian, encode_onehot
from .losses import (
    LossKind,
    LossResult,
    LossSpec,
    bhattacharyya,
    ce_loss,
    cemv_loss,
    dc_loss,
    kl_loss,
    profile,
    softmax,
)
from .metrics import MetricsReport, cs, mae

__all__ = [
    "DomainError",
    "FormatError",
    "LossKind",
    "LossResult",
    "LossSpec",
    "MetricsReport",
    "TrainingDiverged",
    "bhattacharyya",
    "ce_loss",
    "cemv_loss",
    "cs",
    "dc_loss",
    "decode_argmax",
    "encode_gaussian",
    "encode_onehot",
    "kl_loss",
    "mae",
    "profile",
    "softmax",
]
