"""MAE and cumulative score (CS) for age predictions."""

from dataclasses import asdict, dataclass

import numpy as np

from .errors import DomainError

DEFAULT_CS_THRESHOLD = 5


@dataclass
class MetricsReport:
    mae: float
    cs: float
    threshold_I: int
    n: int

    def as_dict(self):
        return asdict(self)


def _pairs(preds, truths):
    preds = np.asarray(preds, dtype=np.float64).ravel()
    truths = np.asarray(truths, dtype=np.float64).ravel()
    if preds.size != truths.size:
        raise DomainError(f"length mismatch: {preds.size} predictions vs {truths.size} truths")
    if preds.size == 0:
        raise DomainError("no samples")
    return preds, truths


def mae(preds, truths):
    preds, truths = _pairs(preds, truths)
    return float(np.mean(np.abs(preds - truths)))


def cs(preds, truths, I=DEFAULT_CS_THRESHOLD):
    """Percentage of samples with ``|pred - truth| < I`` (strict)."""
    if not I >= 1:
        raise DomainError(f"threshold must be >= 1, got {I!r}")
    preds, truths = _pairs(preds, truths)
    hits = np.count_nonzero(np.abs(preds - truths) < I)
    return 100.0 * hits / preds.size


def evaluate(preds, truths, I=DEFAULT_CS_THRESHOLD):
    preds, truths = _pairs(preds, truths)
    return MetricsReport(mae(preds, truths), cs(preds, truths, I), int(I), int(preds.size))
