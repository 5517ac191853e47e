# Interval calibration, detection metrics and the calibrated-model selection rule.
import logging
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from uncq.errors import InvalidInputError

logger = logging.getLogger(__name__)

# Validation PICP band a configuration must hit to be reported (95% intervals).
CALIBRATION_BAND = (0.925, 0.975)

NONE_SENTINEL = 'none'


@dataclass(frozen=True)
class PiEvaluation:
    picp: float
    mpiw: float
    n: int
    alpha: float | None = None

    def to_dict(self):
        return {'picp': self.picp, 'mpiw': self.mpiw, 'n': self.n, 'alpha': self.alpha}


@dataclass(frozen=True)
class AucResult:
    auc: float
    n_pos: int
    n_neg: int


def _bounds(intervals):
    """Lower/upper arrays from an IntervalSet or a sequence of PredictionIntervals."""
    if hasattr(intervals, 'lower') and hasattr(intervals, 'upper'):
        return np.asarray(intervals.lower, dtype=float), np.asarray(intervals.upper, dtype=float)
    intervals = list(intervals)
    lower = np.array([iv.lower for iv in intervals], dtype=float)
    upper = np.array([iv.upper for iv in intervals], dtype=float)
    return lower, upper


def picp(intervals, ys):
    """Fraction of targets inside their closed interval."""
    lower, upper = _bounds(intervals)
    ys = np.asarray(ys, dtype=float).reshape(-1)
    if len(lower) == 0:
        raise InvalidInputError("picp needs at least one interval")
    if len(lower) != len(ys):
        raise InvalidInputError(f"{len(lower)} intervals but {len(ys)} targets")
    return float(np.mean((lower <= ys) & (ys <= upper)))


def mpiw(intervals, target_range):
    """Mean interval width divided by the training target range."""
    if not target_range > 0:
        raise InvalidInputError(f"target_range must be positive, got {target_range}")
    lower, upper = _bounds(intervals)
    if len(lower) == 0:
        raise InvalidInputError("mpiw needs at least one interval")
    return float(np.mean(upper - lower) / target_range)


def evaluate_intervals(intervals, ys, target_range):
    alpha = getattr(intervals, 'alpha', None)
    lower, _ = _bounds(intervals)
    return PiEvaluation(picp(intervals, ys), mpiw(intervals, target_range), len(lower), alpha)


def summarize(values):
    """Mean and population standard deviation."""
    values = np.asarray(values, dtype=float)
    if len(values) == 0:
        raise InvalidInputError("Cannot summarize an empty list")
    return float(np.mean(values)), float(np.std(values))


def select_calibrated(results, band=CALIBRATION_BAND):
    """
    Keep records whose validation PICP lies in ``band`` and aggregate their test metrics.

    Args:
        results (list[dict]): records holding val_picp, test_picp and test_mpiw.

    Returns:
        dict | str: {picp_mean, picp_std, mpiw_mean, mpiw_std, n_survivors, n_total},
        or "none" when no record survives.
    """
    results = list(results)
    if not results:
        raise InvalidInputError("select_calibrated needs at least one result")
    lo, hi = band
    survivors = [r for r in results if lo <= r['val_picp'] <= hi]
    logger.info(f"{len(survivors)} of {len(results)} configurations inside validation band [{lo}, {hi}]")
    if not survivors:
        return NONE_SENTINEL
    picp_mean, picp_std = summarize([r['test_picp'] for r in survivors])
    mpiw_mean, mpiw_std = summarize([r['test_mpiw'] for r in survivors])
    return {
        'picp_mean': picp_mean,
        'picp_std': picp_std,
        'mpiw_mean': mpiw_mean,
        'mpiw_std': mpiw_std,
        'n_survivors': len(survivors),
        'n_total': len(results),
    }


def roc_auc(scores, labels):
    """
    Mann-Whitney AUC from midranks: P(score_pos > score_neg) + 0.5 P(tie).

    Raises:
        InvalidInputError: length mismatch or only one class present.
    """
    scores = np.asarray(scores, dtype=float).reshape(-1)
    labels = np.asarray(labels).reshape(-1)
    if len(scores) != len(labels):
        raise InvalidInputError(f"{len(scores)} scores but {len(labels)} labels")
    positive = labels.astype(bool)
    n_pos = int(positive.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise InvalidInputError("roc_auc needs both positive and negative examples")
    ranks = rankdata(scores, method='average')
    u = ranks[positive].sum() - n_pos * (n_pos + 1) / 2.0
    return AucResult(float(u / (n_pos * n_neg)), n_pos, n_neg)


def accuracy(labels, predictions):
    labels = np.asarray(labels).reshape(-1)
    predictions = np.asarray(predictions).reshape(-1)
    if len(labels) != len(predictions) or len(labels) == 0:
        raise InvalidInputError("labels and predictions must be nonempty and of equal length")
    return float(np.mean(labels == predictions))
