"""Label-relevant baseline estimators.

* sample_n_estimate -- label n examples per context and average them.
* avg_train_estimate -- mean performance over all labeled settings.
* ATC -- per labeled setting, calibrate a confidence threshold so the
  fraction of confidences above it matches the labeled accuracy, apply
  each threshold to the target task's unlabeled confidences, and average
  the resulting fractions.

Confidence is the length-normalized sequence likelihood exp(-nll/|x|),
bounded in (0, 1] and monotone in NLL.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientDataError


def sample_n_estimate(labeled, n: int, contexts) -> float:
    """Mean per-sample performance over the first n labeled examples of
    every context in `contexts`.

    `labeled` is a list of (record, per_sample_performance) pairs.
    """
    contexts = sorted(set(contexts))
    if n < 1:
        raise InsufficientDataError(f"n must be >= 1, got {n}")
    total = 0.0
    for ctx in contexts:
        perfs = [p for rec, p in labeled if rec.context_id == ctx]
        if len(perfs) < n:
            raise InsufficientDataError(
                f"context {ctx!r} has {len(perfs)} labeled samples, "
                f"need {n}")
        total += sum(perfs[:n]) / n
    if not contexts:
        raise InsufficientDataError("no contexts given")
    return total / len(contexts)


def avg_train_estimate(training_performances) -> float:
    """Arithmetic mean of per-setting performances on labeled tasks."""
    perfs = list(training_performances)
    if not perfs:
        raise InsufficientDataError("no training performances")
    return sum(perfs) / len(perfs)


@dataclass(frozen=True)
class AtcCalibration:
    """A confidence threshold fitted on one labeled (task, context)."""

    source_task_id: str
    context_id: str
    threshold: float
    source_accuracy: float


def _fractions_above(sorted_confidences: np.ndarray, thresholds) -> np.ndarray:
    """Fraction of confidences strictly above each threshold."""
    m = sorted_confidences.shape[0]
    above = m - np.searchsorted(sorted_confidences, thresholds, side="right")
    return above / m


def atc_calibrate(confidences, correctness, source_task_id="",
                  context_id="") -> AtcCalibration:
    """Pick the threshold whose fraction-above best matches mean correctness.

    Candidates are a sentinel below the minimum confidence, the midpoints
    between consecutive distinct confidences, and the maximum confidence;
    ties resolve to the smallest threshold.
    """
    confidences = np.asarray(list(confidences), dtype=float)
    correctness = list(correctness)
    if confidences.size == 0 or confidences.size != len(correctness):
        raise InsufficientDataError(
            "need equal-length, non-empty confidence and correctness lists")
    accuracy = sum(correctness) / len(correctness)
    uniques = np.unique(confidences)
    candidates = np.concatenate([[uniques[0] - 1.0],
                                 0.5 * (uniques[:-1] + uniques[1:]),
                                 [uniques[-1]]])
    errs = np.abs(_fractions_above(np.sort(confidences), candidates)
                  - accuracy)
    best = int(np.argmin(errs))  # argmin takes the first, i.e. smallest t
    return AtcCalibration(source_task_id=source_task_id,
                          context_id=context_id,
                          threshold=float(candidates[best]),
                          source_accuracy=accuracy)


def atc_estimate(calibrations, target_confidences) -> float:
    """Mean, over calibrations, of the fraction of target confidences
    above each calibration's threshold."""
    calibrations = list(calibrations)
    target = np.sort(np.asarray(list(target_confidences), dtype=float))
    if not calibrations or target.size == 0:
        raise InsufficientDataError(
            "need at least one calibration and one target confidence")
    thresholds = np.array([c.threshold for c in calibrations])
    return float(np.mean(_fractions_above(target, thresholds)))
