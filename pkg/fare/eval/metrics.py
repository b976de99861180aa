# Copyright (c)  2026  Fare authors
# Apache 2.0

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
import torch
from sklearn.metrics import auc, roc_curve

from fare.recognition.heatmap import bin_sums


@dataclass
class RocCurve:
    fpr: np.ndarray
    tpr: np.ndarray
    thresholds: np.ndarray


def roc_auc(scores: Sequence[float], labels: Sequence[bool]) -> Tuple[RocCurve, float]:
    '''ROC curve over all distinct score thresholds and its trapezoidal area.

    Equal scores form a single threshold. Raises ValueError when only one
    class is present.
    '''
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray(labels, dtype=bool)
    if scores.shape != labels.shape or scores.ndim != 1:
        raise ValueError(f'scores {scores.shape} and labels {labels.shape} must be matching 1-D arrays')
    if labels.all() or not labels.any():
        raise ValueError('roc_auc needs both positive and negative labels')
    fpr, tpr, thresholds = roc_curve(labels, scores, drop_intermediate=False)
    return RocCurve(fpr=fpr, tpr=tpr, thresholds=thresholds), float(auc(fpr, tpr))


def per_bin_score(b_t: bool, heatmap_values, k: int) -> float:
    '''Sum of the heatmap over bin `k` (0 left, 1 middle, 2 right) for frames
    detected as OOD, 0 otherwise.'''
    if k not in (0, 1, 2):
        raise ValueError(f'bin index must be 0, 1 or 2, got {k}')
    if not b_t:
        return 0.0
    return bin_sums(torch.as_tensor(heatmap_values))[k]


def per_bin_scores(detected: np.ndarray, sums: np.ndarray) -> np.ndarray:
    '''Vectorized per-bin scores: (L, 3) bin sums masked by (L,) detections.'''
    return np.where(np.asarray(detected, dtype=bool)[:, None], sums, 0.0)


def side_accuracy(detected: np.ndarray, sums: np.ndarray, side_bin: np.ndarray) -> Optional[float]:
    '''Share of detected frames whose highest bin sum is the ground-truth
    side bin; None without detected frames.

    Args:
      detected: (L,) detections.
      sums: (L, 3) heatmap bin sums.
      side_bin: (L,) index of the bin holding the failure, -1 to skip a frame.
    '''
    mask = np.asarray(detected, dtype=bool) & (np.asarray(side_bin) >= 0)
    if not mask.any():
        return None
    return float(np.mean(np.argmax(sums[mask], axis=1) == side_bin[mask]))
