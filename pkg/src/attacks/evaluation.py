"""Attack scoring against ground truth."""

from typing import Optional, Sequence

import numpy as np
from sklearn.metrics import confusion_matrix, precision_recall_fscore_support

from ..errors import AttackError
from ..schemas import AttackMetrics, ClassMetrics
from .base import AttackVerdict


def evaluate_attack(
    verdicts: Sequence[AttackVerdict],
    ground_truth: Sequence[int],
    labels: Optional[Sequence[int]] = None,
) -> AttackMetrics:
    """Accuracy, per-class and macro precision/recall/F1, confusion matrix and blind-guess baseline.

    `labels` are the classes of the attack task (0 = non-member, k = member of
    client k); the baseline is 1/len(labels). Zero divisions count as 0.
    """
    if len(verdicts) != len(ground_truth):
        raise AttackError(f"{len(verdicts)} verdicts for {len(ground_truth)} ground-truth labels")
    predicted = np.asarray([v.predicted for v in verdicts], dtype=np.int64)
    truth = np.asarray(ground_truth, dtype=np.int64)
    if labels is None:
        labels = sorted(set(truth.tolist()) | set(predicted.tolist())) or [0, 1]
    labels = [int(label) for label in labels]
    baseline = 1.0 / len(labels)

    if len(truth) == 0:
        zeros = [[0] * len(labels) for _ in labels]
        return AttackMetrics(
            accuracy=0.0, macro_f1=0.0, macro_precision=0.0, macro_recall=0.0, baseline=baseline,
            labels=labels, per_class=[ClassMetrics(label=l, precision=0.0, recall=0.0, f1=0.0, support=0) for l in labels],
            confusion_matrix=zeros, n_targets=0,
        )

    precision, recall, f1, support = precision_recall_fscore_support(
        truth, predicted, labels=labels, zero_division=0
    )
    matrix = confusion_matrix(truth, predicted, labels=labels)
    return AttackMetrics(
        accuracy=float(np.mean(predicted == truth)),
        macro_f1=float(np.mean(f1)),
        macro_precision=float(np.mean(precision)),
        macro_recall=float(np.mean(recall)),
        baseline=baseline,
        labels=labels,
        per_class=[
            ClassMetrics(label=l, precision=float(p), recall=float(r), f1=float(f), support=int(s))
            for l, p, r, f, s in zip(labels, precision, recall, f1, support)
        ],
        confusion_matrix=matrix.astype(int).tolist(),
        n_targets=len(truth),
    )
