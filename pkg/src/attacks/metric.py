"""Metric-based membership inference: prediction confidence and entropy with a calibrated threshold."""

import logging
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy.special import entr

from ..audit import AuditEvent, AuditTrail
from ..datasets import Dataset
from ..errors import AttackError
from ..nn import predict_proba
from ..schemas import AttackKind, EntropyTracePoint, MetricKind
from ..seeding import derive_seed
from ..swarm import RoundLog
from .base import NONMEMBER, AttackContext, AttackOutcome, AttackVerdict, BaseAttack
from .evaluation import evaluate_attack

logger = logging.getLogger(__name__)


def prediction_confidence(v: Sequence[float]) -> float:
    """max(p)"""
    return float(np.max(np.asarray(v, dtype=np.float64)))


def prediction_entropy(v: Sequence[float]) -> float:
    """Shannon entropy in nats with 0*ln(0) = 0."""
    return float(np.sum(entr(np.asarray(v, dtype=np.float64))))


def prediction_confidences(preds: np.ndarray) -> np.ndarray:
    return np.max(np.atleast_2d(preds), axis=1)


def prediction_entropies(preds: np.ndarray) -> np.ndarray:
    return np.sum(entr(np.atleast_2d(np.asarray(preds, dtype=np.float64))), axis=1)


METRICS = {
    MetricKind.CONFIDENCE: prediction_confidences,
    MetricKind.ENTROPY: prediction_entropies,
}


@dataclass(frozen=True)
class MetricThreshold:
    """Calibrated decision rule: confidence >= tau or entropy <= tau means member."""

    metric: MetricKind
    tau: float
    balanced_accuracy: float

    def is_member(self, values: np.ndarray) -> np.ndarray:
        values = np.asarray(values, dtype=np.float64)
        if self.metric == MetricKind.CONFIDENCE:
            return values >= self.tau
        return values <= self.tau


def candidate_thresholds(values: np.ndarray) -> np.ndarray:
    """Midpoints of the sorted distinct values (the value itself when there is only one)."""
    distinct = np.unique(values)
    if len(distinct) == 1:
        return distinct
    return (distinct[:-1] + distinct[1:]) / 2.0


def balanced_accuracies(
    metric: MetricKind,
    candidates: np.ndarray,
    member_values: np.ndarray,
    nonmember_values: np.ndarray,
) -> np.ndarray:
    """Balanced accuracy of every candidate threshold on the calibration data."""
    members = np.asarray(member_values, dtype=np.float64)[:, None]
    nonmembers = np.asarray(nonmember_values, dtype=np.float64)[:, None]
    if metric == MetricKind.CONFIDENCE:
        tpr = np.mean(members >= candidates[None, :], axis=0)
        tnr = np.mean(nonmembers < candidates[None, :], axis=0)
    else:
        tpr = np.mean(members <= candidates[None, :], axis=0)
        tnr = np.mean(nonmembers > candidates[None, :], axis=0)
    return (tpr + tnr) / 2.0


def choose_threshold(metric: MetricKind, member_values: Sequence[float], nonmember_values: Sequence[float]) -> MetricThreshold:
    """Best balanced accuracy over the candidate grid; ties go to the smaller tau."""
    member_values = np.asarray(member_values, dtype=np.float64)
    nonmember_values = np.asarray(nonmember_values, dtype=np.float64)
    if member_values.size == 0 or nonmember_values.size == 0:
        raise AttackError("metric calibration needs member and non-member values")
    metric = MetricKind(metric)
    candidates = candidate_thresholds(np.concatenate([member_values, nonmember_values]))
    scores = balanced_accuracies(metric, candidates, member_values, nonmember_values)
    best = int(np.argmax(scores))
    return MetricThreshold(metric, float(candidates[best]), float(scores[best]))


def metric_attack(
    metric: MetricKind,
    calibration: Tuple[Sequence[float], Sequence[float]],
    targets: np.ndarray,
    member_label: int = 1,
    target_indices: Optional[Sequence[int]] = None,
    audit: Optional[AuditTrail] = None,
) -> list[AttackVerdict]:
    """Threshold the metric of each target prediction vector.

    `calibration` is (member metric values, non-member metric values) computed on
    the attacker's own data.
    """
    threshold = choose_threshold(metric, *calibration)
    logger.info("%s threshold %.6f (balanced accuracy %.3f)", threshold.metric.value, threshold.tau, threshold.balanced_accuracy)
    if audit is not None:
        audit.record(AuditEvent.THRESHOLD, metric=threshold.metric, tau=threshold.tau, balanced_accuracy=threshold.balanced_accuracy)

    targets = np.asarray(targets, dtype=np.float64)
    if targets.size == 0:
        return []
    values = METRICS[threshold.metric](targets)
    members = threshold.is_member(values)
    indices = range(len(values)) if target_indices is None else target_indices
    return [
        AttackVerdict(int(i), member_label if is_member else NONMEMBER, float(value))
        for i, is_member, value in zip(indices, members, values)
    ]


class EntropyTraceObserver:
    """Mean prediction entropy of member and non-member samples after each round."""

    def __init__(self, members: Dataset, nonmembers: Dataset):
        self.members = members
        self.nonmembers = nonmembers
        self.points: list[EntropyTracePoint] = []

    def on_round(self, log: RoundLog) -> None:
        model = log.global_model_snapshot
        self.points.append(EntropyTracePoint(
            round=log.round,
            member_entropy=float(np.mean(prediction_entropies(predict_proba(model, self.members.features)))),
            nonmember_entropy=float(np.mean(prediction_entropies(predict_proba(model, self.nonmembers.features)))),
        ))


class MetricAttack(BaseAttack):
    """Confidence or entropy thresholding, calibrated on the attacker's own data."""

    def __init__(self, metric: MetricKind):
        self.metric = MetricKind(metric)
        kind = AttackKind.METRIC_CONFIDENCE if self.metric == MetricKind.CONFIDENCE else AttackKind.METRIC_ENTROPY
        super().__init__(kind, f"threshold on prediction {self.metric.value}")

    async def execute(self, context: AttackContext) -> AttackOutcome:
        victim = context.victim_ids[0]
        score = METRICS[self.metric]
        calibration = (
            score(context.predictions(context.attacker.train_data)),
            score(context.predictions(context.split.shadow_train)),
        )
        rng = np.random.default_rng(derive_seed(context.seed, "targets"))
        targets, truth = self.build_targets({victim: context.clients[victim].train_data}, context.split.shared_test, context, rng)
        verdicts = metric_attack(
            self.metric,
            calibration,
            context.predictions(targets),
            member_label=victim,
            target_indices=targets.index,
            audit=context.audit,
        )
        labels = [NONMEMBER, victim]
        return AttackOutcome(
            kind=self.kind,
            verdicts=verdicts,
            ground_truth=truth,
            labels=labels,
            metrics=evaluate_attack(verdicts, truth, labels),
            diagnostics=self.collect_diagnostics(context.audit),
        )


def create_metric_attack(metric: MetricKind) -> MetricAttack:
    """Create and return a metric attack runner."""
    return MetricAttack(metric)
