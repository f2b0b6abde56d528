"""Membership inference attacks against the swarm's global model."""

from ..schemas import AttackKind, MetricKind
from .base import NONMEMBER, AttackContext, AttackOutcome, AttackVerdict, BaseAttack
from .differential import create_differential_attack, differential_attack_v1, differential_attack_v2
from .evaluation import evaluate_attack
from .metric import (
    EntropyTraceObserver,
    create_metric_attack,
    metric_attack,
    prediction_confidence,
    prediction_entropy,
)
from .mmd import mmd
from .shadow import (
    AttackModel,
    create_shadow_attack,
    one_to_multi_attack,
    shadow_attack_infer,
    shadow_attack_train,
)


def create_attack(kind: AttackKind) -> BaseAttack:
    """Runner for an attack selector."""
    kind = AttackKind(kind)
    if kind == AttackKind.METRIC_CONFIDENCE:
        return create_metric_attack(MetricKind.CONFIDENCE)
    if kind == AttackKind.METRIC_ENTROPY:
        return create_metric_attack(MetricKind.ENTROPY)
    if kind in (AttackKind.DIFFERENTIAL_V1, AttackKind.DIFFERENTIAL_V2):
        return create_differential_attack(kind)
    return create_shadow_attack(kind)


__all__ = [
    "NONMEMBER",
    "AttackContext",
    "AttackModel",
    "AttackOutcome",
    "AttackVerdict",
    "BaseAttack",
    "EntropyTraceObserver",
    "create_attack",
    "differential_attack_v1",
    "differential_attack_v2",
    "evaluate_attack",
    "metric_attack",
    "mmd",
    "one_to_multi_attack",
    "prediction_confidence",
    "prediction_entropy",
    "shadow_attack_infer",
    "shadow_attack_train",
]
