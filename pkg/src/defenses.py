"""Dropout and L2 defenses, and same-seed defended/undefended comparisons."""

import asyncio
import logging
from typing import Optional, Sequence

from .errors import DefenseError
from .schemas import (
    AttackKind,
    DefenseDelta,
    DefenseSpec,
    ExperimentReport,
    LayerSpec,
    PairedReport,
    ScenarioConfig,
    TrainConfig,
)

logger = logging.getLogger(__name__)


def apply_defense(
    base_layers: Sequence[LayerSpec],
    train_cfg: TrainConfig,
    spec: DefenseSpec,
) -> tuple[list[LayerSpec], TrainConfig]:
    """Dropout after the first len(rates) hidden activations and an L2 override.

    The output layer never gets dropout. Inputs are not modified.
    """
    layers = list(base_layers)
    hidden_count = max(len(layers) - 1, 0)
    if len(spec.dropout_rates) > hidden_count:
        raise DefenseError(f"{len(spec.dropout_rates)} dropout rates for {hidden_count} hidden layers")
    if spec.is_identity:
        return layers, train_cfg

    defended = [
        layer.model_copy(update={"dropout_rate": spec.dropout_rates[k]}) if k < len(spec.dropout_rates) else layer
        for k, layer in enumerate(layers)
    ]
    return defended, train_cfg.model_copy(update={"l2_lambda": spec.l2_lambda})


def defense_delta(defended: ExperimentReport, undefended: ExperimentReport) -> DefenseDelta:
    """Defended minus undefended."""
    return DefenseDelta(
        attack_accuracy=defended.metrics.accuracy - undefended.metrics.accuracy,
        macro_f1=defended.metrics.macro_f1 - undefended.metrics.macro_f1,
        train_accuracy=defended.swarm.final_train_accuracy - undefended.swarm.final_train_accuracy,
        test_accuracy=defended.swarm.final_test_accuracy - undefended.swarm.final_test_accuracy,
        generalization_gap=defended.swarm.generalization_gap - undefended.swarm.generalization_gap,
    )


def defense_comparison(
    cfg: ScenarioConfig,
    defense: DefenseSpec,
    attack: Optional[AttackKind] = None,
) -> PairedReport:
    """Run `cfg` with and without `defense` under the same seeds (arms run concurrently)."""
    from .harness import ScenarioHarness

    return asyncio.run(ScenarioHarness(write_artifacts=False).compare_defense(cfg, defense, attack))
