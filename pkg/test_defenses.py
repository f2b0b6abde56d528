import pytest
from pydantic import ValidationError

from conftest import OVERFIT_TWO_LAYER_SCENARIO
from src.defenses import apply_defense, defense_comparison, defense_delta
from src.errors import DefenseError
from src.nn import build_layer_specs
from src.schemas import AttackKind, DefenseSpec, TrainConfig

TRAIN = TrainConfig(learning_rate=0.05, epochs=3)


@pytest.fixture
def layers():
    return build_layer_specs(20, [64, 32], 10)


def test_identity_defense_returns_inputs(layers):
    defended, train_cfg = apply_defense(layers, TRAIN, DefenseSpec())
    assert defended == layers
    assert train_cfg == TRAIN


def test_dropout_and_l2_are_applied(layers):
    defended, train_cfg = apply_defense(layers, TRAIN, DefenseSpec(dropout_rates=[0.25, 0.5], l2_lambda=0.001))
    assert [layer.dropout_rate for layer in defended] == [0.25, 0.5, 0.0]
    assert train_cfg.l2_lambda == 0.001
    assert train_cfg.learning_rate == TRAIN.learning_rate


def test_dropout_prefix_semantics(layers):
    defended, train_cfg = apply_defense(layers, TRAIN, DefenseSpec(dropout_rates=[0.5]))
    assert [layer.dropout_rate for layer in defended] == [0.5, 0.0, 0.0]
    assert train_cfg.l2_lambda == 0.0


def test_output_layer_never_gets_dropout(layers):
    with pytest.raises(DefenseError):
        apply_defense(layers, TRAIN, DefenseSpec(dropout_rates=[0.1, 0.1, 0.1]))


def test_inputs_are_not_modified(layers):
    before = [layer.model_copy() for layer in layers]
    apply_defense(layers, TRAIN, DefenseSpec(dropout_rates=[0.3, 0.3], l2_lambda=0.01))
    assert layers == before
    assert TRAIN.l2_lambda == 0.0


def test_dropout_rates_must_be_below_one():
    with pytest.raises(ValidationError):
        DefenseSpec(dropout_rates=[1.0])


def test_identity_comparison_has_zero_delta(make_scenario):
    paired = defense_comparison(make_scenario(), DefenseSpec())
    assert paired.initial_states_match
    assert paired.delta.model_dump() == {
        "attack_accuracy": 0.0,
        "macro_f1": 0.0,
        "train_accuracy": 0.0,
        "test_accuracy": 0.0,
        "generalization_gap": 0.0,
    }
    assert paired.defended.deterministic_json() == paired.undefended.deterministic_json()


def test_l2_comparison_reports_differences(make_scenario):
    paired = defense_comparison(make_scenario(), DefenseSpec(l2_lambda=0.001), attack=AttackKind.METRIC_ENTROPY)
    assert paired.attack == AttackKind.METRIC_ENTROPY
    assert paired.initial_states_match
    assert paired.defended.scenario["defense"]["l2_lambda"] == 0.001
    assert paired.undefended.scenario["defense"]["l2_lambda"] == 0.0
    assert paired.delta == defense_delta(paired.defended, paired.undefended)
    assert paired.delta.attack_accuracy == pytest.approx(
        paired.defended.metrics.accuracy - paired.undefended.metrics.accuracy
    )


def test_dropout_narrows_the_gap_on_an_overfit_swarm(make_scenario):
    paired = defense_comparison(make_scenario(OVERFIT_TWO_LAYER_SCENARIO), DefenseSpec(dropout_rates=[0.25, 0.5]))
    assert paired.defended.swarm.generalization_gap < paired.undefended.swarm.generalization_gap
    assert paired.delta.generalization_gap < 0
    assert paired.delta.attack_accuracy <= 0.02


def test_weight_decay_on_an_overfit_swarm_shares_the_initial_state(make_scenario):
    paired = defense_comparison(make_scenario(OVERFIT_TWO_LAYER_SCENARIO), DefenseSpec(l2_lambda=0.001))
    assert paired.initial_states_match
    assert paired.delta == defense_delta(paired.defended, paired.undefended)
    assert paired.defended.swarm.final_fingerprint != paired.undefended.swarm.final_fingerprint
