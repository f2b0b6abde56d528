import math
from types import SimpleNamespace

import numpy as np
import pytest
from rich.console import Console

from src.attacks import (
    NONMEMBER,
    AttackVerdict,
    create_attack,
    differential_attack_v1,
    differential_attack_v2,
    evaluate_attack,
    metric_attack,
    one_to_multi_attack,
    prediction_confidence,
    prediction_entropy,
    shadow_attack_infer,
    shadow_attack_train,
)
from src.attacks.base import BaseAttack
from src.attacks.differential import DifferentialAttack
from src.attacks.metric import MetricAttack, balanced_accuracies, candidate_thresholds, choose_threshold, prediction_entropies
from src.attacks.shadow import ShadowAttack
from src.audit import AuditEvent, AuditTrail
from src.datasets import Dataset, generate_synthetic, make_swarm_split
from src.errors import AttackError
from src.nn import build_layer_specs, init_model, train_local
from src.schemas import AttackKind, AttackModelConfig, MetricKind, MMDConfig, PartitionSpec, ScenarioConfig, TrainConfig
from src.swarm import ClientState

ATTACK_CFG = AttackModelConfig(hidden=[16], epochs=30, learning_rate=0.01, batch_size=8)


@pytest.fixture(scope="module")
def overfit_world():
    """A global model that has memorized both clients' data, plus the split around it."""
    data = generate_synthetic(class_count=10, per_class=30, dim=20, spread=1.0, seed=1)
    split = make_swarm_split(data, PartitionSpec(client_count=2, seed=3), seed=3)
    model = init_model(build_layer_specs(data.dim, [64], data.class_count), seed=0)
    global_model = train_local(
        model,
        Dataset.concat(split.client_train),
        TrainConfig(learning_rate=0.05, epochs=60, batch_size=16, seed=1),
    )
    attacker = ClientState(2, split.client_train[1], global_model, 0.5, 99)
    return SimpleNamespace(split=split, model=global_model, attacker=attacker)


def _peaked(rng, peak, count, classes=4, strength=20.0):
    concentration = np.ones(classes)
    concentration[peak] = strength
    return rng.dirichlet(concentration, size=count)


# Metric attacks

@pytest.mark.parametrize("vector,expected", [([1, 0, 0], 1.0), ([0.25] * 4, 0.25), ([0.7, 0.2, 0.1], 0.7)])
def test_prediction_confidence(vector, expected):
    assert prediction_confidence(vector) == pytest.approx(expected)


@pytest.mark.parametrize("vector,expected", [([1, 0, 0], 0.0), ([0.25] * 4, math.log(4)), ([0.5, 0.5, 0, 0], math.log(2))])
def test_prediction_entropy(vector, expected):
    assert prediction_entropy(vector) == pytest.approx(expected, abs=1e-5)


def test_entropy_of_one_hot_is_exactly_zero():
    assert prediction_entropy([0.0, 1.0, 0.0]) == 0.0


def test_metric_ranges():
    preds = np.random.default_rng(0).dirichlet(np.ones(6), size=50)
    entropies = prediction_entropies(preds)
    assert np.all(entropies >= 0.0) and np.all(entropies <= math.log(6) + 1e-12)
    assert all(1 / 6 <= prediction_confidence(p) <= 1.0 for p in preds)


def test_separable_confidence_calibration():
    audit = AuditTrail()
    verdicts = metric_attack(
        MetricKind.CONFIDENCE,
        ([0.9] * 5, [0.6] * 5),
        np.array([[0.95, 0.05], [0.55, 0.45]]),
        audit=audit,
    )
    threshold = audit.latest(AuditEvent.THRESHOLD)
    assert 0.6 < threshold["tau"] < 0.9
    assert threshold["balanced_accuracy"] == 1.0
    assert [v.predicted for v in verdicts] == [1, NONMEMBER]


def test_entropy_threshold_direction():
    verdicts = metric_attack(
        MetricKind.ENTROPY,
        ([0.1, 0.2], [1.0, 1.2]),
        np.array([[0.99, 0.01], [0.5, 0.5]]),
        member_label=4,
    )
    assert [v.predicted for v in verdicts] == [4, NONMEMBER]


def test_identical_calibration_is_uninformative():
    threshold = choose_threshold(MetricKind.CONFIDENCE, [0.7] * 4, [0.7] * 4)
    assert threshold.balanced_accuracy == 0.5
    targets = np.random.default_rng(1).dirichlet(np.ones(3), size=20)
    verdicts = metric_attack(MetricKind.CONFIDENCE, ([0.7] * 4, [0.7] * 4), targets)
    assert all(v.is_member == (v.score >= 0.7) for v in verdicts)


def test_threshold_is_optimal_over_grid():
    rng = np.random.default_rng(2)
    members, nonmembers = rng.uniform(0.4, 1.0, size=40), rng.uniform(0.2, 0.9, size=35)
    for metric in MetricKind:
        chosen = choose_threshold(metric, members, nonmembers)
        grid = candidate_thresholds(np.concatenate([members, nonmembers]))
        scores = balanced_accuracies(metric, grid, members, nonmembers)
        assert chosen.balanced_accuracy == pytest.approx(scores.max())
        assert chosen.tau == pytest.approx(grid[np.flatnonzero(scores == scores.max())[0]])


def test_metric_attack_needs_calibration():
    with pytest.raises(AttackError):
        metric_attack(MetricKind.CONFIDENCE, ([], [0.5]), np.array([[0.5, 0.5]]))


def test_metric_attack_empty_targets():
    assert metric_attack(MetricKind.ENTROPY, ([0.1], [0.9]), np.zeros((0, 3))) == []


# Evaluation

def _verdicts(predicted):
    return [AttackVerdict(i, int(p), 0.0) for i, p in enumerate(predicted)]


def test_evaluate_all_correct():
    truth = [0, 1, 1, 0, 1]
    metrics = evaluate_attack(_verdicts(truth), truth)
    assert metrics.accuracy == 1.0 and metrics.macro_f1 == 1.0
    assert metrics.baseline == 0.5
    assert metrics.confusion_matrix == [[2, 0], [0, 3]]


def test_evaluate_shuffled_truth_is_chance():
    rng = np.random.default_rng(0)
    truth = np.repeat([0, 1], 500)
    metrics = evaluate_attack(_verdicts(rng.permutation(truth)), truth.tolist())
    assert metrics.accuracy == pytest.approx(0.5, abs=0.06)


def test_evaluate_four_way_baseline():
    truth = [0, 1, 2, 3] * 5
    guesses = np.random.default_rng(1).integers(0, 4, size=20)
    metrics = evaluate_attack(_verdicts(guesses), truth, labels=[0, 1, 2, 3])
    assert metrics.baseline == 0.25
    assert len(metrics.per_class) == 4
    assert metrics.n_targets == 20


def test_evaluate_single_class_degenerate():
    metrics = evaluate_attack(_verdicts([1, 1, 1]), [1, 1, 1], labels=[0, 1, 2])
    assert metrics.accuracy == 1.0
    assert metrics.macro_f1 == pytest.approx(1.0 / 3.0)
    assert metrics.baseline == pytest.approx(1.0 / 3.0)


def test_evaluate_length_mismatch():
    with pytest.raises(AttackError):
        evaluate_attack(_verdicts([0, 1]), [0])


def test_evaluate_empty():
    metrics = evaluate_attack([], [], labels=[0, 1])
    assert metrics.accuracy == 0.0 and metrics.n_targets == 0


# Differential attacks

def test_v1_rejects_nonmember_like_targets():
    rng = np.random.default_rng(3)
    refs = [_peaked(rng, 0, 50), _peaked(rng, 1, 50)]
    nonmember_ref = rng.dirichlet(np.full(4, 5.0), size=50)
    targets = rng.dirichlet(np.full(4, 5.0), size=200)
    verdicts = differential_attack_v1(targets, refs, nonmember_ref, MMDConfig())
    assert len(verdicts) == 200
    assert np.mean([v.predicted == NONMEMBER for v in verdicts]) >= 0.8


def test_v1_attributes_members_to_their_owner():
    rng = np.random.default_rng(4)
    refs = [_peaked(rng, 0, 50), _peaked(rng, 1, 50), _peaked(rng, 2, 50)]
    nonmember_ref = rng.dirichlet(np.full(4, 5.0), size=50)
    targets = _peaked(rng, 1, 200)
    verdicts = differential_attack_v1(targets, refs, nonmember_ref, MMDConfig(), client_ids=[1, 2, 3])
    claimed = [v.predicted for v in verdicts if v.predicted != NONMEMBER]
    assert claimed
    assert np.mean([owner == 2 for owner in claimed]) >= 0.9


def test_v1_single_client_is_sign_of_gap():
    rng = np.random.default_rng(5)
    targets = np.vstack([_peaked(rng, 0, 20), rng.dirichlet(np.full(4, 5.0), size=20)])
    verdicts = differential_attack_v1(targets, [_peaked(rng, 0, 30)], rng.dirichlet(np.full(4, 5.0), size=30), MMDConfig())
    for verdict in verdicts:
        assert verdict.predicted == (1 if verdict.score > 0 else NONMEMBER)


def test_v1_depends_only_on_multisets():
    rng = np.random.default_rng(6)
    refs = [_peaked(rng, 0, 30), _peaked(rng, 2, 30)]
    nonmember_ref = rng.dirichlet(np.full(4, 3.0), size=40)
    targets = np.vstack([_peaked(rng, 0, 10), rng.dirichlet(np.full(4, 3.0), size=10)])
    cfg = MMDConfig()
    first = differential_attack_v1(targets, refs, nonmember_ref, cfg)
    shuffled = differential_attack_v1(
        targets,
        [r[rng.permutation(len(r))] for r in refs],
        nonmember_ref[rng.permutation(len(nonmember_ref))],
        cfg,
    )
    assert first == shuffled


def test_v1_records_every_distance():
    rng = np.random.default_rng(7)
    audit = AuditTrail()
    differential_attack_v1(rng.dirichlet(np.ones(4), size=5), [_peaked(rng, 0, 10)], rng.dirichlet(np.ones(4), size=10), MMDConfig(), audit=audit)
    assert len(audit.events(AuditEvent.DIFFERENTIAL_V1)) == 5
    assert audit.latest(AuditEvent.SIGMA)["sigma"] > 0


def test_v2_attributes_non_iid_members():
    rng = np.random.default_rng(8)
    refs = [_peaked(rng, k, 50) for k in range(3)]
    nonmember_ref = rng.dirichlet(np.full(4, 5.0), size=50)
    truth = np.repeat([1, 2, 3], 30)
    targets = np.vstack([_peaked(rng, k - 1, 30) for k in (1, 2, 3)])
    verdicts = differential_attack_v2(targets, refs, nonmember_ref, MMDConfig(), client_ids=[1, 2, 3])
    correct = np.mean([v.predicted == t for v, t in zip(verdicts, truth)])
    assert correct > 2 * (1 / 4)


def test_v2_attribution_follows_the_target_not_the_set_sizes():
    rng = np.random.default_rng(10)
    refs = [_peaked(rng, 0, 40), _peaked(rng, 1, 120), rng.dirichlet(np.ones(4), size=60)]
    nonmember_ref = rng.dirichlet(np.full(4, 5.0), size=50)
    targets = np.vstack([_peaked(rng, 0, 20), _peaked(rng, 1, 20)])
    audit = AuditTrail()
    differential_attack_v2(targets, refs, nonmember_ref, MMDConfig(), client_ids=[1, 2, 3], audit=audit)
    records = audit.events(AuditEvent.DIFFERENTIAL_V2)
    assert len(records) == 40
    owners = np.array([int(np.argmax(r.payload["effects"])) for r in records])
    assert np.mean(owners == np.repeat([0, 1], 20)) >= 0.8
    for record in records:
        assert record.payload["predicted"] in (0, 1 + int(np.argmax(record.payload["effects"])))


def test_v2_edge_cases():
    rng = np.random.default_rng(9)
    refs = [_peaked(rng, 0, 10), _peaked(rng, 1, 10)]
    nonmember_ref = rng.dirichlet(np.ones(4), size=10)
    assert differential_attack_v2(np.zeros((0, 4)), refs, nonmember_ref, MMDConfig()) == []
    with pytest.raises(AttackError):
        differential_attack_v2(refs[0][:3], refs[:1], nonmember_ref, MMDConfig())
    with pytest.raises(AttackError):
        differential_attack_v1(refs[0][:3], [np.zeros((0, 4))], nonmember_ref, MMDConfig())


# Shadow attacks

def test_shadow_attack_trains_on_attacker_data(overfit_world):
    audit = AuditTrail()
    model = shadow_attack_train(overfit_world.attacker, overfit_world.model, overfit_world.split, ATTACK_CFG, seed=1, audit=audit)
    assert model.labels == [NONMEMBER, 1] and model.is_binary
    counts = audit.latest(AuditEvent.ATTACK_MODEL)["class_counts"]
    expected = min(len(overfit_world.attacker.train_data), len(overfit_world.split.shadow_train))
    assert counts == {"0": expected, "1": expected}


def test_shadow_attack_recognizes_attacker_members(overfit_world):
    model = shadow_attack_train(overfit_world.attacker, overfit_world.model, overfit_world.split, ATTACK_CFG, seed=1)
    verdicts = shadow_attack_infer(model, overfit_world.model, overfit_world.attacker.train_data)
    assert np.mean([v.is_member for v in verdicts]) > 0.5


def test_shadow_attack_infer_is_deterministic(overfit_world):
    model = shadow_attack_train(overfit_world.attacker, overfit_world.model, overfit_world.split, ATTACK_CFG, seed=2, member_label=1)
    targets = overfit_world.split.shared_test
    first = shadow_attack_infer(model, overfit_world.model, targets)
    assert first == shadow_attack_infer(model, overfit_world.model, targets)
    assert [v.target_index for v in first] == targets.index.tolist()
    assert all(0.0 <= v.score <= 1.0 for v in first)


def test_shadow_attack_infer_edge_cases(overfit_world):
    model = shadow_attack_train(overfit_world.attacker, overfit_world.model, overfit_world.split, ATTACK_CFG, seed=1)
    empty = Dataset(np.zeros((0, 20)), np.zeros(0, dtype=int), 10)
    assert shadow_attack_infer(model, overfit_world.model, empty) == []
    narrow = Dataset(np.zeros((2, 5)), [0, 1], 10)
    with pytest.raises(AttackError):
        shadow_attack_infer(model, overfit_world.model, narrow)


def test_shadow_attack_member_label_follows_victim(overfit_world):
    model = shadow_attack_train(overfit_world.attacker, overfit_world.model, overfit_world.split, ATTACK_CFG, seed=1, member_label=5)
    verdicts = shadow_attack_infer(model, overfit_world.model, overfit_world.split.shared_test)
    assert {v.predicted for v in verdicts} <= {NONMEMBER, 5}


def test_one_to_multi_attack_labels(overfit_world):
    split = overfit_world.split
    attacker = ClientState(3, split.shadow_test, overfit_world.model, 0.0, 1)
    audit = AuditTrail()
    verdicts = one_to_multi_attack(
        attacker,
        overfit_world.model,
        {NONMEMBER: split.shadow_train, 1: split.client_train[0], 2: split.client_train[1]},
        split.shared_test,
        ATTACK_CFG,
        seed=4,
        audit=audit,
    )
    assert len(verdicts) == len(split.shared_test)
    assert {v.predicted for v in verdicts} <= {0, 1, 2}
    assert audit.latest(AuditEvent.ATTACK_MODEL)["labels"] == [0, 1, 2]


def test_one_to_multi_attack_preconditions(overfit_world):
    split = overfit_world.split
    attacker = overfit_world.attacker
    with pytest.raises(AttackError):
        one_to_multi_attack(attacker, overfit_world.model, {1: split.client_train[0], 3: split.shadow_test}, split.shared_test, ATTACK_CFG)
    with pytest.raises(AttackError):
        one_to_multi_attack(attacker, overfit_world.model, {0: split.shadow_train, 1: split.client_train[0]}, split.shared_test, ATTACK_CFG)
    with pytest.raises(AttackError):
        one_to_multi_attack(
            attacker,
            overfit_world.model,
            {0: split.shadow_train, 1: split.client_train[0], 2: split.client_train[1]},
            split.shared_test,
            ATTACK_CFG,
        )


# Runners

@pytest.mark.parametrize("kind,runner", [
    (AttackKind.SHADOW_ONE_TO_ONE, ShadowAttack),
    (AttackKind.SHADOW_MULTI_TO_ONE, ShadowAttack),
    (AttackKind.SHADOW_ONE_TO_MULTI, ShadowAttack),
    (AttackKind.METRIC_CONFIDENCE, MetricAttack),
    (AttackKind.METRIC_ENTROPY, MetricAttack),
    (AttackKind.DIFFERENTIAL_V1, DifferentialAttack),
    (AttackKind.DIFFERENTIAL_V2, DifferentialAttack),
])
def test_create_attack_dispatch(kind, runner):
    attack = create_attack(kind)
    assert isinstance(attack, runner)
    assert attack.kind == kind
    assert attack.describe().startswith(kind.value)


def test_build_targets_balances_classes():
    data = generate_synthetic(3, 20, 2, 1.0, seed=0)
    context = SimpleNamespace(scenario=ScenarioConfig(targets_per_class=7))
    attack = BaseAttack(AttackKind.DIFFERENTIAL_V1, "test")
    rng = np.random.default_rng(0)
    members = {1: data.subset(range(0, 30)), 2: data.subset(range(30, 40))}
    targets, truth = attack.build_targets(members, data.subset(range(40, 60)), context, rng)
    assert len(targets) == 21
    assert truth == [0] * 7 + [1] * 7 + [2] * 7


def test_build_targets_unbalanced_uses_whole_pools():
    data = generate_synthetic(3, 20, 2, 1.0, seed=0)
    context = SimpleNamespace(scenario=ScenarioConfig(balance_attack_set=False))
    attack = BaseAttack(AttackKind.DIFFERENTIAL_V1, "test")
    targets, truth = attack.build_targets({1: data.subset(range(0, 45))}, data.subset(range(45, 60)), context, np.random.default_rng(0))
    assert len(targets) == 60 and truth.count(1) == 45


def test_halve_is_disjoint_and_seeded():
    data = generate_synthetic(2, 5, 2, 1.0, seed=0)
    first, second = BaseAttack.halve(data, np.random.default_rng(1))
    assert len(first) == 5 and len(second) == 5
    assert not set(first.index.tolist()) & set(second.index.tolist())
    again, _ = BaseAttack.halve(data, np.random.default_rng(1))
    assert again.index.tolist() == first.index.tolist()


def test_audit_trail_summary_and_render():
    audit = AuditTrail()
    audit.record(AuditEvent.SIGMA, sigma=np.float64(0.5))
    audit.record(AuditEvent.THRESHOLD, tau=0.3, values=np.array([1, 2]))
    summary = audit.get_summary()
    assert summary["total"] == 2
    assert summary["event_breakdown"] == {"sigma": 1, "threshold": 1}
    assert audit.to_records()[1] == {"event": "threshold", "tau": 0.3, "values": [1, 2]}
    console = Console(record=True, width=80)
    audit.render(console)
    assert "sigma" in console.export_text()
    disabled = AuditTrail(enabled=False)
    disabled.record(AuditEvent.SIGMA, sigma=1.0)
    assert disabled.get_summary()["total"] == 0
