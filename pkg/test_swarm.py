from collections import Counter

import numpy as np
import pytest

from src.datasets import generate_synthetic, make_swarm_split, partition
from src.errors import SwarmError
from src.nn import ModelParams, accuracy, build_layer_specs, init_model, train_local
from src.schemas import PartitionSpec, SwarmConfig, TrainConfig
from src.seeding import ScenarioSeeds
from src.swarm import ClientState, SnapshotRecorder, aggregate, elect_aggregator, run_swarm


def _random_models(rng, count, specs):
    return [init_model(specs, int(rng.integers(0, 2 ** 32))) for _ in range(count)]


def _clients(parts, specs, seed=0, same_init=True, same_seeds=False):
    seeds = ScenarioSeeds.from_seed(seed, len(parts))
    return [
        ClientState(
            id=k + 1,
            train_data=part,
            model=init_model(specs, seeds.init if same_init else seeds.clients[k]),
            weight=1.0 / len(parts),
            seed=seeds.clients[0] if same_seeds else seeds.clients[k],
        )
        for k, part in enumerate(parts)
    ]


def test_round_robin_election():
    cfg = SwarmConfig(election="round_robin")
    rng = np.random.default_rng(0)
    assert [elect_aggregator(r, cfg, rng, 3) for r in (1, 2, 3, 4)] == [1, 2, 3, 1]


def test_seeded_election_is_reproducible():
    cfg = SwarmConfig(election="seeded_random")
    first = [elect_aggregator(r, cfg, np.random.default_rng(42), 4) for r in range(1, 30)]
    rng_a, rng_b = np.random.default_rng(42), np.random.default_rng(42)
    assert [elect_aggregator(r, cfg, rng_a, 4) for r in range(1, 30)] == [elect_aggregator(r, cfg, rng_b, 4) for r in range(1, 30)]
    assert all(1 <= a <= 4 for a in first)


def test_seeded_election_is_uniform():
    cfg = SwarmConfig(election="seeded_random")
    rng = np.random.default_rng(7)
    counts = Counter(elect_aggregator(r, cfg, rng, 3) for r in range(1, 10001))
    assert set(counts) == {1, 2, 3}
    assert all(abs(count - 3333) <= 200 for count in counts.values())


def test_election_needs_two_clients():
    with pytest.raises(SwarmError):
        elect_aggregator(1, SwarmConfig(), np.random.default_rng(0), 1)


def test_aggregate_equal_weights(dense_layer):
    merged = aggregate([dense_layer([[1.0, 3.0]]), dense_layer([[3.0, 1.0]])], [0.5, 0.5])
    np.testing.assert_array_equal(merged.weights[0], [[2.0, 2.0]])


def test_aggregate_identical_models_is_identity():
    model = init_model(build_layer_specs(4, [6], 3), seed=1)
    merged = aggregate([model.copy(), model.copy(), model.copy()], [0.2, 0.3, 0.5])
    np.testing.assert_allclose(merged.flat(), model.flat(), atol=1e-15)


def test_aggregate_one_hot_weights_returns_first_exactly():
    rng = np.random.default_rng(3)
    models = _random_models(rng, 3, build_layer_specs(4, [6], 3))
    assert aggregate(models, [1.0, 0.0, 0.0]).bit_equal(models[0])


def test_aggregate_equal_weights_is_mean():
    rng = np.random.default_rng(4)
    models = _random_models(rng, 4, build_layer_specs(5, [7, 3], 2))
    merged = aggregate(models, [0.25] * 4)
    mean = np.mean([m.flat() for m in models], axis=0)
    assert np.max(np.abs(merged.flat() - mean)) <= 1e-12


def test_aggregate_is_permutation_equivariant():
    rng = np.random.default_rng(5)
    specs = build_layer_specs(3, [4], 2)
    for _ in range(20):
        models = _random_models(rng, 4, specs)
        weights = rng.dirichlet(np.ones(4))
        weights = weights / weights.sum()
        order = rng.permutation(4)
        merged = aggregate(models, weights)
        permuted = aggregate([models[i] for i in order], weights[order])
        assert np.max(np.abs(merged.flat() - permuted.flat())) <= 1e-12


def test_aggregate_rejects_bad_inputs(dense_layer):
    a, b = dense_layer([[1.0, 2.0]]), dense_layer([[1.0, 2.0, 3.0]])
    with pytest.raises(SwarmError):
        aggregate([a, b], [0.5, 0.5])
    with pytest.raises(SwarmError):
        aggregate([a, a.copy()], [0.5, 0.6])
    with pytest.raises(SwarmError):
        aggregate([], [])


def test_zero_local_epochs_averages_initial_models(blobs):
    parts = partition(blobs, PartitionSpec(client_count=3, seed=0))
    specs = build_layer_specs(blobs.dim, [8], blobs.class_count)
    clients = _clients(parts, specs, same_init=False)
    weights = [0.5, 0.3, 0.2]
    for client, weight in zip(clients, weights):
        client.weight = weight
    expected = aggregate([c.model for c in clients], weights)
    final, logs = run_swarm(clients, SwarmConfig(rounds=1, local_epochs=0, weights=weights), blobs)
    assert final.bit_equal(expected)
    assert len(logs) == 1 and logs[0].aggregator_id == 1


def test_configured_weights_override_client_weights(blobs):
    parts = partition(blobs, PartitionSpec(client_count=2, seed=0))
    specs = build_layer_specs(blobs.dim, [8], blobs.class_count)
    clients = _clients(parts, specs, same_init=False)
    assert [c.weight for c in clients] == [0.5, 0.5]
    expected = aggregate([c.model for c in clients], [0.9, 0.1])
    uniform = aggregate([c.model for c in clients], [0.5, 0.5])
    final, _ = run_swarm(clients, SwarmConfig(rounds=1, local_epochs=0, weights=[0.9, 0.1]), blobs)
    assert final.bit_equal(expected)
    assert not final.bit_equal(uniform)
    assert [c.weight for c in clients] == [0.9, 0.1]


def test_configured_weights_must_match_client_count(blobs):
    parts = partition(blobs, PartitionSpec(client_count=2, seed=0))
    clients = _clients(parts, build_layer_specs(blobs.dim, [8], blobs.class_count))
    with pytest.raises(SwarmError):
        run_swarm(clients, SwarmConfig(rounds=1, weights=[0.2, 0.3, 0.5]), blobs)


def test_identical_clients_stay_identical(blobs):
    specs = build_layer_specs(blobs.dim, [8], blobs.class_count)
    clients = _clients([blobs, blobs], specs, same_seeds=True)
    final, _ = run_swarm(clients, SwarmConfig(rounds=3, local_epochs=1), blobs)
    assert clients[0].model.bit_equal(clients[1].model)
    assert final.bit_equal(clients[0].model)


def test_swarm_reaches_high_shared_test_accuracy(blobs):
    split = make_swarm_split(blobs, PartitionSpec(client_count=3, seed=2), seed=2)
    specs = build_layer_specs(blobs.dim, [16], blobs.class_count)
    clients = _clients(split.client_train, specs, seed=2)
    cfg = SwarmConfig(rounds=20, local_epochs=1, train_cfg=TrainConfig(learning_rate=0.1, batch_size=8))
    _, logs = run_swarm(clients, cfg, split.shared_test)
    assert logs[-1].shared_test_acc >= 0.85
    assert all(1 <= log.aggregator_id <= 3 for log in logs)


def test_swarm_beats_every_client_trained_alone():
    data = generate_synthetic(class_count=10, per_class=50, dim=20, spread=0.5, seed=0)
    split = make_swarm_split(data, PartitionSpec(client_count=4, seed=0), seed=0)
    specs = build_layer_specs(data.dim, [32], data.class_count)
    train_cfg = TrainConfig(learning_rate=0.05, batch_size=16)
    clients = _clients(split.client_train, specs)
    start = clients[0].model.copy()
    final, _ = run_swarm(clients, SwarmConfig(rounds=10, local_epochs=2, train_cfg=train_cfg), split.shared_test)
    alone = [
        accuracy(train_local(start, part, train_cfg.model_copy(update={"epochs": 20, "seed": k})), split.shared_test)
        for k, part in enumerate(split.client_train)
    ]
    assert accuracy(final, split.shared_test) > max(alone)


def test_swarm_is_bit_reproducible(blobs):
    parts = partition(blobs, PartitionSpec(client_count=2, seed=1))
    specs = build_layer_specs(blobs.dim, [8], blobs.class_count, dropout_rates=[0.25])
    cfg = SwarmConfig(rounds=3, local_epochs=2, election="seeded_random", seed=9)
    first_model, first_logs = run_swarm(_clients(parts, specs), cfg, blobs)
    second_model, second_logs = run_swarm(_clients(parts, specs), cfg, blobs)
    assert first_model.bit_equal(second_model)
    assert [log.to_record() for log in first_logs] == [log.to_record() for log in second_logs]


def test_concurrent_training_matches_sequential(blobs):
    parts = partition(blobs, PartitionSpec(client_count=3, seed=1))
    specs = build_layer_specs(blobs.dim, [8], blobs.class_count)
    threaded, _ = run_swarm(_clients(parts, specs), SwarmConfig(rounds=2, local_epochs=1, concurrent=True), blobs)
    sequential, _ = run_swarm(_clients(parts, specs), SwarmConfig(rounds=2, local_epochs=1, concurrent=False), blobs)
    assert threaded.bit_equal(sequential)


class _Vandal:
    """Observer that scribbles over whatever it is handed."""

    def on_round(self, log):
        for w in log.global_model_snapshot.weights:
            w += 1.0


def test_observers_are_read_only(blobs):
    parts = partition(blobs, PartitionSpec(client_count=2, seed=1))
    specs = build_layer_specs(blobs.dim, [8], blobs.class_count)
    cfg = SwarmConfig(rounds=3, local_epochs=1)
    recorder = SnapshotRecorder()
    observed, logs = run_swarm(_clients(parts, specs), cfg, blobs, observers=[_Vandal(), recorder])
    unobserved, _ = run_swarm(_clients(parts, specs), cfg, blobs)
    assert observed.bit_equal(unobserved)
    assert sorted(recorder.snapshots) == [1, 2, 3]
    assert recorder.snapshot(3).bit_equal(logs[-1].global_model_snapshot)
    with pytest.raises(SwarmError):
        recorder.snapshot(4)


def test_run_swarm_rejects_mismatched_clients(blobs):
    parts = partition(blobs, PartitionSpec(client_count=2, seed=1))
    clients = _clients(parts, build_layer_specs(blobs.dim, [8], blobs.class_count))
    clients[1].model = init_model(build_layer_specs(blobs.dim, [4], blobs.class_count), seed=0)
    with pytest.raises(SwarmError):
        run_swarm(clients, SwarmConfig(rounds=1), blobs)
    with pytest.raises(SwarmError):
        run_swarm(clients[:1], SwarmConfig(rounds=1), blobs)


def test_round_log_records_are_json_ready(blobs):
    parts = partition(blobs, PartitionSpec(client_count=2, seed=1))
    _, logs = run_swarm(_clients(parts, build_layer_specs(blobs.dim, [8], blobs.class_count)), SwarmConfig(rounds=2, local_epochs=1), blobs)
    record = logs[0].to_record()
    assert set(record) == {"round", "aggregator_id", "global_fingerprint", "per_client_train_acc", "shared_test_acc"}
    assert isinstance(record["global_fingerprint"], str)
    assert isinstance(logs[0].global_model_snapshot, ModelParams)
