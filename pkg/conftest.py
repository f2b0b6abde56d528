"""Shared fixtures: small synthetic scenarios and hand-built models."""

import copy
import json
from typing import Any, Dict

import numpy as np
import pytest

from src.datasets import Dataset, generate_synthetic
from src.harness import validate_scenario
from src.nn import ModelParams
from src.schemas import Activation, LayerSpec, ScenarioConfig

TINY_SCENARIO: Dict[str, Any] = {
    "name": "tiny",
    "dataset": {"kind": "synthetic", "class_count": 4, "per_class": 40, "dim": 8, "spread": 0.8},
    "partition": {"mode": "iid", "client_count": 2},
    "swarm": {"rounds": 2, "local_epochs": 2, "train_cfg": {"learning_rate": 0.05, "batch_size": 16}},
    "model": {"hidden": [16]},
    "attack_model": {"hidden": [8], "epochs": 10, "learning_rate": 0.01, "batch_size": 8},
    "targets_per_class": 20,
    "seed": 3,
}

# Few samples per class in a noisy space: clients memorize, the shared test set does not generalize.
OVERFIT_SCENARIO: Dict[str, Any] = {
    "name": "overfit",
    "dataset": {"kind": "synthetic", "class_count": 10, "per_class": 30, "dim": 20, "spread": 1.0},
    "partition": {"mode": "iid", "client_count": 2},
    "swarm": {"rounds": 10, "local_epochs": 10, "train_cfg": {"learning_rate": 0.05, "batch_size": 16}},
    "model": {"hidden": [128]},
    "attack_model": {"hidden": [64, 32], "epochs": 100, "learning_rate": 0.01, "batch_size": 8},
    "targets_per_class": 50,
    "seed": 7,
}


def _merge(base: Dict[str, Any], overrides: Dict[str, Any]) -> Dict[str, Any]:
    merged = copy.deepcopy(base)
    for key, value in overrides.items():
        if isinstance(value, dict) and isinstance(merged.get(key), dict):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


OVERFIT_TWO_LAYER_SCENARIO = _merge(OVERFIT_SCENARIO, {"name": "overfit_two_layer", "model": {"hidden": [128, 64]}})

# Full-batch training from a shared init: the swarm model does not depend on the client count,
# only the attacker's share of the targets does.
BALANCING_SCENARIO = _merge(OVERFIT_SCENARIO, {
    "name": "balancing",
    "dataset": {"per_class": 200},
    "split": {"test_fraction": 0.2, "attacker_fraction": 0.2, "shadow_fraction": 0.2},
    "swarm": {"rounds": 100, "local_epochs": 1, "train_cfg": {"learning_rate": 0.2, "batch_size": 1024}},
    "model": {"hidden": [64]},
    "targets_per_class": 200,
})


@pytest.fixture
def make_scenario():
    """Factory: tiny scenario with nested overrides."""
    def factory(base: Dict[str, Any] = None, **overrides) -> ScenarioConfig:
        return validate_scenario(_merge(base or TINY_SCENARIO, overrides))
    return factory


@pytest.fixture
def scenario_file(tmp_path):
    """Write a scenario document and return its path."""
    def factory(data: Dict[str, Any] = None, name: str = "scenario.json") -> str:
        path = tmp_path / name
        path.write_text(json.dumps(TINY_SCENARIO if data is None else data), encoding="utf-8")
        return str(path)
    return factory


@pytest.fixture
def blobs() -> Dataset:
    return generate_synthetic(class_count=4, per_class=60, dim=10, spread=0.15, seed=11)


@pytest.fixture
def separable_pair() -> Dataset:
    """Two tight, far-apart 2-d clusters."""
    rng = np.random.default_rng(5)
    features = np.vstack([
        rng.normal(loc=(-2.0, -2.0), scale=0.5, size=(40, 2)),
        rng.normal(loc=(2.0, 2.0), scale=0.5, size=(40, 2)),
    ])
    labels = np.repeat([0, 1], 40)
    return Dataset(features, labels, 2)


def dense(weights, biases=None, activation=Activation.IDENTITY) -> ModelParams:
    """Single dense layer from an explicit weight matrix."""
    w = np.asarray(weights, dtype=np.float64)
    b = np.zeros(w.shape[0]) if biases is None else np.asarray(biases, dtype=np.float64)
    spec = LayerSpec(in_dim=w.shape[1], out_dim=w.shape[0], activation=activation)
    return ModelParams((spec,), [w], [b])


@pytest.fixture
def dense_layer():
    return dense
