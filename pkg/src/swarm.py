"""Round-based swarm protocol.

Each round every client trains from the current global model on its own data,
a temporary aggregator is elected, the aggregator averages the local models
with the configured weights and the result is broadcast back to all clients.
Observers see a copy of every round log and cannot influence training.
"""

import asyncio
import logging
from dataclasses import dataclass, field
from typing import Optional, Protocol, Sequence

import numpy as np

from .datasets import Dataset
from .errors import SwarmError
from .nn import ModelParams, accuracy, train_local
from .schemas import ElectionMode, SwarmConfig, WEIGHT_SUM_TOLERANCE
from .seeding import derive_seed

logger = logging.getLogger(__name__)


@dataclass
class ClientState:
    """One swarm participant. `model` holds the client's latest local model.

    `weight` is reset from the swarm config when a run starts.
    """

    id: int
    train_data: Dataset
    model: ModelParams
    weight: float
    seed: int


@dataclass
class RoundLog:
    round: int
    aggregator_id: int
    global_model_snapshot: ModelParams
    per_client_train_acc: list[float] = field(default_factory=list)
    shared_test_acc: float = 0.0

    def copy(self) -> "RoundLog":
        return RoundLog(
            self.round,
            self.aggregator_id,
            self.global_model_snapshot.copy(),
            list(self.per_client_train_acc),
            self.shared_test_acc,
        )

    def to_record(self) -> dict:
        """JSON-lines form; the snapshot is represented by its fingerprint."""
        return {
            "round": self.round,
            "aggregator_id": self.aggregator_id,
            "global_fingerprint": self.global_model_snapshot.fingerprint(),
            "per_client_train_acc": self.per_client_train_acc,
            "shared_test_acc": self.shared_test_acc,
        }


class SwarmObserver(Protocol):
    def on_round(self, log: RoundLog) -> None: ...


class SnapshotRecorder:
    """The attacker's view: every broadcast global model, keyed by round."""

    def __init__(self):
        self.snapshots: dict[int, ModelParams] = {}

    def on_round(self, log: RoundLog) -> None:
        self.snapshots[log.round] = log.global_model_snapshot

    def snapshot(self, round: int) -> ModelParams:
        if round not in self.snapshots:
            raise SwarmError(f"no snapshot recorded for round {round}")
        return self.snapshots[round]


def elect_aggregator(round: int, cfg: SwarmConfig, rng: np.random.Generator, client_count: int) -> int:
    """Temporary aggregator for `round` (1-based); seeded_random draws from the protocol rng."""
    if client_count < 2:
        raise SwarmError("a swarm needs at least two clients")
    if cfg.election == ElectionMode.ROUND_ROBIN:
        return (round - 1) % client_count + 1
    return int(rng.integers(1, client_count + 1))


def _check_weights(weights: Sequence[float], count: int) -> np.ndarray:
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (count,):
        raise SwarmError(f"expected {count} weights, got {len(weights)}")
    if np.any(w < 0) or abs(float(w.sum()) - 1.0) > WEIGHT_SUM_TOLERANCE:
        raise SwarmError(f"weights must be nonnegative and sum to 1 (got {float(w.sum())!r})")
    return w


def _weighted_sum(arrays: Sequence[np.ndarray], weights: np.ndarray) -> np.ndarray:
    # Zero-weight terms are skipped so weights [1, 0, ...] reproduce the first model bit-exactly.
    total = None
    for array, w in zip(arrays, weights):
        if w == 0.0:
            continue
        term = w * array
        total = term if total is None else total + term
    return total


def aggregate(models: Sequence[ModelParams], weights: Sequence[float]) -> ModelParams:
    """Weighted parameter average of identically shaped models."""
    if not models:
        raise SwarmError("nothing to aggregate")
    w = _check_weights(weights, len(models))
    first = models[0]
    for other in models[1:]:
        if not first.same_shape(other):
            raise SwarmError("models differ in shape")
    layers = range(len(first.weights))
    return ModelParams(
        first.specs,
        [_weighted_sum([m.weights[k] for m in models], w) for k in layers],
        [_weighted_sum([m.biases[k] for m in models], w) for k in layers],
    )


def _local_update(client: ClientState, start: ModelParams, cfg: SwarmConfig, round: int) -> ModelParams:
    if cfg.local_epochs == 0:
        return start.copy()
    train_cfg = cfg.train_cfg.model_copy(update={
        "epochs": cfg.local_epochs,
        "seed": derive_seed(client.seed, round),
    })
    return train_local(start, client.train_data, train_cfg)


async def _train_round(
    clients: Sequence[ClientState],
    starts: Sequence[ModelParams],
    cfg: SwarmConfig,
    round: int,
) -> list[ModelParams]:
    if cfg.concurrent:
        tasks = [asyncio.to_thread(_local_update, c, s, cfg, round) for c, s in zip(clients, starts)]
        return list(await asyncio.gather(*tasks))
    return [_local_update(c, s, cfg, round) for c, s in zip(clients, starts)]


async def run_swarm_async(
    clients: Sequence[ClientState],
    cfg: SwarmConfig,
    shared_test: Dataset,
    observers: Sequence[SwarmObserver] = (),
) -> tuple[ModelParams, list[RoundLog]]:
    """Run `cfg.rounds` rounds; returns the final global model and one log per round."""
    if len(clients) < 2:
        raise SwarmError("a swarm needs at least two clients")
    weights = _check_weights(cfg.resolved_weights(len(clients)), len(clients))
    for client, weight in zip(clients, weights):
        client.weight = float(weight)
    for client in clients[1:]:
        if not clients[0].model.same_shape(client.model):
            raise SwarmError(f"client {client.id} model differs in shape from client {clients[0].id}")

    rng = np.random.default_rng(cfg.seed)
    starts = [c.model for c in clients]
    logs: list[RoundLog] = []
    global_model: Optional[ModelParams] = None

    for round in range(1, cfg.rounds + 1):
        aggregator = elect_aggregator(round, cfg, rng, len(clients))
        local_models = await _train_round(clients, starts, cfg, round)
        for client, local in zip(clients, local_models):
            client.model = local

        global_model = aggregate(local_models, weights)
        starts = [global_model] * len(clients)

        log = RoundLog(
            round=round,
            aggregator_id=aggregator,
            global_model_snapshot=global_model.copy(),
            per_client_train_acc=[accuracy(global_model, c.train_data) for c in clients],
            shared_test_acc=accuracy(global_model, shared_test),
        )
        logs.append(log)
        logger.info(
            "round %d: aggregator %d, shared test acc %.3f",
            round, aggregator, log.shared_test_acc,
        )
        for observer in observers:
            observer.on_round(log.copy())

    return global_model, logs


def run_swarm(
    clients: Sequence[ClientState],
    cfg: SwarmConfig,
    shared_test: Dataset,
    observers: Sequence[SwarmObserver] = (),
) -> tuple[ModelParams, list[RoundLog]]:
    """Blocking wrapper around run_swarm_async."""
    return asyncio.run(run_swarm_async(clients, cfg, shared_test, observers))
