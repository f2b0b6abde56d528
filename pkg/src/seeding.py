"""Seed derivation.

Every random stream in a scenario is derived from the single scenario seed:

    split      -> derive_seed(seed, "split")       shared test / attacker pool / shadow split
    partition  -> derive_seed(seed, "partition")   IID round-robin or Dirichlet draws
    init       -> derive_seed(seed, "init")        initial client model (identical for all clients)
    protocol   -> derive_seed(seed, "protocol")    aggregator election
    client k   -> derive_seed(seed, "client", k)   local training, per round via derive_seed(client, round)
    attack     -> derive_seed(seed, "attack")      attack-set balancing, attack model init and shuffling
"""

from dataclasses import dataclass

import numpy as np


def _key_to_int(key) -> int:
    if isinstance(key, str):
        return int.from_bytes(key.encode("utf-8"), "little")
    return int(key)


def derive_seed(*keys) -> int:
    """Derive a 64-bit seed from an ordered tuple of ints and strings."""
    entropy = [_key_to_int(key) for key in keys]
    return int(np.random.SeedSequence(entropy).generate_state(1, dtype=np.uint64)[0])


def make_rng(*keys) -> np.random.Generator:
    return np.random.default_rng(derive_seed(*keys))


@dataclass(frozen=True)
class ScenarioSeeds:
    split: int
    partition: int
    init: int
    protocol: int
    attack: int
    clients: tuple[int, ...]

    @classmethod
    def from_seed(cls, seed: int, client_count: int) -> "ScenarioSeeds":
        return cls(
            split=derive_seed(seed, "split"),
            partition=derive_seed(seed, "partition"),
            init=derive_seed(seed, "init"),
            protocol=derive_seed(seed, "protocol"),
            attack=derive_seed(seed, "attack"),
            clients=tuple(derive_seed(seed, "client", k) for k in range(1, client_count + 1)),
        )
