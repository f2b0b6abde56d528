"""Dataset ingestion, generation and split/partition machinery."""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Optional, Sequence

import numpy as np

from .errors import DatasetError, DatasetFormatError, PartitionError
from .schemas import DatasetKind, DatasetSource, PartitionMode, PartitionSpec
from .seeding import derive_seed
from .tools.dataset_io import (
    IDX_IMAGES_MAGIC,
    IDX_LABELS_MAGIC,
    read_idx,
    read_labeled_csv,
    write_labeled_csv,
)

logger = logging.getLogger(__name__)

DIRICHLET_MAX_RETRIES = 100
PROBABILITY_TOLERANCE = 1e-6


@dataclass
class Dataset:
    """Labeled feature rows; `index` records each row's position in the source dataset."""

    features: np.ndarray
    labels: np.ndarray
    class_count: int
    index: Optional[np.ndarray] = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise DatasetError("features must be a matrix")
        if self.features.shape[0] != self.labels.shape[0]:
            raise DatasetError("feature rows and labels differ in length")
        if len(self.labels) and (self.labels.min() < 0 or self.labels.max() >= self.class_count):
            raise DatasetError(f"labels must lie in [0, {self.class_count})")
        if not np.all(np.isfinite(self.features)):
            raise DatasetError("features must be finite")
        if self.index is None:
            self.index = np.arange(len(self.labels))
        self.index = np.asarray(self.index, dtype=np.int64)
        if self.index.shape != self.labels.shape:
            raise DatasetError("index and labels differ in length")

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def subset(self, positions: Sequence[int]) -> "Dataset":
        positions = np.asarray(positions, dtype=np.int64)
        return Dataset(self.features[positions], self.labels[positions], self.class_count, self.index[positions])

    def class_histogram(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.class_count)

    def label_set(self) -> list[int]:
        return sorted(int(c) for c in np.unique(self.labels))

    @classmethod
    def concat(cls, parts: Sequence["Dataset"]) -> "Dataset":
        if not parts:
            raise DatasetError("nothing to concatenate")
        return cls(
            np.vstack([p.features for p in parts]),
            np.concatenate([p.labels for p in parts]),
            parts[0].class_count,
            np.concatenate([p.index for p in parts]),
        )


@dataclass
class SwarmSplit:
    """Disjoint parts of a source dataset for one swarm scenario."""

    client_train: list[Dataset]
    shared_test: Dataset
    shadow_train: Dataset
    shadow_test: Dataset
    client_test: list[Dataset] = field(default_factory=list)
    proportions: Optional[np.ndarray] = None

    @property
    def attacker_pool(self) -> Dataset:
        return Dataset.concat([self.shadow_train, self.shadow_test])

    def parts(self) -> list[Dataset]:
        return [*self.client_train, self.shared_test, self.shadow_train, self.shadow_test]


@dataclass
class AttackDataset:
    """Descending-sorted prediction vectors with member (client id) / non-member (0) labels."""

    features: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    def class_counts(self) -> dict[int, int]:
        values, counts = np.unique(self.labels, return_counts=True)
        return {int(v): int(c) for v, c in zip(values, counts)}


# Generation and ingestion

def generate_synthetic(class_count: int, per_class: int, dim: int, spread: float, seed: int) -> Dataset:
    """Gaussian blobs around class means drawn on the unit sphere, exactly `per_class` rows per class."""
    if class_count < 2 or per_class < 1 or dim < 2 or spread < 0:
        raise DatasetError("need class_count >= 2, per_class >= 1, dim >= 2 and spread >= 0")
    rng = np.random.default_rng(seed)
    means = rng.normal(size=(class_count, dim))
    means /= np.linalg.norm(means, axis=1, keepdims=True)
    noise = rng.normal(size=(class_count * per_class, dim))
    features = np.repeat(means, per_class, axis=0) + spread * noise
    labels = np.repeat(np.arange(class_count), per_class)
    return Dataset(features, labels, class_count)


def _class_count(labels: np.ndarray, class_count: Optional[int]) -> int:
    inferred = int(labels.max()) + 1 if len(labels) else 0
    return class_count or max(inferred, 2)


def load_idx(images_path: str, labels_path: str, class_count: Optional[int] = None) -> Dataset:
    """MNIST-format IDX pair (optionally gzipped); pixels scaled to [0, 1]."""
    images = read_idx(images_path, IDX_IMAGES_MAGIC)
    labels = read_idx(labels_path, IDX_LABELS_MAGIC).astype(np.int64)
    if images.shape[0] != labels.shape[0]:
        raise DatasetFormatError(f"{images.shape[0]} images but {labels.shape[0]} labels")
    features = images.reshape(images.shape[0], -1).astype(np.float64) / 255.0
    return Dataset(features, labels, _class_count(labels, class_count))


def load_csv(path: str, label_column: str = "label", class_count: Optional[int] = None) -> Dataset:
    """Headerful CSV with numeric feature columns and an integer label column."""
    features, labels = read_labeled_csv(path, label_column)
    return Dataset(features, labels, _class_count(labels, class_count))


def write_csv(dataset: Dataset, path: str, label_column: str = "label") -> Path:
    """Serialize a dataset (e.g. a synthetic fixture) as headerful CSV."""
    return write_labeled_csv(dataset.features, dataset.labels, path, label_column)


def load_source(source: DatasetSource, seed: int) -> Dataset:
    """Materialize a scenario's dataset; `seed` is used when the source has none of its own."""
    if source.kind == DatasetKind.IDX:
        return load_idx(source.images_path, source.labels_path)
    if source.kind == DatasetKind.CSV:
        return load_csv(source.csv_path, source.label_column)
    return generate_synthetic(
        source.class_count,
        source.per_class,
        source.dim,
        source.spread,
        source.seed if source.seed is not None else seed,
    )


# Partitioning

def _largest_remainder(total: int, weights: Sequence[float]) -> np.ndarray:
    raw = total * np.asarray(weights, dtype=np.float64)
    counts = np.floor(raw).astype(np.int64)
    order = np.argsort(-(raw - counts), kind="stable")
    counts[order[: total - counts.sum()]] += 1
    return counts


def _iid_assign(dataset: Dataset, spec: PartitionSpec, rng: np.random.Generator):
    k = spec.client_count
    assignments: list[list[int]] = [[] for _ in range(k)]
    proportions = np.full((dataset.class_count, k), 1.0 / k)
    cursor = 0
    for c in dataset.label_set():
        members = rng.permutation(np.flatnonzero(dataset.labels == c))
        if spec.weights is None:
            for offset, position in enumerate(members):
                assignments[(cursor + offset) % k].append(int(position))
            cursor = (cursor + len(members)) % k
        else:
            counts = _largest_remainder(len(members), spec.weights)
            for client, chunk in enumerate(np.split(members, np.cumsum(counts)[:-1])):
                assignments[client].extend(int(p) for p in chunk)
            proportions[c] = spec.weights
    return assignments, proportions


def _dirichlet_concentration(spec: PartitionSpec) -> np.ndarray:
    if spec.weights is None:
        return np.full(spec.client_count, spec.alpha)
    return spec.alpha * spec.client_count * np.asarray(spec.weights)


def _dirichlet_class(members: np.ndarray, concentration: np.ndarray, rng: np.random.Generator):
    """One class's client proportions and the per-client chunks they produce."""
    members = rng.permutation(members)
    p = rng.dirichlet(concentration)
    counts = rng.multinomial(len(members), p)
    return [list(map(int, chunk)) for chunk in np.split(members, np.cumsum(counts)[:-1])], p


def _dirichlet_assign(dataset: Dataset, spec: PartitionSpec, rng: np.random.Generator):
    concentration = _dirichlet_concentration(spec)
    proportions = np.tile(concentration / concentration.sum(), (dataset.class_count, 1))
    per_class: dict[int, list[list[int]]] = {}
    for c in dataset.label_set():
        per_class[c], proportions[c] = _dirichlet_class(np.flatnonzero(dataset.labels == c), concentration, rng)
    return per_class, proportions


def _merge_classes(per_class: Mapping[int, list[list[int]]], client_count: int) -> list[list[int]]:
    assignments: list[list[int]] = [[] for _ in range(client_count)]
    for c in sorted(per_class):
        for client, chunk in enumerate(per_class[c]):
            assignments[client].extend(chunk)
    return assignments


def _repair_empty(assignments: list[list[int]]) -> None:
    for client, positions in enumerate(assignments):
        if positions:
            continue
        largest = max(range(len(assignments)), key=lambda j: len(assignments[j]))
        if len(assignments[largest]) <= 1:
            raise PartitionError("cannot repair empty client: no client holds more than one sample")
        positions.append(assignments[largest].pop())
        logger.info("moved one sample from client %d to empty client %d", largest + 1, client + 1)


def partition_with_proportions(dataset: Dataset, spec: PartitionSpec) -> tuple[list[Dataset], np.ndarray]:
    """Partition plus the class x client proportion matrix that produced it."""
    k = spec.client_count
    if len(dataset) < k:
        raise PartitionError(f"{len(dataset)} samples cannot cover {k} clients")
    rng = np.random.default_rng(spec.seed)
    if spec.mode == PartitionMode.IID:
        histogram = dataset.class_histogram()
        if spec.weights is None and np.any((histogram > 0) & (histogram < k)):
            raise PartitionError(f"iid partition needs >= {k} samples of every present class")
        assignments, proportions = _iid_assign(dataset, spec, rng)
    else:
        per_class, proportions = _dirichlet_assign(dataset, spec, rng)
        assignments = _merge_classes(per_class, k)
        # Redraw one class at a time, largest first, keeping every other class's draw.
        redraw_order = sorted(per_class, key=lambda c: (-sum(map(len, per_class[c])), c))
        concentration = _dirichlet_concentration(spec)
        retry = 0
        while any(not positions for positions in assignments) and retry < DIRICHLET_MAX_RETRIES:
            retry += 1
            c = redraw_order[(retry - 1) % len(redraw_order)]
            logger.info("redrew class %d after a dirichlet draw left a client empty (attempt %d)", c, retry)
            retry_rng = np.random.default_rng(derive_seed(spec.seed, "dirichlet-retry", retry))
            per_class[c], proportions[c] = _dirichlet_class(np.flatnonzero(dataset.labels == c), concentration, retry_rng)
            assignments = _merge_classes(per_class, k)
    _repair_empty(assignments)
    parts = [dataset.subset(sorted(positions)) for positions in assignments]
    return parts, proportions


def partition(dataset: Dataset, spec: PartitionSpec) -> list[Dataset]:
    """IID round-robin or Dirichlet non-IID split into disjoint client datasets covering the input."""
    return partition_with_proportions(dataset, spec)[0]


def split_by_proportions(dataset: Dataset, proportions: np.ndarray, seed: int) -> list[Dataset]:
    """Apply per-class client proportions to another pool (clients may end up empty)."""
    rng = np.random.default_rng(seed)
    k = proportions.shape[1]
    assignments: list[list[int]] = [[] for _ in range(k)]
    for c in dataset.label_set():
        members = rng.permutation(np.flatnonzero(dataset.labels == c))
        counts = rng.multinomial(len(members), proportions[c] / proportions[c].sum())
        for client, chunk in enumerate(np.split(members, np.cumsum(counts)[:-1])):
            assignments[client].extend(int(p) for p in chunk)
    return [dataset.subset(sorted(positions)) for positions in assignments]


def partition_summary(client_train: Sequence[Dataset], client_test: Sequence[Dataset] = ()) -> list[dict]:
    """Per-client label sets and sizes."""
    rows = []
    for k, train in enumerate(client_train):
        rows.append({
            "client_id": k + 1,
            "labels": train.label_set(),
            "train_size": len(train),
            "test_size": len(client_test[k]) if k < len(client_test) else 0,
        })
    return rows


def make_swarm_split(
    dataset: Dataset,
    spec: PartitionSpec,
    shadow_fraction: float = 0.5,
    test_fraction: float = 0.2,
    attacker_fraction: float = 0.2,
    seed: Optional[int] = None,
) -> SwarmSplit:
    """Shared test first, then the attacker pool (shadow train/test), then the client partition."""
    if not 0 < shadow_fraction < 1:
        raise DatasetError("shadow_fraction must lie in (0, 1)")
    n = len(dataset)
    rng = np.random.default_rng(spec.seed if seed is None else seed)
    order = rng.permutation(n)
    n_test = max(1, int(round(test_fraction * n)))
    n_attacker = max(2, int(round(attacker_fraction * n)))
    if n_test + n_attacker >= n:
        raise DatasetError("fractions leave no data for clients")
    test_positions = np.sort(order[:n_test])
    attacker_positions = order[n_test:n_test + n_attacker]
    client_positions = np.sort(order[n_test + n_attacker:])
    n_shadow_train = min(max(1, int(round(shadow_fraction * n_attacker))), n_attacker - 1)

    shared_test = dataset.subset(test_positions)
    shadow_train = dataset.subset(np.sort(attacker_positions[:n_shadow_train]))
    shadow_test = dataset.subset(np.sort(attacker_positions[n_shadow_train:]))
    clients, proportions = partition_with_proportions(dataset.subset(client_positions), spec)
    client_test = split_by_proportions(shared_test, proportions, derive_seed(spec.seed, "client-test"))

    result = SwarmSplit(clients, shared_test, shadow_train, shadow_test, client_test, proportions)
    if any(len(part) == 0 for part in result.parts()):
        raise DatasetError("split produced an empty part")
    logger.info(
        "split %d samples: clients %s, shared test %d, shadow train %d, shadow test %d",
        n, [len(c) for c in clients], len(shared_test), len(shadow_train), len(shadow_test),
    )
    return result


# Attack sets

def check_prediction_vectors(preds: np.ndarray) -> np.ndarray:
    preds = np.atleast_2d(np.asarray(preds, dtype=np.float64))
    if preds.size and (
        np.any(preds < -PROBABILITY_TOLERANCE)
        or np.any(preds > 1 + PROBABILITY_TOLERANCE)
        or np.any(np.abs(preds.sum(axis=1) - 1.0) > PROBABILITY_TOLERANCE)
    ):
        raise DatasetError("rows must be probability vectors")
    return preds


def sort_prediction_vectors(preds: np.ndarray) -> np.ndarray:
    """Descending sort of each row."""
    return -np.sort(-np.asarray(preds, dtype=np.float64), axis=1)


def build_labeled_attack_set(groups: Mapping[int, np.ndarray], balance: bool, seed: int) -> AttackDataset:
    """Attack rows per label; with `balance`, every label is undersampled to the smallest group."""
    if not groups or any(len(rows) == 0 for rows in groups.values()):
        raise DatasetError("attack set groups must be nonempty")
    rng = np.random.default_rng(seed)
    smallest = min(len(rows) for rows in groups.values())
    features, labels = [], []
    for label in sorted(groups):
        rows = check_prediction_vectors(groups[label])
        if balance and len(rows) > smallest:
            rows = rows[np.sort(rng.choice(len(rows), size=smallest, replace=False))]
        features.append(sort_prediction_vectors(rows))
        labels.append(np.full(len(rows), label, dtype=np.int64))
    return AttackDataset(np.vstack(features), np.concatenate(labels))


def build_attack_set(
    member_preds: np.ndarray,
    nonmember_preds: np.ndarray,
    balance: bool,
    seed: int,
    member_label: int = 1,
) -> AttackDataset:
    """Binary attack set: members labeled `member_label`, non-members 0."""
    return build_labeled_attack_set({member_label: np.asarray(member_preds), 0: np.asarray(nonmember_preds)}, balance, seed)
