"""Pydantic schemas for the simulator's configuration and report structures."""

from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from .config import settings

SEED_BOUND = 2 ** 64
WEIGHT_SUM_TOLERANCE = 1e-9


class Activation(str, Enum):
    """Layer activations."""
    RELU = "relu"
    IDENTITY = "identity"


class ForwardMode(str, Enum):
    """Forward pass modes."""
    TRAIN = "train"
    EVAL = "eval"


class PartitionMode(str, Enum):
    """Client partitioning strategies."""
    IID = "iid"
    DIRICHLET = "dirichlet"


class ElectionMode(str, Enum):
    """Temporary aggregator election strategies."""
    ROUND_ROBIN = "round_robin"
    SEEDED_RANDOM = "seeded_random"


class AttackKind(str, Enum):
    """Attack selectors understood by the harness."""
    SHADOW_ONE_TO_ONE = "shadow_one_to_one"
    SHADOW_MULTI_TO_ONE = "shadow_multi_to_one"
    SHADOW_ONE_TO_MULTI = "shadow_one_to_multi"
    METRIC_CONFIDENCE = "metric_confidence"
    METRIC_ENTROPY = "metric_entropy"
    DIFFERENTIAL_V1 = "differential_v1"
    DIFFERENTIAL_V2 = "differential_v2"

    @property
    def is_multiclass(self) -> bool:
        return self in (
            AttackKind.SHADOW_ONE_TO_MULTI,
            AttackKind.DIFFERENTIAL_V1,
            AttackKind.DIFFERENTIAL_V2,
        )


class MetricKind(str, Enum):
    """Scalar statistics used by metric attacks."""
    CONFIDENCE = "confidence"
    ENTROPY = "entropy"


class DatasetKind(str, Enum):
    """Dataset sources."""
    SYNTHETIC = "synthetic"
    IDX = "idx"
    CSV = "csv"


class StrictModel(BaseModel):
    """Base for config documents: unknown keys are errors."""
    model_config = ConfigDict(extra="forbid")


# Model Engine Schemas
class LayerSpec(StrictModel):
    """One dense layer of a feed-forward classifier."""
    model_config = ConfigDict(extra="forbid", frozen=True)

    in_dim: int = Field(..., gt=0, description="Input width")
    out_dim: int = Field(..., gt=0, description="Output width")
    activation: Activation = Field(default=Activation.RELU, description="Activation after the affine map")
    dropout_rate: float = Field(default=0.0, ge=0.0, lt=1.0, description="Inverted-dropout rate after activation")


class TrainConfig(StrictModel):
    """Mini-batch SGD parameters."""
    learning_rate: float = Field(default=0.05, gt=0, description="SGD step size")
    l2_lambda: float = Field(default=0.0, ge=0, description="Weight decay coefficient on weight matrices")
    epochs: int = Field(default=1, ge=0, description="Passes over the local dataset")
    batch_size: int = Field(default=16, ge=1, description="Mini-batch size")
    seed: int = Field(default=0, ge=0, lt=SEED_BOUND, description="Shuffling and dropout seed")


# Data Schemas
def _check_weights(weights: Optional[List[float]]) -> Optional[List[float]]:
    if weights is None:
        return None
    if not weights or any(w <= 0 for w in weights):
        raise ValueError("weights must be positive")
    if abs(sum(weights) - 1.0) > WEIGHT_SUM_TOLERANCE:
        raise ValueError(f"weights must sum to 1 (got {sum(weights)!r})")
    return weights


class PartitionSpec(StrictModel):
    """How the client share of a dataset is split among clients."""
    mode: PartitionMode = Field(default=PartitionMode.IID, description="iid or dirichlet")
    alpha: float = Field(default_factory=lambda: settings.default_alpha, gt=0, description="Dirichlet concentration")
    client_count: int = Field(default=2, ge=2, description="Number of swarm clients")
    seed: int = Field(default=0, ge=0, lt=SEED_BOUND, description="Partition seed (derived by the harness)")
    weights: Optional[List[float]] = Field(default=None, description="Relative client sizes, summing to 1")

    @field_validator("weights")
    @classmethod
    def _valid_weights(cls, v: Optional[List[float]]) -> Optional[List[float]]:
        return _check_weights(v)

    @model_validator(mode="after")
    def _weights_match_clients(self) -> "PartitionSpec":
        if self.weights is not None and len(self.weights) != self.client_count:
            raise ValueError("weights length must equal client_count")
        return self


class DatasetSource(StrictModel):
    """Where scenario data comes from."""
    kind: DatasetKind = Field(default=DatasetKind.SYNTHETIC, description="synthetic, idx or csv")
    class_count: int = Field(default=10, ge=2, description="Synthetic class count")
    per_class: int = Field(default=60, ge=1, description="Synthetic samples per class")
    dim: int = Field(default=20, ge=2, description="Synthetic feature dimension")
    spread: float = Field(default=1.0, ge=0, description="Synthetic isotropic noise std")
    seed: Optional[int] = Field(default=None, ge=0, lt=SEED_BOUND, description="Data seed; derived from the scenario seed when unset")
    images_path: Optional[str] = Field(default=None, description="IDX images file")
    labels_path: Optional[str] = Field(default=None, description="IDX labels file")
    csv_path: Optional[str] = Field(default=None, description="Headerful CSV file")
    label_column: str = Field(default="label", description="CSV label column")

    @model_validator(mode="after")
    def _paths_present(self) -> "DatasetSource":
        if self.kind == DatasetKind.IDX and not (self.images_path and self.labels_path):
            raise ValueError("idx datasets need images_path and labels_path")
        if self.kind == DatasetKind.CSV and not self.csv_path:
            raise ValueError("csv datasets need csv_path")
        return self


class SplitSpec(StrictModel):
    """Fractions of the source reserved outside the client partition."""
    test_fraction: float = Field(default_factory=lambda: settings.default_test_fraction, gt=0, lt=1)
    attacker_fraction: float = Field(default_factory=lambda: settings.default_attacker_fraction, gt=0, lt=1)
    shadow_fraction: float = Field(default_factory=lambda: settings.default_shadow_fraction, gt=0, lt=1)

    @model_validator(mode="after")
    def _leaves_clients_data(self) -> "SplitSpec":
        if self.test_fraction + self.attacker_fraction >= 1:
            raise ValueError("test_fraction + attacker_fraction must be < 1")
        return self


# Swarm Schemas
class SwarmConfig(StrictModel):
    """Round structure of the decentralized protocol."""
    rounds: int = Field(default=10, ge=1, description="Aggregation rounds")
    local_epochs: int = Field(default=5, ge=0, description="Local epochs per round")
    election: ElectionMode = Field(default=ElectionMode.ROUND_ROBIN, description="Aggregator election")
    train_cfg: TrainConfig = Field(default_factory=TrainConfig, description="Local training template")
    weights: Optional[List[float]] = Field(default=None, description="Aggregation weights (uniform when unset)")
    seed: int = Field(default=0, ge=0, lt=SEED_BOUND, description="Protocol (election) seed")
    concurrent: bool = Field(default_factory=lambda: settings.concurrent_clients, description="Train clients on threads")

    @field_validator("weights")
    @classmethod
    def _valid_weights(cls, v: Optional[List[float]]) -> Optional[List[float]]:
        return _check_weights(v)

    def resolved_weights(self, client_count: int) -> List[float]:
        if self.weights is None:
            return [1.0 / client_count] * client_count
        return list(self.weights)


class ModelSpec(StrictModel):
    """Client model architecture."""
    hidden: List[int] = Field(default_factory=lambda: [64], description="Hidden layer widths")

    @field_validator("hidden")
    @classmethod
    def _positive(cls, v: List[int]) -> List[int]:
        if any(width <= 0 for width in v):
            raise ValueError("hidden widths must be positive")
        return v


# Attack Schemas
class MMDConfig(StrictModel):
    """Gaussian-kernel MMD parameters."""
    sigma: Union[float, Literal["median_heuristic"]] = Field(default="median_heuristic", description="Bandwidth")
    kernel_exponent: Literal[1, 2] = Field(default=2, description="Exponent on the norm inside exp")

    @field_validator("sigma")
    @classmethod
    def _positive_sigma(cls, v):
        if not isinstance(v, str) and v <= 0:
            raise ValueError("sigma must be > 0")
        return v


class AttackModelConfig(StrictModel):
    """Attack classifier hyperparameters."""
    hidden: List[int] = Field(default_factory=lambda: settings.attack_hidden_layers)
    epochs: int = Field(default_factory=lambda: settings.attack_epochs, ge=1)
    learning_rate: float = Field(default_factory=lambda: settings.attack_learning_rate, gt=0)
    batch_size: int = Field(default_factory=lambda: settings.attack_batch_size, ge=1)
    holdout_fraction: float = Field(default=0.2, ge=0, lt=1, description="Attack rows held out for diagnostics")


# Defense Schemas
class DefenseSpec(StrictModel):
    """Dropout and weight-decay defense."""
    dropout_rates: List[float] = Field(default_factory=list, description="Per-hidden-layer dropout, prefix semantics")
    l2_lambda: float = Field(default=0.0, ge=0, description="Weight decay override")

    @field_validator("dropout_rates")
    @classmethod
    def _rates_in_range(cls, v: List[float]) -> List[float]:
        if any(not 0.0 <= rate < 1.0 for rate in v):
            raise ValueError("dropout rates must lie in [0, 1)")
        return v

    @property
    def is_identity(self) -> bool:
        return not any(self.dropout_rates) and self.l2_lambda == 0.0


class ScenarioConfig(StrictModel):
    """A complete, reproducible experiment."""
    name: str = Field(default="scenario", description="Label used in file names")
    dataset: DatasetSource = Field(default_factory=DatasetSource)
    partition: PartitionSpec = Field(default_factory=PartitionSpec)
    split: SplitSpec = Field(default_factory=SplitSpec)
    swarm: SwarmConfig = Field(default_factory=SwarmConfig)
    model: ModelSpec = Field(default_factory=ModelSpec)
    attack: AttackKind = Field(default=AttackKind.SHADOW_ONE_TO_ONE)
    attacker_id: Optional[int] = Field(default=None, description="Attacking client (defaults to N)")
    attacker_ids: Optional[List[int]] = Field(default=None, description="Attackers for Multi-to-One")
    victim_ids: Optional[List[int]] = Field(default=None, description="Victim clients")
    defense: DefenseSpec = Field(default_factory=DefenseSpec)
    balance_attack_set: bool = Field(default=True)
    attack_model: AttackModelConfig = Field(default_factory=AttackModelConfig)
    mmd: MMDConfig = Field(default_factory=MMDConfig)
    targets_per_class: int = Field(default=50, ge=1, description="Held-out targets per verdict class")
    query_round: Optional[int] = Field(default=None, ge=1, description="Query this round's snapshot instead of the final model")
    entropy_trace: bool = Field(default=False, description="Record member/non-member entropy per round")
    seed: int = Field(default=0, ge=0, lt=SEED_BOUND)

    @property
    def client_count(self) -> int:
        return self.partition.client_count

    def resolved_attacker(self) -> int:
        return self.attacker_id if self.attacker_id is not None else self.client_count

    def resolved_victims(self) -> List[int]:
        if self.victim_ids is not None:
            return list(self.victim_ids)
        if self.attack.is_multiclass:
            attacker = self.resolved_attacker()
            return [k for k in range(1, self.client_count + 1) if k != attacker]
        return [1]

    def resolved_attackers(self) -> List[int]:
        """Attackers of the Multi-to-One topology (i -> 1 for i = 2..N-1)."""
        if self.attacker_ids is not None:
            return list(self.attacker_ids)
        victims = set(self.resolved_victims())
        middle = [i for i in range(2, self.client_count) if i not in victims]
        return middle or [self.resolved_attacker()]

    @model_validator(mode="after")
    def _ids_consistent(self) -> "ScenarioConfig":
        n = self.client_count
        attacker = self.resolved_attacker()
        victims = self.resolved_victims()
        if not 1 <= attacker <= n:
            raise ValueError(f"attacker_id {attacker} outside [1, {n}]")
        if not victims:
            raise ValueError("at least one victim is required")
        for victim in victims:
            if not 1 <= victim <= n:
                raise ValueError(f"victim id {victim} outside [1, {n}]")
        if attacker in victims:
            raise ValueError("attacker_id must not be a victim")
        if self.attack == AttackKind.SHADOW_MULTI_TO_ONE:
            for other in self.resolved_attackers():
                if not 1 <= other <= n or other in victims:
                    raise ValueError(f"attacker id {other} must be in [1, {n}] and not a victim")
        if self.attack in (AttackKind.SHADOW_ONE_TO_MULTI, AttackKind.DIFFERENTIAL_V2) and len(victims) < 2:
            raise ValueError(f"{self.attack.value} needs at least two victims")
        if self.swarm.weights is not None and len(self.swarm.weights) != n:
            raise ValueError("swarm.weights length must equal partition.client_count")
        if self.query_round is not None and self.query_round > self.swarm.rounds:
            raise ValueError("query_round exceeds swarm.rounds")
        return self


# Report Schemas
class ClassMetrics(BaseModel):
    """Per-class attack metrics; label 0 is non-member, k is member of client k."""
    label: int
    precision: float
    recall: float
    f1: float
    support: int


class AttackMetrics(BaseModel):
    """Metrics record of one attack evaluation."""
    accuracy: float
    macro_f1: float
    macro_precision: float
    macro_recall: float
    baseline: float
    labels: List[int]
    per_class: List[ClassMetrics]
    confusion_matrix: List[List[int]]
    n_targets: int


class SwarmSummary(BaseModel):
    """What the swarm run looked like from the outside."""
    rounds: int
    aggregator_sequence: List[int]
    final_train_accuracy: float
    final_test_accuracy: float
    generalization_gap: float
    per_client_train_accuracy: List[float]
    initial_fingerprint: str
    final_fingerprint: str


class EntropyTracePoint(BaseModel):
    round: int
    member_entropy: float
    nonmember_entropy: float


class SweepPoint(BaseModel):
    axis: str
    value: Any


class WallClock(BaseModel):
    started_at: str
    seconds: float


class ExperimentReport(BaseModel):
    """Per-scenario results."""
    schema_version: str
    artifact_version: str
    seed: int
    scenario: Dict[str, Any]
    attack: AttackKind
    metrics: AttackMetrics
    per_attacker: Dict[str, AttackMetrics] = Field(default_factory=dict)
    diagnostics: Dict[str, Any] = Field(default_factory=dict)
    swarm: SwarmSummary
    entropy_trace: List[EntropyTracePoint] = Field(default_factory=list)
    sweep: Optional[SweepPoint] = None
    wall_clock: WallClock

    def deterministic_json(self) -> str:
        """Serialized report without wall-clock fields."""
        return self.model_dump_json(exclude={"wall_clock"})


class DefenseDelta(BaseModel):
    """defended minus undefended."""
    attack_accuracy: float
    macro_f1: float
    train_accuracy: float
    test_accuracy: float
    generalization_gap: float


class PairedReport(BaseModel):
    """Same-seed comparison of a defended and an undefended run."""
    schema_version: str
    attack: AttackKind
    defense: DefenseSpec
    defended: ExperimentReport
    undefended: ExperimentReport
    delta: DefenseDelta
    initial_states_match: bool
