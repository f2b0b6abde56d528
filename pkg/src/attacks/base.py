"""Base attack class and the verdict type shared by every attack family."""

import logging
from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional

import numpy as np

from ..audit import AuditEvent, AuditTrail
from ..datasets import Dataset, SwarmSplit
from ..errors import AttackError
from ..nn import ModelParams, predict_proba
from ..schemas import AttackKind, AttackMetrics, ScenarioConfig
from ..swarm import ClientState

logger = logging.getLogger(__name__)

NONMEMBER = 0


@dataclass(frozen=True)
class AttackVerdict:
    """Decision for one target: 0 is non-member, k is member of client k."""

    target_index: int
    predicted: int
    score: float

    @property
    def is_member(self) -> bool:
        return self.predicted != NONMEMBER

    def to_record(self) -> Dict[str, Any]:
        return {"target_index": self.target_index, "predicted": self.predicted, "score": self.score}


@dataclass
class AttackContext:
    """Everything an attack may see after the swarm has finished.

    `query_model` is the global model the attack queries (final or a recorded
    round snapshot). Differential attacks also read victims' training data
    through `clients`; the shadow and metric attacks only touch the attacker's.
    """

    scenario: ScenarioConfig
    split: SwarmSplit
    clients: Dict[int, ClientState]
    query_model: ModelParams
    attacker_id: int
    victim_ids: List[int]
    seed: int
    audit: AuditTrail = field(default_factory=AuditTrail)

    @property
    def attacker(self) -> ClientState:
        return self.clients[self.attacker_id]

    def predictions(self, dataset: Dataset) -> np.ndarray:
        return predict_proba(self.query_model, dataset.features)


@dataclass
class AttackOutcome:
    """Verdicts, ground truth and metrics of one attack run."""

    kind: AttackKind
    verdicts: List[AttackVerdict]
    ground_truth: List[int]
    labels: List[int]
    metrics: AttackMetrics
    per_attacker: Dict[str, AttackMetrics] = field(default_factory=dict)
    diagnostics: Dict[str, Any] = field(default_factory=dict)


class BaseAttack:
    """Base class for all attack runners."""

    def __init__(self, kind: AttackKind, description: str):
        self.kind = AttackKind(kind)
        self.description = description

    async def execute(self, context: AttackContext) -> AttackOutcome:
        raise NotImplementedError

    def describe(self) -> str:
        return f"{self.kind.value}: {self.description}"

    @staticmethod
    def sample_rows(dataset: Dataset, count: Optional[int], rng: np.random.Generator) -> Dataset:
        """Seeded subset of `count` rows (all rows when count is None or too large)."""
        if count is None or count >= len(dataset):
            return dataset
        return dataset.subset(np.sort(rng.choice(len(dataset), size=count, replace=False)))

    @staticmethod
    def halve(dataset: Dataset, rng: np.random.Generator) -> tuple[Dataset, Dataset]:
        """Seeded split into two disjoint halves (the first takes the extra row)."""
        order = rng.permutation(len(dataset))
        cut = (len(dataset) + 1) // 2
        return dataset.subset(np.sort(order[:cut])), dataset.subset(np.sort(order[cut:]))

    def build_targets(
        self,
        members: Dict[int, Dataset],
        nonmembers: Dataset,
        context: AttackContext,
        rng: np.random.Generator,
    ) -> tuple[Dataset, List[int]]:
        """Evaluation targets and their ground truth, non-members first.

        Balanced scenarios draw the same number of rows (at most
        `targets_per_class`) for every class; unbalanced ones use the whole pools.
        """
        pools = {NONMEMBER: nonmembers, **members}
        if any(len(pool) == 0 for pool in pools.values()):
            raise AttackError("every target class needs at least one row")
        count = None
        if context.scenario.balance_attack_set:
            count = min([context.scenario.targets_per_class, *(len(pool) for pool in pools.values())])
        parts, truth = [], []
        for label in sorted(pools):
            chosen = self.sample_rows(pools[label], count, rng)
            parts.append(chosen)
            truth.extend([label] * len(chosen))
        return Dataset.concat(parts), truth

    @staticmethod
    def collect_diagnostics(audit: AuditTrail) -> Dict[str, Any]:
        diagnostics = {}
        for event in (AuditEvent.SIGMA, AuditEvent.THRESHOLD, AuditEvent.ATTACK_MODEL):
            latest = audit.latest(event)
            if latest is not None:
                diagnostics[event.value] = latest
        return diagnostics
