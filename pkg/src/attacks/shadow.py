"""Shadow-model attacks.

The attacker's own local data plays the shadow model's member set, so the only
model trained here is the attack classifier: an MLP over descending-sorted
prediction vectors of the queried global model.
"""

import logging
from dataclasses import dataclass
from typing import Mapping, Optional

import numpy as np
from sklearn.preprocessing import StandardScaler

from ..audit import AuditEvent, AuditTrail
from ..datasets import AttackDataset, Dataset, SwarmSplit, build_attack_set, build_labeled_attack_set, sort_prediction_vectors
from ..errors import AttackError
from ..nn import ModelParams, build_layer_specs, init_model, predict_proba, train_local
from ..schemas import AttackKind, AttackModelConfig, TrainConfig
from ..seeding import derive_seed
from ..swarm import ClientState
from .base import NONMEMBER, AttackContext, AttackOutcome, AttackVerdict, BaseAttack
from .evaluation import evaluate_attack

logger = logging.getLogger(__name__)

MEMBER_THRESHOLD = 0.5


@dataclass
class AttackModel:
    """Attack classifier with its feature scaler; output j predicts verdict label labels[j]."""

    params: ModelParams
    scaler: StandardScaler
    labels: list[int]
    train_accuracy: float
    holdout_accuracy: Optional[float] = None

    @property
    def is_binary(self) -> bool:
        return len(self.labels) == 2

    def predict_proba(self, sorted_preds: np.ndarray) -> np.ndarray:
        return predict_proba(self.params, self.scaler.transform(sorted_preds))

    def predict_labels(self, sorted_preds: np.ndarray) -> np.ndarray:
        probs = self.predict_proba(sorted_preds)
        if self.is_binary:
            member = self.labels.index(max(self.labels))
            chosen = np.where(probs[:, member] >= MEMBER_THRESHOLD, member, 1 - member)
        else:
            chosen = np.argmax(probs, axis=1)
        return np.asarray(self.labels)[chosen]

    def verdicts(self, preds: np.ndarray, target_indices) -> list[AttackVerdict]:
        """Verdicts for raw prediction vectors; binary scores are the member probability."""
        if len(preds) == 0:
            return []
        sorted_preds = sort_prediction_vectors(preds)
        probs = self.predict_proba(sorted_preds)
        predicted = self.predict_labels(sorted_preds)
        if self.is_binary:
            scores = probs[:, self.labels.index(max(self.labels))]
        else:
            scores = np.max(probs, axis=1)
        return [
            AttackVerdict(int(i), int(label), float(score))
            for i, label, score in zip(target_indices, predicted, scores)
        ]


def train_attack_model(attack_set: AttackDataset, cfg: AttackModelConfig, seed: int) -> AttackModel:
    """Scale features, hold out a seeded fraction for diagnostics, train the MLP."""
    labels = sorted(int(label) for label in np.unique(attack_set.labels))
    if len(labels) < 2:
        raise AttackError("attack set needs at least two classes")
    targets = np.searchsorted(labels, attack_set.labels)

    rng = np.random.default_rng(derive_seed(seed, "holdout"))
    order = rng.permutation(len(attack_set))
    holdout = min(int(round(cfg.holdout_fraction * len(order))), len(order) - 1)
    train_rows, holdout_rows = np.sort(order[holdout:]), np.sort(order[:holdout])

    scaler = StandardScaler().fit(attack_set.features[train_rows])
    scaled = scaler.transform(attack_set.features)
    specs = build_layer_specs(scaled.shape[1], cfg.hidden, len(labels))
    params = init_model(specs, derive_seed(seed, "init"))
    train_cfg = TrainConfig(
        learning_rate=cfg.learning_rate,
        epochs=cfg.epochs,
        batch_size=cfg.batch_size,
        seed=derive_seed(seed, "train"),
    )
    params = train_local(params, AttackDataset(scaled[train_rows], targets[train_rows]), train_cfg)

    def fraction_correct(rows: np.ndarray) -> Optional[float]:
        if len(rows) == 0:
            return None
        return float(np.mean(np.argmax(predict_proba(params, scaled[rows]), axis=1) == targets[rows]))

    model = AttackModel(params, scaler, labels, fraction_correct(train_rows), fraction_correct(holdout_rows))
    logger.info(
        "attack model over labels %s: train acc %.3f, holdout acc %s",
        labels, model.train_accuracy,
        "n/a" if model.holdout_accuracy is None else f"{model.holdout_accuracy:.3f}",
    )
    return model


def _record(audit: Optional[AuditTrail], model: AttackModel, attack_set: AttackDataset) -> None:
    if audit is not None:
        audit.record(
            AuditEvent.ATTACK_MODEL,
            labels=model.labels,
            class_counts=attack_set.class_counts(),
            train_accuracy=model.train_accuracy,
            holdout_accuracy=model.holdout_accuracy,
        )


def shadow_attack_train(
    attacker: ClientState,
    global_model: ModelParams,
    shadow_split: SwarmSplit,
    attack_cfg: AttackModelConfig,
    balance: bool = True,
    seed: int = 0,
    member_label: int = 1,
    audit: Optional[AuditTrail] = None,
) -> AttackModel:
    """Members: the attacker's own train set; non-members: its shadow train pool. Both through `global_model`."""
    if len(attacker.train_data) == 0 or len(shadow_split.shadow_train) == 0:
        raise AttackError("shadow attack needs nonempty member and non-member pools")
    attack_set = build_attack_set(
        predict_proba(global_model, attacker.train_data.features),
        predict_proba(global_model, shadow_split.shadow_train.features),
        balance,
        derive_seed(seed, "balance"),
        member_label=member_label,
    )
    model = train_attack_model(attack_set, attack_cfg, seed)
    _record(audit, model, attack_set)
    return model


def shadow_attack_infer(attack_model: AttackModel, global_model: ModelParams, targets: Dataset) -> list[AttackVerdict]:
    """One verdict per target row; member iff the attack model's member probability >= 0.5."""
    if len(targets) == 0:
        return []
    if targets.dim != global_model.input_dim:
        raise AttackError(f"targets have width {targets.dim}, model expects {global_model.input_dim}")
    return attack_model.verdicts(predict_proba(global_model, targets.features), targets.index)


def one_to_multi_attack(
    attacker: ClientState,
    global_model: ModelParams,
    per_client_shadow_sets: Mapping[int, Dataset],
    targets: Dataset,
    attack_cfg: AttackModelConfig,
    balance: bool = True,
    seed: int = 0,
    audit: Optional[AuditTrail] = None,
) -> list[AttackVerdict]:
    """Multi-class attack attributing targets to their owner client or to non-member.

    `per_client_shadow_sets` maps each victim id to rows known to be in its
    training set and 0 to known non-member rows.
    """
    if NONMEMBER not in per_client_shadow_sets:
        raise AttackError("one-to-multi attack needs a non-member shadow set under key 0")
    victims = [k for k in per_client_shadow_sets if k != NONMEMBER]
    if len(victims) < 2:
        raise AttackError("one-to-multi attack needs at least two victim classes")
    if attacker.id in victims:
        raise AttackError("the attacker cannot be one of its own victims")

    groups = {k: predict_proba(global_model, d.features) for k, d in per_client_shadow_sets.items()}
    attack_set = build_labeled_attack_set(groups, balance, derive_seed(seed, "balance"))
    model = train_attack_model(attack_set, attack_cfg, seed)
    _record(audit, model, attack_set)
    if len(targets) == 0:
        return []
    return model.verdicts(predict_proba(global_model, targets.features), targets.index)


class ShadowAttack(BaseAttack):
    """Shadow-model attack in the One-to-One, Multi-to-One or One-to-Multi topology."""

    TOPOLOGIES = {
        AttackKind.SHADOW_ONE_TO_ONE: "attacker N against victim 1",
        AttackKind.SHADOW_MULTI_TO_ONE: "every configured attacker against the same victim",
        AttackKind.SHADOW_ONE_TO_MULTI: "one attacker attributing targets among several victims",
    }

    def __init__(self, kind: AttackKind):
        kind = AttackKind(kind)
        if kind not in self.TOPOLOGIES:
            raise AttackError(f"{kind.value} is not a shadow topology")
        super().__init__(kind, self.TOPOLOGIES[kind])

    async def execute(self, context: AttackContext) -> AttackOutcome:
        if self.kind == AttackKind.SHADOW_ONE_TO_MULTI:
            return self._one_to_multi(context)
        if self.kind == AttackKind.SHADOW_MULTI_TO_ONE:
            return self._multi_to_one(context)
        return self._one_to_one(context)

    def _binary_targets(self, context: AttackContext) -> tuple[Dataset, list[int]]:
        victim = context.victim_ids[0]
        rng = np.random.default_rng(derive_seed(context.seed, "targets"))
        return self.build_targets({victim: context.clients[victim].train_data}, context.split.shared_test, context, rng)

    def _attack_from(self, context: AttackContext, attacker_id: int, targets: Dataset) -> list[AttackVerdict]:
        model = shadow_attack_train(
            context.clients[attacker_id],
            context.query_model,
            context.split,
            context.scenario.attack_model,
            balance=context.scenario.balance_attack_set,
            seed=derive_seed(context.seed, "attacker", attacker_id),
            member_label=context.victim_ids[0],
            audit=context.audit,
        )
        return shadow_attack_infer(model, context.query_model, targets)

    def _one_to_one(self, context: AttackContext) -> AttackOutcome:
        targets, truth = self._binary_targets(context)
        verdicts = self._attack_from(context, context.attacker_id, targets)
        labels = [NONMEMBER, context.victim_ids[0]]
        return AttackOutcome(
            kind=self.kind,
            verdicts=verdicts,
            ground_truth=truth,
            labels=labels,
            metrics=evaluate_attack(verdicts, truth, labels),
            diagnostics=self.collect_diagnostics(context.audit),
        )

    def _multi_to_one(self, context: AttackContext) -> AttackOutcome:
        targets, truth = self._binary_targets(context)
        labels = [NONMEMBER, context.victim_ids[0]]
        verdicts, pooled_truth, per_attacker = [], [], {}
        for attacker_id in context.scenario.resolved_attackers():
            found = self._attack_from(context, attacker_id, targets)
            per_attacker[str(attacker_id)] = evaluate_attack(found, truth, labels)
            logger.info("attacker %d -> victim %d: accuracy %.3f", attacker_id, labels[1], per_attacker[str(attacker_id)].accuracy)
            verdicts.extend(found)
            pooled_truth.extend(truth)
        return AttackOutcome(
            kind=self.kind,
            verdicts=verdicts,
            ground_truth=pooled_truth,
            labels=labels,
            metrics=evaluate_attack(verdicts, pooled_truth, labels),
            per_attacker=per_attacker,
            diagnostics=self.collect_diagnostics(context.audit),
        )

    def _one_to_multi(self, context: AttackContext) -> AttackOutcome:
        rng = np.random.default_rng(derive_seed(context.seed, "targets"))
        shadow_sets: dict[int, Dataset] = {NONMEMBER: context.split.shadow_train}
        member_targets: dict[int, Dataset] = {}
        for victim in context.victim_ids:
            shadow_sets[victim], member_targets[victim] = self.halve(context.clients[victim].train_data, rng)
        targets, truth = self.build_targets(member_targets, context.split.shared_test, context, rng)
        verdicts = one_to_multi_attack(
            context.attacker,
            context.query_model,
            shadow_sets,
            targets,
            context.scenario.attack_model,
            balance=context.scenario.balance_attack_set,
            seed=derive_seed(context.seed, "attacker", context.attacker_id),
            audit=context.audit,
        )
        labels = [NONMEMBER, *sorted(context.victim_ids)]
        return AttackOutcome(
            kind=self.kind,
            verdicts=verdicts,
            ground_truth=truth,
            labels=labels,
            metrics=evaluate_attack(verdicts, truth, labels),
            diagnostics=self.collect_diagnostics(context.audit),
        )


def create_shadow_attack(kind: AttackKind = AttackKind.SHADOW_ONE_TO_ONE) -> ShadowAttack:
    """Create and return a shadow attack runner."""
    return ShadowAttack(kind)
