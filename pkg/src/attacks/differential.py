"""MMD-based differential attacks.

v1 adds each target to every client's member reference set and measures how
far that moves the set away from the non-member reference. v2 compares how well
the augmented set separates from the other clients' members against how well
it separates from the non-member reference.

Member references are the queried model's predictions on each client's
training data, so both attacks are privacy audits rather than realistic
adversaries. Every intermediate distance goes to the audit trail.
"""

import logging
import math
from typing import Optional, Sequence

import numpy as np

from ..audit import AuditEvent, AuditTrail
from ..errors import AttackError
from ..schemas import AttackKind, MMDConfig
from ..seeding import derive_seed
from .base import NONMEMBER, AttackContext, AttackOutcome, AttackVerdict, BaseAttack
from .evaluation import evaluate_attack
from .mmd import MMDReference, kernel_sum, mmd_from_sums, pairwise_block_sums, resolve_sigma

logger = logging.getLogger(__name__)


def _prepare(targets, member_refs, nonmember_ref, client_ids):
    refs = [np.atleast_2d(np.asarray(r, dtype=np.float64)) for r in member_refs]
    if not refs or any(r.shape[0] == 0 or r.size == 0 for r in refs):
        raise AttackError("every member reference set must be nonempty")
    nonmember_ref = np.atleast_2d(np.asarray(nonmember_ref, dtype=np.float64))
    if nonmember_ref.shape[0] == 0 or nonmember_ref.size == 0:
        raise AttackError("the non-member reference set must be nonempty")
    ids = list(client_ids) if client_ids is not None else list(range(1, len(refs) + 1))
    if len(ids) != len(refs):
        raise AttackError("one client id per member reference set")
    targets = np.asarray(targets, dtype=np.float64)
    if targets.size == 0:
        targets = np.zeros((0, nonmember_ref.shape[1]))
    return np.atleast_2d(targets), refs, nonmember_ref, ids


def _sigma(cfg: MMDConfig, refs, nonmember_ref, audit: Optional[AuditTrail]) -> float:
    sigma = resolve_sigma(cfg, *refs, nonmember_ref)
    logger.info("differential attack sigma %.6f (%s)", sigma, cfg.sigma)
    if audit is not None:
        audit.record(AuditEvent.SIGMA, sigma=sigma, source=str(cfg.sigma), kernel_exponent=cfg.kernel_exponent)
    return sigma


def differential_attack_v1(
    target_batch,
    member_refs: Sequence[np.ndarray],
    nonmember_ref: np.ndarray,
    cfg: MMDConfig,
    client_ids: Optional[Sequence[int]] = None,
    target_indices: Optional[Sequence[int]] = None,
    audit: Optional[AuditTrail] = None,
) -> list[AttackVerdict]:
    """gap_k = mmd(M_k + {y}, T) - mmd(M_k, T); member of argmax client when that gap is positive."""
    targets, refs, nonmember_ref, ids = _prepare(target_batch, member_refs, nonmember_ref, client_ids)
    sigma = _sigma(cfg, refs, nonmember_ref, audit)
    cached = [MMDReference(r, nonmember_ref, sigma, cfg.kernel_exponent) for r in refs]
    baselines = np.array([c.base() for c in cached])
    logger.debug("v1 baselines: %s", baselines)

    indices = range(len(targets)) if target_indices is None else target_indices
    verdicts = []
    for index, y in zip(indices, targets):
        with_target = np.array([c.with_target(y) for c in cached])
        gaps = with_target - baselines
        best = int(np.argmax(gaps))
        predicted = ids[best] if gaps[best] > 0 else NONMEMBER
        verdicts.append(AttackVerdict(int(index), predicted, float(gaps[best])))
        if audit is not None:
            audit.record(
                AuditEvent.DIFFERENTIAL_V1,
                target_index=int(index),
                baseline=baselines,
                with_target=with_target,
                gaps=gaps,
                predicted=predicted,
            )
    return verdicts


def differential_attack_v2(
    target_batch,
    member_refs: Sequence[np.ndarray],
    nonmember_ref: np.ndarray,
    cfg: MMDConfig,
    client_ids: Optional[Sequence[int]] = None,
    target_indices: Optional[Sequence[int]] = None,
    audit: Optional[AuditTrail] = None,
) -> list[AttackVerdict]:
    """a_k = mmd(M_k + {y}, union of other clients); member of k* iff a_k* > mmd(M_k* + {y}, T).

    k* maximizes the target's effect a_k - mmd(M_k, union of other clients).
    The raw a_k is dominated by how far each reference set already sits from
    the others and would hand every target to the same client.
    """
    targets, refs, nonmember_ref, ids = _prepare(target_batch, member_refs, nonmember_ref, client_ids)
    if len(refs) < 2:
        raise AttackError("differential attack v2 needs at least two clients")
    sigma = _sigma(cfg, refs, nonmember_ref, audit)
    e = cfg.kernel_exponent

    sizes = np.array([len(r) for r in refs])
    blocks = pairwise_block_sums(refs, sigma, e)
    total = math.fsum(blocks.ravel())
    to_nonmember = [MMDReference(r, nonmember_ref, sigma, e) for r in refs]
    # Sums between client k and the union of all other clients.
    own = np.diag(blocks).copy()
    cross = blocks.sum(axis=1) - own
    others = np.array([total - 2.0 * cross[k] - own[k] for k in range(len(refs))])
    other_sizes = sizes.sum() - sizes
    apart = np.array([
        mmd_from_sums(own[k], others[k], cross[k], sizes[k], other_sizes[k]) for k in range(len(refs))
    ])
    logger.debug("v2 inter-client baselines: %s", apart)

    indices = range(len(targets)) if target_indices is None else target_indices
    verdicts = []
    for index, y in zip(indices, targets):
        y = y[None, :]
        k_y = np.array([kernel_sum(y, r, sigma, e) for r in refs])
        separations = np.array([
            mmd_from_sums(
                own[k] + 2.0 * k_y[k] + 1.0,
                others[k],
                cross[k] + (k_y.sum() - k_y[k]),
                sizes[k] + 1,
                other_sizes[k],
            )
            for k in range(len(refs))
        ])
        effects = separations - apart
        best = int(np.argmax(effects))
        versus_nonmember = to_nonmember[best].with_target(y)
        predicted = ids[best] if separations[best] > versus_nonmember else NONMEMBER
        verdicts.append(AttackVerdict(int(index), predicted, float(separations[best])))
        if audit is not None:
            audit.record(
                AuditEvent.DIFFERENTIAL_V2,
                target_index=int(index),
                separations=separations,
                effects=effects,
                versus_nonmember=versus_nonmember,
                predicted=predicted,
            )
    return verdicts


class DifferentialAttack(BaseAttack):
    """Differential attack (v1 or v2) over held-out halves of every victim's training data."""

    VARIANTS = {
        AttackKind.DIFFERENTIAL_V1: (differential_attack_v1, "MMD gap when a target joins each member set"),
        AttackKind.DIFFERENTIAL_V2: (differential_attack_v2, "inter-client MMD against member-vs-test MMD"),
    }

    def __init__(self, kind: AttackKind):
        kind = AttackKind(kind)
        if kind not in self.VARIANTS:
            raise AttackError(f"{kind.value} is not a differential attack")
        self.run_variant, description = self.VARIANTS[kind]
        super().__init__(kind, description)

    async def execute(self, context: AttackContext) -> AttackOutcome:
        rng = np.random.default_rng(derive_seed(context.seed, "targets"))
        victims = sorted(context.victim_ids)
        references, member_targets = {}, {}
        for victim in victims:
            references[victim], member_targets[victim] = self.halve(context.clients[victim].train_data, rng)
        targets, truth = self.build_targets(member_targets, context.split.shared_test, context, rng)

        verdicts = self.run_variant(
            context.predictions(targets),
            [context.predictions(references[v]) for v in victims],
            context.predictions(context.split.shadow_test),
            context.scenario.mmd,
            client_ids=victims,
            target_indices=targets.index,
            audit=context.audit,
        )
        labels = [NONMEMBER, *victims]
        return AttackOutcome(
            kind=self.kind,
            verdicts=verdicts,
            ground_truth=truth,
            labels=labels,
            metrics=evaluate_attack(verdicts, truth, labels),
            diagnostics=self.collect_diagnostics(context.audit),
        )


def create_differential_attack(kind: AttackKind = AttackKind.DIFFERENTIAL_V1) -> DifferentialAttack:
    """Create and return a differential attack runner."""
    return DifferentialAttack(kind)
