"""Scenario Harness - Orchestrates split, swarm training, attack and reporting."""

import asyncio
import json
import logging
import time
from dataclasses import dataclass
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, List, Optional, Sequence

from pydantic import ValidationError

from . import __version__
from .attacks import AttackOutcome, EntropyTraceObserver, create_attack
from .attacks.base import AttackContext
from .audit import AuditTrail
from .config import settings
from .datasets import SwarmSplit, load_source, make_swarm_split, partition_summary
from .defenses import apply_defense, defense_delta
from .errors import ConfigError
from .nn import build_layer_specs, init_model
from .schemas import (
    AttackKind,
    DefenseSpec,
    ExperimentReport,
    PairedReport,
    ScenarioConfig,
    SwarmSummary,
    SweepPoint,
    WallClock,
)
from .seeding import ScenarioSeeds, derive_seed
from .swarm import ClientState, RoundLog, SnapshotRecorder, run_swarm_async
from .tools.report_tools import emit_plotdata, write_json_atomic, write_jsonl, write_report, write_verdicts

logger = logging.getLogger(__name__)

AXIS_ALIASES = {
    "client_count": "partition.client_count",
    "alpha": "partition.alpha",
    "partition_mode": "partition.mode",
    "weights": "swarm.weights",
    "rounds": "swarm.rounds",
    "local_epochs": "swarm.local_epochs",
    "learning_rate": "swarm.train_cfg.learning_rate",
    "l2_lambda": "defense.l2_lambda",
    "dropout": "defense.dropout_rates",
    "kernel_exponent": "mmd.kernel_exponent",
    "sigma": "mmd.sigma",
}


def _format_validation_error(error: ValidationError) -> str:
    parts = []
    for issue in error.errors():
        path = ".".join(str(p) for p in issue["loc"]) or "<root>"
        parts.append(f"{path}: {issue['msg']}")
    return "; ".join(parts)


def validate_scenario(data: Any) -> ScenarioConfig:
    """Validate a scenario document; failures become ConfigError with dotted field paths."""
    try:
        return ScenarioConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(_format_validation_error(e)) from e


def load_scenario(path: str) -> ScenarioConfig:
    """Read and validate a scenario JSON file."""
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path} is not valid JSON: {e}") from e
    return validate_scenario(data)


def resolve_axis(axis: str) -> List[str]:
    """Dotted config path for a sweep axis (alias or explicit path)."""
    path = AXIS_ALIASES.get(axis, axis).split(".")
    node: Any = ScenarioConfig().model_dump()
    for key in path:
        if not isinstance(node, dict) or key not in node:
            raise ConfigError(f"unknown sweep axis '{axis}'")
        node = node[key]
    return path


def with_axis(cfg: ScenarioConfig, axis: str, value: Any) -> ScenarioConfig:
    """Copy of `cfg` with the axis set to `value`, revalidated."""
    path = resolve_axis(axis)
    data = cfg.model_dump(mode="json")
    node = data
    for key in path[:-1]:
        node = node[key]
    node[path[-1]] = value
    return validate_scenario(data)


@dataclass
class ScenarioRun:
    """A finished scenario with the artifacts behind its report."""

    report: ExperimentReport
    round_logs: List[RoundLog]
    outcome: AttackOutcome
    audit: AuditTrail


class ScenarioHarness:
    """Runs scenarios end to end and writes their artifacts."""

    def __init__(self, output_dir: Optional[str] = None, trace: Optional[bool] = None, write_artifacts: bool = True):
        self.run_context = settings.get_run_context()
        self.output_dir = Path(output_dir or settings.output_dir)
        self.trace = settings.trace_enabled if trace is None else trace
        self.write_artifacts = write_artifacts
        logger.debug("harness ready: output %s, trace %s", self.output_dir, self.trace)

    def prepare_split(self, cfg: ScenarioConfig, seeds: ScenarioSeeds) -> SwarmSplit:
        dataset = load_source(cfg.dataset, derive_seed(cfg.seed, "data"))
        spec = cfg.partition.model_copy(update={"seed": seeds.partition})
        return make_swarm_split(
            dataset,
            spec,
            shadow_fraction=cfg.split.shadow_fraction,
            test_fraction=cfg.split.test_fraction,
            attacker_fraction=cfg.split.attacker_fraction,
            seed=seeds.split,
        )

    async def execute(self, cfg: ScenarioConfig, sweep: Optional[SweepPoint] = None) -> ScenarioRun:
        """split -> swarm -> attack -> evaluate -> report."""
        started_at = datetime.now(timezone.utc).isoformat()
        clock = time.perf_counter()
        n = cfg.client_count
        seeds = ScenarioSeeds.from_seed(cfg.seed, n)
        split = self.prepare_split(cfg, seeds)

        # Swarm
        class_count = split.shared_test.class_count
        base_layers = build_layer_specs(split.shared_test.dim, cfg.model.hidden, class_count)
        layers, train_cfg = apply_defense(base_layers, cfg.swarm.train_cfg, cfg.defense)
        swarm_cfg = cfg.swarm.model_copy(update={"seed": seeds.protocol, "train_cfg": train_cfg})
        initial = init_model(layers, seeds.init)
        weights = swarm_cfg.resolved_weights(n)
        clients = [
            ClientState(k + 1, split.client_train[k], initial.copy(), weights[k], seeds.clients[k])
            for k in range(n)
        ]
        attacker_id = cfg.resolved_attacker()
        recorder = SnapshotRecorder()
        observers: list = [recorder]
        tracer = None
        if cfg.entropy_trace:
            tracer = EntropyTraceObserver(clients[attacker_id - 1].train_data, split.shadow_train)
            observers.append(tracer)
        final_model, round_logs = await run_swarm_async(clients, swarm_cfg, split.shared_test, observers)
        query_model = recorder.snapshot(cfg.query_round) if cfg.query_round else final_model

        # Attack
        audit = AuditTrail()
        context = AttackContext(
            scenario=cfg,
            split=split,
            clients={c.id: c for c in clients},
            query_model=query_model,
            attacker_id=attacker_id,
            victim_ids=cfg.resolved_victims(),
            seed=seeds.attack,
            audit=audit,
        )
        attack = create_attack(cfg.attack)
        logger.info("running %s", attack.describe())
        outcome = await attack.execute(context)

        last = round_logs[-1]
        train_accuracy = sum(last.per_client_train_acc) / len(last.per_client_train_acc)
        summary = SwarmSummary(
            rounds=len(round_logs),
            aggregator_sequence=[log.aggregator_id for log in round_logs],
            final_train_accuracy=train_accuracy,
            final_test_accuracy=last.shared_test_acc,
            generalization_gap=train_accuracy - last.shared_test_acc,
            per_client_train_accuracy=list(last.per_client_train_acc),
            initial_fingerprint=initial.fingerprint(),
            final_fingerprint=final_model.fingerprint(),
        )
        diagnostics = {
            **outcome.diagnostics,
            "partition": partition_summary(split.client_train, split.client_test),
            "split_sizes": {
                "shared_test": len(split.shared_test),
                "shadow_train": len(split.shadow_train),
                "shadow_test": len(split.shadow_test),
            },
            "settings": self.run_context,
        }
        report = ExperimentReport(
            schema_version=settings.report_schema_version,
            artifact_version=__version__,
            seed=cfg.seed,
            scenario=cfg.model_dump(mode="json"),
            attack=cfg.attack,
            metrics=outcome.metrics,
            per_attacker=outcome.per_attacker,
            diagnostics=diagnostics,
            swarm=summary,
            entropy_trace=tracer.points if tracer else [],
            sweep=sweep,
            wall_clock=WallClock(started_at=started_at, seconds=time.perf_counter() - clock),
        )
        logger.info(
            "%s: attack accuracy %.3f (baseline %.3f), macro-F1 %.3f",
            cfg.name, report.metrics.accuracy, report.metrics.baseline, report.metrics.macro_f1,
        )
        return ScenarioRun(report, round_logs, outcome, audit)

    def write_run(self, run: ScenarioRun, directory: Path) -> Path:
        """report.json, verdicts.csv, rounds.jsonl and (when tracing) trace.jsonl."""
        directory = Path(directory)
        report_path = write_report(run.report, directory / "report.json")
        write_verdicts(run.outcome.verdicts, run.outcome.ground_truth, directory / "verdicts.csv")
        write_jsonl((log.to_record() for log in run.round_logs), directory / "rounds.jsonl")
        if self.trace:
            write_jsonl(run.audit.to_records(), directory / "trace.jsonl")
        return report_path

    async def run_scenario(self, cfg: ScenarioConfig, sweep: Optional[SweepPoint] = None) -> ExperimentReport:
        run = await self.execute(cfg, sweep)
        if self.write_artifacts:
            self.write_run(run, self.output_dir / cfg.name)
        return run.report

    async def run_sweep(self, cfg: ScenarioConfig, axis: str, values: Sequence[Any]) -> List[ExperimentReport]:
        """One report per value plus the plot-data CSV; scenarios run concurrently."""
        resolve_axis(axis)
        configs = [with_axis(cfg, axis, value) for value in values]

        async def one(index: int, variant: ScenarioConfig, value: Any) -> ExperimentReport:
            run = await self.execute(variant, SweepPoint(axis=axis, value=value))
            if self.write_artifacts:
                self.write_run(run, self.output_dir / cfg.name / f"sweep_{axis}" / f"{index:03d}")
            return run.report

        reports = list(await asyncio.gather(*(one(i, c, v) for i, (c, v) in enumerate(zip(configs, values)))))
        if self.write_artifacts:
            emit_plotdata(reports, self.output_dir / cfg.name, stem="sweep")
        return reports

    async def compare_defense(
        self,
        cfg: ScenarioConfig,
        defense: DefenseSpec,
        attack: Optional[AttackKind] = None,
    ) -> PairedReport:
        """Same scenario with and without `defense`; both arms run concurrently."""
        update = {"attack": attack} if attack is not None else {}
        defended_cfg = validate_scenario({**cfg.model_dump(mode="json"), **update, "defense": defense.model_dump()})
        undefended_cfg = validate_scenario({**cfg.model_dump(mode="json"), **update, "defense": DefenseSpec().model_dump()})
        defended, undefended = await asyncio.gather(self.execute(defended_cfg), self.execute(undefended_cfg))

        paired = PairedReport(
            schema_version=settings.report_schema_version,
            attack=defended_cfg.attack,
            defense=defense,
            defended=defended.report,
            undefended=undefended.report,
            delta=defense_delta(defended.report, undefended.report),
            initial_states_match=defended.report.swarm.initial_fingerprint == undefended.report.swarm.initial_fingerprint,
        )
        if self.write_artifacts:
            write_json_atomic(paired.model_dump_json(indent=2), self.output_dir / cfg.name / "defense_comparison.json")
        return paired


def run_scenario(cfg: ScenarioConfig, output_dir: Optional[str] = None, write_artifacts: bool = False) -> ExperimentReport:
    """Blocking single-scenario run."""
    harness = ScenarioHarness(output_dir=output_dir, write_artifacts=write_artifacts)
    return asyncio.run(harness.run_scenario(cfg))


def run_sweep(
    cfg: ScenarioConfig,
    axis: str,
    values: Sequence[Any],
    output_dir: Optional[str] = None,
    write_artifacts: bool = False,
) -> List[ExperimentReport]:
    """Blocking sweep."""
    harness = ScenarioHarness(output_dir=output_dir, write_artifacts=write_artifacts)
    return asyncio.run(harness.run_sweep(cfg, axis, values))
