#!/usr/bin/env python3
"""
Swarm Leakage - Membership Inference Audits of Swarm Learning

This is the main entry point for running scenarios, sweeps and self-tests.
"""

import asyncio
import json
from typing import Callable, List, Optional

import typer
from pydantic import ValidationError
from rich.console import Console
from rich.panel import Panel
from rich.progress import Progress, SpinnerColumn, TextColumn
from rich.table import Table

from src.attacks.mmd import oracle_check
from src.config import configure_logging, settings
from src.datasets import partition_summary
from src.errors import ConfigError
from src.harness import ScenarioHarness, load_scenario
from src.nn import gradient_check
from src.schemas import AttackKind, DefenseSpec, ExperimentReport, MMDConfig
from src.seeding import ScenarioSeeds

app = typer.Typer(help="Swarm Leakage - membership inference audits of decentralized swarm learning")
console = Console()

EXIT_CONFIG_ERROR = 2
EXIT_RUNTIME_ERROR = 3


def _guarded(action: Callable[[], None]) -> None:
    """Run a command body, mapping failures to exit codes 2 (config) and 3 (runtime)."""
    try:
        action()
    except (ConfigError, ValidationError) as e:
        console.print(f"❌ Configuration error: {e}", style="red")
        raise typer.Exit(code=EXIT_CONFIG_ERROR)
    except typer.Exit:
        raise
    except Exception as e:
        console.print(f"❌ Run failed: {e}", style="red")
        if settings.verbose:
            console.print_exception()
        raise typer.Exit(code=EXIT_RUNTIME_ERROR)


def _with_spinner(description: str, coroutine):
    with Progress(SpinnerColumn(), TextColumn("[progress.description]{task.description}"), console=console) as progress:
        task = progress.add_task(description, total=None)
        result = asyncio.run(coroutine)
        progress.update(task, completed=True)
    return result


def _show_report(report: ExperimentReport):
    """Display the headline metrics of one report."""
    table = Table(title=f"📊 {report.scenario.get('name')} ({report.attack.value})", show_header=True)
    table.add_column("Metric", style="cyan")
    table.add_column("Value", style="white", justify="right")

    rows = [
        ("Attack accuracy", f"{report.metrics.accuracy:.3f}"),
        ("Blind-guess baseline", f"{report.metrics.baseline:.3f}"),
        ("Macro-F1", f"{report.metrics.macro_f1:.3f}"),
        ("Macro precision / recall", f"{report.metrics.macro_precision:.3f} / {report.metrics.macro_recall:.3f}"),
        ("Targets", str(report.metrics.n_targets)),
        ("Swarm train accuracy", f"{report.swarm.final_train_accuracy:.3f}"),
        ("Swarm test accuracy", f"{report.swarm.final_test_accuracy:.3f}"),
        ("Generalization gap", f"{report.swarm.generalization_gap:.3f}"),
        ("Wall clock", f"{report.wall_clock.seconds:.1f}s"),
    ]
    for attacker, metrics in report.per_attacker.items():
        rows.append((f"Attacker {attacker} accuracy", f"{metrics.accuracy:.3f}"))

    for key, value in rows:
        table.add_row(key, value)
    console.print(table)


def _parse_json_list(raw: str, option: str) -> list:
    try:
        values = json.loads(raw)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{option} must be a JSON list: {e}") from e
    if not isinstance(values, list):
        raise ConfigError(f"{option} must be a JSON list")
    return values


@app.command()
def run(
    config: str = typer.Option(..., "--config", "-c", help="Scenario JSON file"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Output directory"),
    trace: bool = typer.Option(False, "--trace", help="Write intermediate attack decisions as JSON lines"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose output"),
):
    """Run one scenario: split, swarm training, attack, evaluation, report."""
    settings.verbose = settings.verbose or verbose
    configure_logging("DEBUG" if verbose else None)

    def body():
        scenario = load_scenario(config)
        console.print(Panel(f"🐝 Running scenario: {scenario.name} ({scenario.attack.value})", style="blue"))
        harness = ScenarioHarness(output_dir=out, trace=trace or settings.trace_enabled)
        report = _with_spinner("Training swarm and running attack...", harness.run_scenario(scenario))
        _show_report(report)
        console.print(f"✅ Report written to {harness.output_dir / scenario.name / 'report.json'}", style="green")

    _guarded(body)


@app.command()
def sweep(
    config: str = typer.Option(..., "--config", "-c", help="Scenario JSON file"),
    axis: str = typer.Option(..., "--axis", "-a", help="Config field to vary (alias or dotted path)"),
    values: str = typer.Option(..., "--values", help="JSON list of values"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Output directory"),
    verbose: bool = typer.Option(False, "--verbose", "-v", help="Enable verbose output"),
):
    """Run a scenario once per value of one axis and export plot data."""
    settings.verbose = settings.verbose or verbose
    configure_logging("DEBUG" if verbose else None)

    def body():
        scenario = load_scenario(config)
        parsed = _parse_json_list(values, "--values")
        console.print(Panel(f"🔁 Sweeping {axis} over {len(parsed)} values", style="blue"))
        harness = ScenarioHarness(output_dir=out)
        reports = _with_spinner("Running sweep...", harness.run_sweep(scenario, axis, parsed))

        table = Table(title=f"Sweep: {axis}", show_header=True, header_style="bold magenta")
        table.add_column("Value", style="cyan")
        table.add_column("Accuracy", justify="right")
        table.add_column("Macro-F1", justify="right")
        table.add_column("Baseline", justify="right")
        for value, report in zip(parsed, reports):
            table.add_row(json.dumps(value), f"{report.metrics.accuracy:.3f}", f"{report.metrics.macro_f1:.3f}", f"{report.metrics.baseline:.3f}")
        console.print(table)
        console.print(f"✅ Plot data written under {harness.output_dir / scenario.name}", style="green")

    _guarded(body)


@app.command("compare-defense")
def compare_defense(
    config: str = typer.Option(..., "--config", "-c", help="Scenario JSON file"),
    dropout: str = typer.Option("", "--dropout", help="Comma-separated dropout rates for the hidden layers"),
    l2: float = typer.Option(0.0, "--l2", help="Weight decay of the defended arm"),
    attack: Optional[AttackKind] = typer.Option(None, "--attack", help="Override the scenario's attack"),
    out: Optional[str] = typer.Option(None, "--out", "-o", help="Output directory"),
):
    """Run a scenario with and without a defense under the same seeds."""
    configure_logging()

    def body():
        scenario = load_scenario(config)
        try:
            rates = [float(rate) for rate in dropout.split(",") if rate.strip()]
        except ValueError as e:
            raise ConfigError(f"--dropout: {e}") from e
        defense = DefenseSpec(dropout_rates=rates, l2_lambda=l2)
        console.print(Panel(f"🛡️ Defense comparison: dropout {rates or 'off'}, L2 {l2}", style="blue"))
        harness = ScenarioHarness(output_dir=out)
        paired = _with_spinner("Running defended and undefended arms...", harness.compare_defense(scenario, defense, attack))

        table = Table(title="Defended minus undefended", show_header=True)
        table.add_column("Quantity", style="cyan")
        table.add_column("Undefended", justify="right")
        table.add_column("Defended", justify="right")
        table.add_column("Delta", justify="right")
        d, u = paired.defended, paired.undefended
        table.add_row("Attack accuracy", f"{u.metrics.accuracy:.3f}", f"{d.metrics.accuracy:.3f}", f"{paired.delta.attack_accuracy:+.3f}")
        table.add_row("Macro-F1", f"{u.metrics.macro_f1:.3f}", f"{d.metrics.macro_f1:.3f}", f"{paired.delta.macro_f1:+.3f}")
        table.add_row("Train accuracy", f"{u.swarm.final_train_accuracy:.3f}", f"{d.swarm.final_train_accuracy:.3f}", f"{paired.delta.train_accuracy:+.3f}")
        table.add_row("Test accuracy", f"{u.swarm.final_test_accuracy:.3f}", f"{d.swarm.final_test_accuracy:.3f}", f"{paired.delta.test_accuracy:+.3f}")
        table.add_row("Generalization gap", f"{u.swarm.generalization_gap:.3f}", f"{d.swarm.generalization_gap:.3f}", f"{paired.delta.generalization_gap:+.3f}")
        console.print(table)
        status = "✅ identical" if paired.initial_states_match else "⚠️ different"
        console.print(f"Initial model states: {status}")

    _guarded(body)


@app.command("partition-table")
def partition_table(
    config: str = typer.Option(..., "--config", "-c", help="Scenario JSON file"),
):
    """Show each client's label set and train/test sizes for a scenario's split."""
    configure_logging()

    def body():
        scenario = load_scenario(config)
        harness = ScenarioHarness(write_artifacts=False)
        split = harness.prepare_split(scenario, ScenarioSeeds.from_seed(scenario.seed, scenario.client_count))

        table = Table(title=f"Client partition ({scenario.partition.mode.value})", show_header=True, header_style="bold magenta")
        table.add_column("Client", style="cyan")
        table.add_column("Labels", style="white")
        table.add_column("Train", justify="right")
        table.add_column("Test", justify="right")
        for row in partition_summary(split.client_train, split.client_test):
            table.add_row(str(row["client_id"]), ", ".join(map(str, row["labels"])), str(row["train_size"]), str(row["test_size"]))
        console.print(table)

    _guarded(body)


@app.command()
def gradcheck(
    trials: int = typer.Option(20, "--trials", help="Random (model, batch) pairs"),
    seed: int = typer.Option(0, "--seed", help="Seed for the random cases"),
):
    """Compare analytic gradients with central finite differences."""
    console.print(Panel("🧪 Gradient check", style="blue"))

    def body():
        error = gradient_check(trials=trials, seed=seed, step=settings.gradcheck_step)
        console.print(f"Max relative error over {trials} cases: [bold]{error:.3e}[/bold]")
        if error >= settings.gradcheck_tolerance:
            raise RuntimeError(f"gradient check failed: {error:.3e} >= {settings.gradcheck_tolerance:.0e}")
        console.print("✅ Analytic gradients match finite differences", style="green")

    _guarded(body)


@app.command()
def mmdcheck(
    pairs: int = typer.Option(50, "--pairs", help="Random set pairs"),
    seed: int = typer.Option(0, "--seed", help="Seed for the random sets"),
    exponent: int = typer.Option(2, "--exponent", help="Kernel exponent (1 or 2)"),
):
    """Compare kernel-trick MMD with the double-sum reference."""
    console.print(Panel("🧪 MMD oracle check", style="blue"))

    def body():
        result = oracle_check(pairs=pairs, seed=seed, cfg=MMDConfig(kernel_exponent=exponent))
        for key, value in result.items():
            console.print(f"  {key}: [bold]{value:.3e}[/bold]")
        failures: List[str] = []
        if result["max_oracle_error"] > settings.mmd_tolerance:
            failures.append("kernel trick disagrees with the double sum")
        if result["max_self_distance"] > 1e-9:
            failures.append("mmd(a, a) is not zero")
        if result["max_asymmetry"] > settings.mmd_tolerance:
            failures.append("mmd is not symmetric")
        if failures:
            raise RuntimeError("; ".join(failures))
        console.print("✅ MMD matches the reference", style="green")

    _guarded(body)


@app.command()
def config():
    """Display current configuration settings."""
    config_table = Table(title="⚙️ Current Configuration", show_header=True)
    config_table.add_column("Setting", style="cyan")
    config_table.add_column("Value", style="white")

    config_data = [
        ("Output Directory", settings.output_dir),
        ("Log Level", settings.log_level),
        ("Trace by Default", settings.trace_enabled),
        ("Concurrent Client Training", settings.concurrent_clients),
        *((key.replace("_", " ").title(), value) for key, value in settings.get_run_context().items()),
    ]

    for key, value in config_data:
        config_table.add_row(key, str(value))

    console.print(config_table)


if __name__ == "__main__":
    try:
        app()
    except KeyboardInterrupt:
        console.print("\n👋 Interrupted by user", style="yellow")
