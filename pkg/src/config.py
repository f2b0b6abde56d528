"""Configuration management for the swarm leakage simulator."""

import logging

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict
from rich.logging import RichHandler


class Settings(BaseSettings):
    """Application settings loaded from environment variables."""

    model_config = SettingsConfigDict(env_file='.env', env_file_encoding='utf-8', env_prefix='LEAKAGE_')

    # Output Configuration
    output_dir: str = Field(default="./runs", description="Directory for reports, traces and plot data")
    log_level: str = Field(default="INFO", description="Root log level")
    verbose: bool = Field(default=False, description="Show tracebacks and debug output in the CLI")
    trace_enabled: bool = Field(default=False, description="Write MMD intermediate distances by default")

    # Swarm Configuration
    concurrent_clients: bool = Field(default=True, description="Train clients of a round on worker threads")

    # Split Configuration
    default_alpha: float = Field(default=0.5, gt=0, description="Dirichlet concentration for non-IID splits")
    default_shadow_fraction: float = Field(default=0.5, gt=0, lt=1, description="Share of the attacker pool used as shadow-train")
    default_test_fraction: float = Field(default=0.2, gt=0, lt=1, description="Share of the source held out as shared test")
    default_attacker_fraction: float = Field(default=0.2, gt=0, lt=1, description="Share of the source given to the attacker pool")

    # Attack Model Configuration
    attack_hidden: str = Field(default="64,32", description="Comma-separated hidden layer widths of the attack MLP")
    attack_epochs: int = Field(default=100, ge=1, description="Attack MLP training epochs")
    attack_learning_rate: float = Field(default=0.01, gt=0, description="Attack MLP learning rate")
    attack_batch_size: int = Field(default=8, ge=1, description="Attack MLP mini-batch size")

    # Self-test Configuration
    gradcheck_tolerance: float = Field(default=1e-4, gt=0, description="Max relative error for gradcheck")
    gradcheck_step: float = Field(default=1e-5, gt=0, description="Central finite-difference step")
    mmd_tolerance: float = Field(default=1e-12, gt=0, description="Kernel-trick vs double-sum tolerance")

    # Reports
    report_schema_version: str = Field(default="1.0", description="Version stamped into every report")

    @property
    def attack_hidden_layers(self) -> list[int]:
        """Get attack hidden layer widths as a list."""
        if not self.attack_hidden:
            return []
        return [int(width.strip()) for width in self.attack_hidden.split(',') if width.strip()]

    def get_run_context(self) -> dict:
        """Get the resolved defaults echoed into reports."""
        return {
            "default_alpha": self.default_alpha,
            "default_shadow_fraction": self.default_shadow_fraction,
            "default_test_fraction": self.default_test_fraction,
            "default_attacker_fraction": self.default_attacker_fraction,
            "attack_hidden_layers": self.attack_hidden_layers,
            "attack_epochs": self.attack_epochs,
            "attack_learning_rate": self.attack_learning_rate,
            "attack_batch_size": self.attack_batch_size,
            "report_schema_version": self.report_schema_version,
        }


def configure_logging(level: str | None = None) -> None:
    """Route all package loggers through a rich handler."""
    logging.basicConfig(
        level=(level or settings.log_level).upper(),
        format="%(message)s",
        datefmt="[%X]",
        handlers=[RichHandler(rich_tracebacks=settings.verbose, show_path=False)],
        force=True,
    )


# Global settings instance
settings = Settings()
