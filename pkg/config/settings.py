"""
Configuration management using Pydantic Settings.
Handles environment, key=value file and command-line configuration with validation.
"""

import hashlib
import json
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, List, Literal, Mapping, Optional

from dotenv import dotenv_values
from pydantic import Field, field_validator, model_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

from src.models.gcn import GcnHyper
from src.models.graph import LaplacianVariant
from src.models.manifold import KnnConfig
from src.models.prune import PruneConfig
from src.models.spectral import SpectralConfig


class ApplicationSettings(BaseSettings):
    """Process-wide settings: logging and debug behaviour."""

    debug: bool = Field(default=False)
    log_level: str = Field(default="INFO")
    log_dir: str = Field(default="logs")
    log_to_file: bool = Field(default=False)

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v):
        """Validate log level is one of the standard logging levels."""
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in valid_levels:
            raise ValueError(f"Log level must be one of: {valid_levels}")
        return v.upper()

    model_config = SettingsConfigDict(
        env_prefix="SPADE_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )


class ExperimentConfig(BaseSettings):
    """
    Flat experiment configuration for the full robustness pipeline.

    Every field can come from a ``key=value`` file, a ``--key value`` flag or
    a ``SPADE_<KEY>`` environment variable. Component configurations are
    exposed as grouped properties.
    """

    # Data and output
    dataset: str = Field(default="data/citeseer")
    output: str = Field(default="out")
    seed: int = Field(default=0)
    seeds: int = Field(default=1, ge=1)
    normalize_features: bool = Field(default=False)

    # GCN backbone
    hidden_dim: int = Field(default=64, ge=1)
    dropout_rate: float = Field(default=0.5, ge=0.0, lt=1.0)
    learning_rate: float = Field(default=0.01, gt=0.0)
    weight_decay: float = Field(default=5e-4, ge=0.0)
    max_epochs: int = Field(default=200, ge=1)

    # k-NN manifold
    knn_k: int = Field(default=10, ge=1)
    knn_method: Literal["auto", "exact", "approximate"] = Field(default="auto")
    knn_max_links: int = Field(default=16, ge=2)
    knn_ef_construction: int = Field(default=200, ge=1)
    knn_ef_search: int = Field(default=128, ge=1)

    # Generalized eigensolver
    num_eigenpairs: int = Field(default=50, ge=1)
    eig_tol: float = Field(default=1e-6, gt=0.0)
    eig_max_sweeps: int = Field(default=500, ge=1)
    eig_eps_scale: float = Field(default=1e-6, ge=0.0)
    laplacian: LaplacianVariant = Field(default=LaplacianVariant.COMBINATORIAL)

    # Pruning and attack
    prune_fraction: float = Field(default=0.2, ge=0.0, le=1.0)
    attack_rhos: List[float] = Field(default_factory=lambda: [0.05, 0.10, 0.15, 0.20, 0.25, 0.30])

    @field_validator("attack_rhos", mode="before")
    @classmethod
    def parse_rho_list(cls, v):
        """Accept comma-separated strings from files and flags."""
        if isinstance(v, str):
            v = [item for item in v.replace(" ", "").split(",") if item]
        return v

    @field_validator("attack_rhos")
    @classmethod
    def validate_rhos(cls, v):
        """Attack budgets are nonnegative fractions."""
        if any(rho < 0 for rho in v):
            raise ValueError("attack_rhos values must be >= 0")
        return v

    @model_validator(mode="after")
    def validate_beam_widths(self):
        """HNSW beams narrower than k cannot return k neighbors."""
        for name in ("knn_ef_construction", "knn_ef_search"):
            if getattr(self, name) < self.knn_k:
                raise ValueError(f"{name}={getattr(self, name)} must be >= knn_k={self.knn_k}")
        return self

    model_config = SettingsConfigDict(
        env_prefix="SPADE_",
        case_sensitive=False,
        extra="forbid",
    )

    @classmethod
    def from_sources(
        cls,
        config_file: Optional[str] = None,
        overrides: Optional[Mapping[str, Any]] = None,
    ) -> "ExperimentConfig":
        """
        Build a configuration from a key=value file plus flag overrides.

        Args:
            config_file: Optional path to a flat ``key=value`` file
            overrides: Values taken from ``--key value`` flags

        Returns:
            Validated ExperimentConfig
        """
        values: Dict[str, Any] = {}
        if config_file:
            path = Path(config_file)
            if not path.is_file():
                raise FileNotFoundError(f"Config file not found: {config_file}")
            values.update(
                {k.strip().lower(): v for k, v in dotenv_values(path).items() if v is not None}
            )
        if overrides:
            values.update({k: v for k, v in overrides.items() if v is not None})
        return cls(**values)

    def with_seed(self, seed: int, output: Optional[str] = None) -> "ExperimentConfig":
        """Copy of this config with another seed (and optionally output dir)."""
        update: Dict[str, Any] = {"seed": seed}
        if output is not None:
            update["output"] = output
        return self.model_copy(update=update)

    def config_digest(self) -> str:
        """SHA-256 of the canonical JSON form, used for report provenance."""
        payload = json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def as_flat_text(self) -> str:
        """Render as a key=value file that ``from_sources`` reads back."""
        lines = []
        for key, value in sorted(self.model_dump(mode="json").items()):
            if isinstance(value, list):
                value = ",".join(repr(float(item)) for item in value)
            elif isinstance(value, bool):
                value = str(value).lower()
            lines.append(f"{key}={value}")
        return "\n".join(lines) + "\n"

    # Grouped accessors for the component configurations
    @property
    def gcn(self) -> GcnHyper:
        """GCN backbone hyperparameters."""
        return GcnHyper(
            hidden_dim=self.hidden_dim,
            dropout_rate=self.dropout_rate,
            learning_rate=self.learning_rate,
            weight_decay=self.weight_decay,
            max_epochs=self.max_epochs,
            seed=self.seed,
        )

    @property
    def knn(self) -> KnnConfig:
        """k-NN manifold construction settings."""
        return KnnConfig(
            k=self.knn_k,
            method=self.knn_method,
            max_links_per_node=self.knn_max_links,
            ef_construction=self.knn_ef_construction,
            ef_search=self.knn_ef_search,
            seed=self.seed,
        )

    @property
    def spectral(self) -> SpectralConfig:
        """Generalized eigensolver settings."""
        return SpectralConfig(
            s=self.num_eigenpairs,
            tol=self.eig_tol,
            max_sweeps=self.eig_max_sweeps,
            eps_scale=self.eig_eps_scale,
            laplacian=self.laplacian,
            seed=self.seed,
        )

    @property
    def prune(self) -> PruneConfig:
        """Edge pruning settings."""
        return PruneConfig(fraction=self.prune_fraction)


@lru_cache(maxsize=1)
def get_settings() -> ApplicationSettings:
    """
    Get application settings singleton.

    Returns:
        ApplicationSettings: Configured application settings
    """
    return ApplicationSettings()
