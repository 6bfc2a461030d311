"""
Data models for robustness reports.
Mirrors the clean-accuracy and attacked-accuracy tables of the experiment.
"""

from enum import Enum
from typing import Dict, List, Optional

from pydantic import BaseModel, Field, model_validator


class Variant(str, Enum):
    """Graph a victim model is trained and evaluated on."""
    ORIGINAL = "original"
    PRUNED = "pruned"

    def __str__(self) -> str:
        return self.value


class ReportRow(BaseModel):
    """
    One (variant, rho) cell group of the robustness table.
    """

    variant: Variant
    rho: float = Field(..., ge=0.0)
    clean: float = Field(..., ge=0.0, le=1.0)
    attacked: float = Field(..., ge=0.0, le=1.0)
    delta: float
    saturated: bool = False
    added_edges: int = Field(default=0, ge=0)
    skipped_edges: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def validate_delta(self):
        """Delta must recompute exactly from the accuracy columns."""
        if self.delta != self.attacked - self.clean:
            raise ValueError(
                f"delta {self.delta!r} != attacked - clean ({self.attacked - self.clean!r})"
            )
        return self


class Provenance(BaseModel):
    """Where a report came from."""

    seed: int
    config_hash: str
    timings_ms: Dict[str, float] = Field(default_factory=dict)
    saturation_edge_count: Optional[int] = None
    reference_edge_count: Optional[int] = None
    removed_edge_count: Optional[int] = None


class RobustnessReport(BaseModel):
    """
    Clean accuracy per variant plus attacked accuracy and delta per rho.
    """

    clean_accuracy: Dict[Variant, float]
    rows: List[ReportRow] = Field(default_factory=list)
    provenance: Provenance

    def rows_for(self, variant: Variant) -> List[ReportRow]:
        return [row for row in self.rows if row.variant == variant]

    model_config = {
        "json_schema_extra": {
            "example": {
                "clean_accuracy": {"original": 0.684, "pruned": 0.662},
                "rows": [
                    {
                        "variant": "original",
                        "rho": 0.05,
                        "clean": 0.684,
                        "attacked": 0.676,
                        "delta": -0.008000000000000007,
                        "saturated": False,
                    }
                ],
                "provenance": {"seed": 0, "config_hash": "..."},
            }
        }
    }


class CellSummary(BaseModel):
    """Mean and range of one report cell across seeds."""

    mean: float
    low: float
    high: float


class SeedSweepSummary(BaseModel):
    """Aggregate of several single-seed reports."""

    seeds: List[int]
    clean_accuracy: Dict[str, CellSummary]
    attacked: Dict[str, Dict[str, CellSummary]]
    delta: Dict[str, Dict[str, CellSummary]]
