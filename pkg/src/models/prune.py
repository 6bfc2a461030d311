"""
Configuration model for score-guided edge pruning.
"""

import math

from pydantic import BaseModel, Field


class PruneConfig(BaseModel):
    """Fraction of canonical undirected edges to delete, highest scores first."""

    fraction: float = Field(default=0.2, ge=0.0, le=1.0)

    model_config = {"frozen": True}


def floor_fraction(fraction: float, total: int) -> int:
    """floor(fraction * total), tolerant of products a hair under an integer."""
    return int(math.floor(fraction * total + 1e-9))
