"""
Data models for the model-aware structural attack.
"""


import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from src.models.prune import floor_fraction


class AttackConfig(BaseModel):
    """
    Perturbation budget of one attack.

    The budget is ``floor(rho * reference_edge_count)`` where the reference
    count is |E| of the original graph, shared by every victim.
    """

    rho: float = Field(..., ge=0.0)
    reference_edge_count: int = Field(..., ge=0)

    @property
    def budget(self) -> int:
        return attack_budget(self.rho, self.reference_edge_count)

    model_config = {"frozen": True}


def attack_budget(rho: float, reference_edge_count: int) -> int:
    """Number of adversarial edges allowed: floor(rho * |E|)."""
    return floor_fraction(rho, reference_edge_count)


class AttackResult(BaseModel):
    """
    Ordered adversarial edge set.

    Attributes:
        added_edges: (m, 2) array of (t, j) pairs in generation order; t is the
            correctly classified test node, j its chosen partner
        saturated: True when valid candidates ran out before the budget
        valid_candidate_count: Number of edges the generator can produce with
            an unbounded budget
        rho: Budget fraction the set was generated for
    """

    added_edges: np.ndarray
    saturated: bool
    valid_candidate_count: int
    rho: float = 0.0

    model_config = ConfigDict(frozen=True, arbitrary_types_allowed=True)

    @field_validator("added_edges", mode="before")
    @classmethod
    def as_pair_array(cls, v):
        return np.asarray(v, dtype=np.int64).reshape(-1, 2)

    @property
    def count(self) -> int:
        return int(len(self.added_edges))
