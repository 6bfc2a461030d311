"""
Configuration model for k-NN manifold construction.
"""

from typing import Literal

from pydantic import BaseModel, Field, model_validator

# Above this node count the automatic method switches to the approximate index.
EXACT_NODE_LIMIT = 4096


class KnnConfig(BaseModel):
    """
    k-NN graph construction settings.

    ``method='auto'`` picks exact search up to EXACT_NODE_LIMIT nodes and the
    approximate index above.
    """

    k: int = Field(default=10, ge=1)
    method: Literal["auto", "exact", "approximate"] = "auto"
    metric: Literal["euclidean"] = "euclidean"
    max_links_per_node: int = Field(default=16, ge=2)
    ef_construction: int = Field(default=200, ge=1)
    ef_search: int = Field(default=128, ge=1)
    seed: int = 0

    @model_validator(mode="after")
    def validate_beams(self):
        """Search beams must be at least as wide as k."""
        if self.ef_construction < self.k or self.ef_search < self.k:
            raise ValueError(
                f"ef_construction ({self.ef_construction}) and ef_search ({self.ef_search}) must be >= k ({self.k})"
            )
        return self

    def resolve_method(self, num_nodes: int) -> str:
        """Concrete method for a given node count."""
        if self.method != "auto":
            return self.method
        return "exact" if num_nodes <= EXACT_NODE_LIMIT else "approximate"

    model_config = {"frozen": True}
