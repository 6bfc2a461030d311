"""
Prune Service: remove the highest-scoring edges of a graph.
"""

from pathlib import Path
from typing import Tuple, Union

import numpy as np

from src.models.graph import SparseGraph
from src.models.prune import PruneConfig, floor_fraction
from src.models.spectral import EdgeScoreTable
from src.services.dataset_service import save_edge_list
from src.services.graph_service import remove_edges
from src.utils.errors import DataValidationError
from src.utils.logging import get_logger

logger = get_logger(__name__)


def prune_graph(graph: SparseGraph, scores: EdgeScoreTable, cfg: PruneConfig) -> Tuple[SparseGraph, np.ndarray]:
    """
    Remove the floor(fraction * |E|) top-ranked edges.

    Args:
        graph: Graph the scores were computed on
        scores: Score table aligned with ``graph.edge_array()``
        cfg: Pruning fraction

    Returns:
        Tuple of (pruned graph, removed pairs in ranked order)

    Raises:
        DataValidationError: If the score table does not list the graph's
            canonical edges in canonical order
    """
    edges, _ = graph.edge_array()
    if len(scores) != len(edges) or not np.array_equal(np.asarray(scores.edges).reshape(-1, 2), edges):
        raise DataValidationError(
            f"score table with {len(scores)} entries is not aligned with the graph's {len(edges)} edges"
        )

    budget = floor_fraction(cfg.fraction, graph.num_edges)
    removed = edges[scores.ranking[:budget]]
    pruned = remove_edges(graph, removed)

    logger.info("Graph pruned", extra={
        "fraction": cfg.fraction,
        "removed": int(budget),
        "remaining": pruned.num_edges,
        "min_removed_score": float(scores.scores[scores.ranking[budget - 1]]) if budget else None,
    })
    return pruned, removed


def save_removed_edges(removed: np.ndarray, path: Union[str, Path]) -> None:
    """Export the removed pairs in ranked order using the dataset edge format."""
    save_edge_list(removed, path)
