"""
Attack Service for the model-aware edge-insertion attack.

Every correctly classified test node, in ascending order, links to its
nearest node in embedding space that carries another label and is not yet
adjacent to it. The same edge set is injected into every victim graph.
"""

from pathlib import Path
from typing import Dict, Set, Union

import numpy as np

from src.models.attack import AttackConfig, AttackResult
from src.models.graph import SparseGraph
from src.services.dataset_service import load_edge_list, save_edge_list
from src.services.graph_service import add_edges, present_edges
from src.services.hnsw_index import squared_distances
from src.utils.errors import DataValidationError, DimensionError, ParameterError
from src.utils.logging import get_logger

logger = get_logger(__name__)

PathLike = Union[str, Path]


def candidate_edges(
    embeddings: np.ndarray,
    labels: np.ndarray,
    sources: np.ndarray,
    graph: SparseGraph,
) -> np.ndarray:
    """
    Full ordered adversarial edge list with no budget.

    Returns:
        (m, 2) array of (t, j) pairs, one per source that has a valid partner
    """
    added: Dict[int, Set[int]] = {}
    pairs = []
    for t in sources.tolist():
        dists = squared_distances(embeddings[t:t + 1], embeddings)[0]
        blocked = labels == labels[t]
        blocked[t] = True
        blocked[graph.column_indices[graph.row_offsets[t]:graph.row_offsets[t + 1]]] = True
        blocked[np.fromiter(added.get(t, ()), dtype=np.int64)] = True
        if blocked.all():
            continue
        dists[blocked] = np.inf
        j = int(np.argmin(dists))
        pairs.append((t, j))
        added.setdefault(t, set()).add(j)
        added.setdefault(j, set()).add(t)
    return np.array(pairs, dtype=np.int64).reshape(-1, 2)


def generate_attack(
    embeddings: np.ndarray,
    labels: np.ndarray,
    test_mask: np.ndarray,
    correct_mask: np.ndarray,
    graph: SparseGraph,
    cfg: AttackConfig,
) -> AttackResult:
    """
    Generate up to floor(rho * |E_original|) adversarial edges.

    Args:
        embeddings: First-layer GCN representations from the original graph
        labels: Ground-truth node labels
        test_mask: Test nodes
        correct_mask: Nodes the original-graph model classifies correctly
        graph: Graph the edges must not duplicate
        cfg: Budget

    Returns:
        AttackResult whose edges are a prefix of the unbounded list

    Raises:
        ParameterError: If no test node is correctly classified or rho < 0
    """
    if cfg.rho < 0:
        raise ParameterError(f"rho must be >= 0, got {cfg.rho}")
    embeddings = np.asarray(embeddings, dtype=np.float64)
    labels = np.asarray(labels)
    if embeddings.shape[0] != graph.num_nodes or len(labels) != graph.num_nodes:
        raise DimensionError(
            f"embeddings ({embeddings.shape[0]}) and labels ({len(labels)}) must cover {graph.num_nodes} nodes"
        )
    sources = np.flatnonzero(np.asarray(test_mask, bool) & np.asarray(correct_mask, bool))
    if len(sources) == 0:
        raise ParameterError("no correctly classified test node to attack from")

    full = candidate_edges(embeddings, labels, sources, graph)
    budget = cfg.budget
    result = AttackResult(
        added_edges=full[:budget],
        saturated=len(full) < budget,
        valid_candidate_count=len(full),
        rho=cfg.rho,
    )
    logger.info("Attack generated", extra={
        "rho": cfg.rho,
        "budget": budget,
        "added": result.count,
        "saturated": result.saturated,
        "valid_candidates": result.valid_candidate_count,
    })
    return result


def apply_attack(graph: SparseGraph, result: AttackResult) -> SparseGraph:
    """
    Inject the adversarial edges with unit weight.

    Pairs already present in this victim are skipped and counted.
    """
    pairs = np.asarray(result.added_edges, dtype=np.int64).reshape(-1, 2)
    if len(pairs) == 0:
        return graph
    present = present_edges(graph, pairs)
    if present.any():
        logger.info("Skipping adversarial edges already in the victim graph", extra={
            "skipped": int(present.sum()),
            "rho": result.rho,
        })
    return add_edges(graph, pairs[~present])


def save_attack(result: AttackResult, path: PathLike) -> None:
    """Write the header ``rho=<r> saturated=<bool> count=<m>`` then ``t j`` lines."""
    header = f"rho={result.rho!r} saturated={str(result.saturated).lower()} count={result.count}"
    save_edge_list(result.added_edges, path, header=header, canonical=False)


def load_attack(path: PathLike) -> AttackResult:
    header, pairs = load_edge_list(path, skip_header=True)
    fields = dict(item.split("=", 1) for item in (header or "").split() if "=" in item)
    try:
        rho = float(fields["rho"])
        saturated = fields["saturated"] == "true"
        count = int(fields["count"])
    except (KeyError, ValueError) as e:
        raise DataValidationError(f"{Path(path).name}: bad attack header '{header}'") from e
    if count != len(pairs):
        raise DataValidationError(f"{Path(path).name}: header count {count} but {len(pairs)} edges listed")
    return AttackResult(added_edges=pairs, saturated=saturated, valid_candidate_count=count, rho=rho)
