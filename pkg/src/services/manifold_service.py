"""
Manifold Service for building k-NN graphs over node embeddings.
Exact all-pairs search for verification and moderate sizes, an HNSW index for scale.
"""

import time
from typing import Union

import numpy as np

from src.models.graph import SparseGraph
from src.models.manifold import KnnConfig
from src.services.hnsw_index import HnswIndex, squared_distances
from src.utils.errors import DimensionError, NumericError, ParameterError
from src.utils.logging import get_logger, log_performance

logger = get_logger(__name__)

# Upper bound on the number of difference entries materialized per block.
_BLOCK_ENTRIES = 1 << 22


def _check_embeddings(embeddings: np.ndarray, k: int) -> np.ndarray:
    embeddings = np.asarray(embeddings, dtype=np.float64)
    if embeddings.ndim != 2:
        raise DimensionError(f"embeddings must be a matrix, got shape {embeddings.shape}")
    if embeddings.shape[0] <= k:
        raise ParameterError(f"k-NN needs more than k={k} nodes, got {embeddings.shape[0]}")
    if not np.isfinite(embeddings).all():
        raise NumericError("embeddings contain non-finite entries")
    return embeddings


def exact_neighbors(embeddings: np.ndarray, k: int) -> np.ndarray:
    """
    k nearest other rows of every row, ties broken by lower index.

    Returns:
        Integer array (N, k), each row ascending by (distance, index)
    """
    embeddings = _check_embeddings(embeddings, k)
    num_nodes, dim = embeddings.shape
    block = max(1, _BLOCK_ENTRIES // max(1, num_nodes * dim))
    neighbors = np.empty((num_nodes, k), dtype=np.int64)
    for start in range(0, num_nodes, block):
        stop = min(start + block, num_nodes)
        dists = squared_distances(embeddings[start:stop], embeddings)
        dists[np.arange(stop - start), np.arange(start, stop)] = np.inf
        neighbors[start:stop] = np.argsort(dists, axis=1, kind="stable")[:, :k]
    return neighbors


def approx_neighbors(embeddings: np.ndarray, cfg: KnnConfig) -> np.ndarray:
    """k approximate nearest other rows of every row via an HNSW index."""
    embeddings = _check_embeddings(embeddings, cfg.k)
    index = HnswIndex(embeddings, cfg.max_links_per_node, cfg.ef_construction, cfg.seed).build()
    neighbors = np.empty((len(embeddings), cfg.k), dtype=np.int64)
    for node in range(len(embeddings)):
        found = [key for _, key in index.query(embeddings[node], cfg.k + 1, cfg.ef_search) if key != node]
        if len(found) < cfg.k:
            # beam came back short; widen to the full index
            found = [key for _, key in index.query(embeddings[node], cfg.k + 1, len(index)) if key != node]
        neighbors[node] = found[: cfg.k]
    return neighbors


def neighbors_to_graph(neighbors: np.ndarray) -> SparseGraph:
    """Symmetrize directed neighbor lists by union into a unit-weight graph."""
    num_nodes, k = neighbors.shape
    sources = np.repeat(np.arange(num_nodes, dtype=np.int64), k)
    targets = neighbors.reshape(-1)
    pairs = np.stack([np.minimum(sources, targets), np.maximum(sources, targets)], axis=1)
    return SparseGraph.from_edges(num_nodes, np.unique(pairs, axis=0))


def exact_knn_graph(embeddings: np.ndarray, cfg: KnnConfig) -> SparseGraph:
    """
    Exact k-NN graph by all-pairs Euclidean search.

    Raises:
        ParameterError: If N <= k
        NumericError: On non-finite embedding entries
    """
    return neighbors_to_graph(exact_neighbors(embeddings, cfg.k))


def approx_knn_graph(embeddings: np.ndarray, cfg: KnnConfig) -> SparseGraph:
    """Approximate k-NN graph; same output contract as the exact method."""
    return neighbors_to_graph(approx_neighbors(embeddings, cfg))


def build_knn_graph(embeddings: np.ndarray, cfg: KnnConfig) -> SparseGraph:
    """
    Build the manifold graph with the method ``cfg`` resolves to for this size.

    Args:
        embeddings: Node embeddings N x h
        cfg: k-NN settings

    Returns:
        Symmetric unit-weight SparseGraph
    """
    start_time = time.time()
    method = cfg.resolve_method(len(embeddings))
    if method == "exact":
        graph = exact_knn_graph(embeddings, cfg)
    else:
        graph = approx_knn_graph(embeddings, cfg)
    log_performance("knn_graph", (time.time() - start_time) * 1000, logger)
    logger.info("k-NN graph built", extra={
        "method": method,
        "k": cfg.k,
        "nodes": graph.num_nodes,
        "edges": graph.num_edges,
    })
    return graph


def knn_recall(approx: Union[np.ndarray, SparseGraph], exact: Union[np.ndarray, SparseGraph]) -> float:
    """
    Recall of an approximate result against the exact one.

    Neighbor arrays (N, k) give the mean per-node overlap fraction; graphs
    give the fraction of exact edges present in the approximate graph.
    """
    if isinstance(approx, SparseGraph) and isinstance(exact, SparseGraph):
        exact_pairs, _ = exact.edge_array()
        if len(exact_pairs) == 0:
            return 1.0
        hits = sum(approx.has_edge(int(p), int(q)) for p, q in exact_pairs)
        return hits / len(exact_pairs)

    approx = np.asarray(approx)
    exact = np.asarray(exact)
    if approx.shape != exact.shape:
        raise DimensionError(f"neighbor arrays differ in shape: {approx.shape} vs {exact.shape}")
    hits = sum(len(np.intersect1d(a, e)) for a, e in zip(approx, exact))
    return hits / exact.size
