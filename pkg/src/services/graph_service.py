"""
Graph operations: Laplacian products, GCN propagation matrix and edge edits.
All operations are pure; edits return new graphs and leave their input untouched.
"""

from typing import Iterable, Sequence, Tuple, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components as _connected_components

from src.models.graph import LaplacianOperator, SparseGraph
from src.utils.errors import DataValidationError, DimensionError, MissingEdgeError
from src.utils.logging import get_logger

logger = get_logger(__name__)

EdgeInput = Union[np.ndarray, Sequence[Tuple[int, int]]]


def _as_pairs(edges: EdgeInput) -> np.ndarray:
    return np.asarray(edges, dtype=np.int64).reshape(-1, 2)


def _check_length(op: LaplacianOperator, x: np.ndarray) -> None:
    if x.shape[0] != op.num_nodes:
        raise DimensionError(f"vector has length {x.shape[0]}, operator has {op.num_nodes} nodes")


def laplacian_quadratic_form(op: LaplacianOperator, x: np.ndarray) -> float:
    """
    Evaluate x^T (L + eps I) x edge by edge.

    For the combinatorial variant this is sum_{(p,q)} w(p,q) (x_p - x_q)^2
    + eps ||x||^2, which is nonnegative by construction.

    Args:
        op: Laplacian operator
        x: Real vector of length N

    Returns:
        Value of the quadratic form
    """
    x = np.asarray(x, dtype=np.float64)
    _check_length(op, x)
    pairs, weights = op.graph.edge_array()
    y = x if op.scaling is None else x * op.scaling
    diff = y[pairs[:, 0]] - y[pairs[:, 1]]
    return float(np.dot(weights, diff * diff) + op.epsilon * np.dot(x, x))


def laplacian_matvec(op: LaplacianOperator, x: np.ndarray) -> np.ndarray:
    """
    Apply (L + eps I) to a vector or to a block of column vectors.

    Args:
        op: Laplacian operator
        x: Array of shape (N,) or (N, b)

    Returns:
        Product with the same shape as x
    """
    x = np.asarray(x, dtype=np.float64)
    _check_length(op, x)
    return op.matrix @ x


def gcn_normalized_adjacency(g: SparseGraph) -> sp.csr_matrix:
    """
    Symmetric GCN propagation matrix D~^{-1/2} (A + I) D~^{-1/2}.

    Isolated nodes get degree 1 from their self-loop, so every diagonal
    entry is positive.
    """
    with_loops = g.adjacency + sp.identity(g.num_nodes, format="csr")
    degrees = np.asarray(with_loops.sum(axis=1)).ravel()
    scale = sp.diags(1.0 / np.sqrt(degrees))
    norm_adj = sp.csr_matrix(scale @ with_loops @ scale)
    norm_adj.sort_indices()
    return norm_adj


def connected_components(g: SparseGraph) -> Tuple[int, np.ndarray]:
    """
    Connected components of the graph.

    Returns:
        Tuple of (component count, component label per node)
    """
    count, labels = _connected_components(g.adjacency, directed=False)
    return int(count), labels.astype(np.int64)


def _edge_keys(pairs: np.ndarray, num_nodes: int) -> np.ndarray:
    lo = np.minimum(pairs[:, 0], pairs[:, 1])
    hi = np.maximum(pairs[:, 0], pairs[:, 1])
    return lo * num_nodes + hi


def remove_edges(g: SparseGraph, edges: EdgeInput) -> SparseGraph:
    """
    Remove undirected edges from a graph.

    Args:
        g: Input graph
        edges: Pairs to delete, either orientation

    Returns:
        New graph without those edges

    Raises:
        MissingEdgeError: If a pair is not an edge of g
    """
    pairs = _as_pairs(edges)
    if len(pairs) == 0:
        return g
    for p, q in pairs:
        if not (0 <= p < g.num_nodes and 0 <= q < g.num_nodes) or not g.has_edge(int(p), int(q)):
            raise MissingEdgeError(int(p), int(q))

    current, weights = g.edge_array()
    keep = ~np.isin(_edge_keys(current, g.num_nodes), _edge_keys(pairs, g.num_nodes))
    logger.debug("Removing edges", extra={"removed": int(len(pairs)), "remaining": int(keep.sum())})
    return SparseGraph.from_edges(g.num_nodes, current[keep], weights[keep])


def add_edges(g: SparseGraph, edges: EdgeInput, weight: float = 1.0) -> SparseGraph:
    """
    Add undirected edges with a common positive weight.

    Raises:
        DataValidationError: On self-loops, pairs already present, or
            pairs repeated within ``edges``
    """
    if not weight > 0:
        raise DataValidationError(f"edge weight must be positive, got {weight}")
    pairs = _as_pairs(edges)
    if len(pairs) == 0:
        return g
    for p, q in pairs:
        if p == q:
            raise DataValidationError(f"self-loop at node {p}")
        if 0 <= p < g.num_nodes and 0 <= q < g.num_nodes and g.has_edge(int(p), int(q)):
            raise DataValidationError(f"edge ({p}, {q}) already present")

    current, weights = g.edge_array()
    merged = np.concatenate([current, pairs])
    merged_weights = np.concatenate([weights, np.full(len(pairs), float(weight))])
    return SparseGraph.from_edges(g.num_nodes, merged, merged_weights)


def present_edges(g: SparseGraph, edges: Iterable[Tuple[int, int]]) -> np.ndarray:
    """Boolean mask marking which pairs are already edges of g."""
    return np.array([g.has_edge(int(p), int(q)) for p, q in edges], dtype=bool)
