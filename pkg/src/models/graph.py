"""
Sparse undirected graph and Laplacian operator models.
Graphs are stored as symmetric CSR adjacency and are immutable after construction.
"""

from enum import Enum
from typing import Optional, Tuple, Union

import numpy as np
import scipy.sparse as sp

from src.utils.errors import DataValidationError


class LaplacianVariant(str, Enum):
    """Normalization of a graph Laplacian."""
    COMBINATORIAL = "combinatorial"
    NORMALIZED = "normalized"

    def __str__(self) -> str:
        return self.value


class SparseGraph:
    """
    Undirected weighted graph in compressed sparse row form.

    Both (p, q) and (q, p) are stored so a matvec is a single row sweep.
    Column indices within a row are strictly increasing, weights are
    strictly positive and the diagonal is empty.
    """

    __slots__ = ("num_nodes", "row_offsets", "column_indices", "weights", "_adjacency")

    def __init__(
        self,
        num_nodes: int,
        row_offsets: np.ndarray,
        column_indices: np.ndarray,
        weights: np.ndarray,
        validate: bool = True,
    ):
        self.num_nodes = int(num_nodes)
        self.row_offsets = np.asarray(row_offsets, dtype=np.int64)
        self.column_indices = np.asarray(column_indices, dtype=np.int64)
        self.weights = np.asarray(weights, dtype=np.float64)
        for array in (self.row_offsets, self.column_indices, self.weights):
            array.setflags(write=False)
        self._adjacency: Optional[sp.csr_matrix] = None
        if validate:
            self._validate()

    @classmethod
    def from_edges(
        cls,
        num_nodes: int,
        pairs: np.ndarray,
        weights: Optional[np.ndarray] = None,
    ) -> "SparseGraph":
        """
        Build a graph from undirected pairs listed once each.

        Args:
            num_nodes: Number of nodes N
            pairs: Integer array of shape (M, 2), either orientation
            weights: Positive weights aligned with pairs (default 1.0)

        Returns:
            SparseGraph with symmetrized adjacency
        """
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        if weights is None:
            weights = np.ones(len(pairs), dtype=np.float64)
        weights = np.asarray(weights, dtype=np.float64).reshape(-1)
        if len(weights) != len(pairs):
            raise DataValidationError(
                f"weights length {len(weights)} does not match {len(pairs)} pairs"
            )

        lo = np.minimum(pairs[:, 0], pairs[:, 1])
        hi = np.maximum(pairs[:, 0], pairs[:, 1])
        if len(pairs):
            if lo.min() < 0 or hi.max() >= num_nodes:
                bad = int(np.flatnonzero((lo < 0) | (hi >= num_nodes))[0])
                raise DataValidationError(
                    f"edge ({pairs[bad, 0]}, {pairs[bad, 1]}) references a node outside [0, {num_nodes})"
                )
            loops = np.flatnonzero(lo == hi)
            if len(loops):
                raise DataValidationError(f"self-loop at node {lo[loops[0]]}")
            keys = lo * num_nodes + hi
            _, first, counts = np.unique(keys, return_index=True, return_counts=True)
            if (counts > 1).any():
                dup = int(np.sort(first[counts > 1])[0])
                raise DataValidationError(f"duplicate edge ({lo[dup]}, {hi[dup]})")
            if not (weights > 0).all() or not np.isfinite(weights).all():
                bad = int(np.flatnonzero(~(weights > 0) | ~np.isfinite(weights))[0])
                raise DataValidationError(
                    f"edge ({lo[bad]}, {hi[bad]}) has non-positive weight {weights[bad]}"
                )

        rows = np.concatenate([lo, hi])
        cols = np.concatenate([hi, lo])
        data = np.concatenate([weights, weights])
        adjacency = sp.csr_matrix((data, (rows, cols)), shape=(num_nodes, num_nodes))
        adjacency.sort_indices()
        return cls(num_nodes, adjacency.indptr, adjacency.indices, adjacency.data, validate=False)

    @classmethod
    def empty(cls, num_nodes: int) -> "SparseGraph":
        """Edgeless graph on ``num_nodes`` nodes."""
        return cls.from_edges(num_nodes, np.zeros((0, 2), dtype=np.int64))

    def _validate(self) -> None:
        n = self.num_nodes
        if len(self.row_offsets) != n + 1 or self.row_offsets[0] != 0:
            raise DataValidationError("row_offsets must have N+1 entries starting at 0")
        if (np.diff(self.row_offsets) < 0).any():
            raise DataValidationError("row_offsets must be nondecreasing")
        if len(self.column_indices) != self.row_offsets[-1] or len(self.weights) != self.row_offsets[-1]:
            raise DataValidationError("column_indices/weights length must equal row_offsets[-1]")
        if len(self.column_indices) and (self.column_indices.min() < 0 or self.column_indices.max() >= n):
            raise DataValidationError("column index out of range")
        if not (self.weights > 0).all():
            raise DataValidationError("edge weights must be strictly positive")

        rows = np.repeat(np.arange(n), np.diff(self.row_offsets))
        if (rows == self.column_indices).any():
            node = int(rows[rows == self.column_indices][0])
            raise DataValidationError(f"self-loop at node {node}")
        same_row = rows[1:] == rows[:-1]
        if (same_row & (np.diff(self.column_indices) <= 0)).any():
            raise DataValidationError("column indices must be strictly increasing within each row")

        adjacency = self.adjacency
        asym = adjacency - adjacency.T
        if asym.count_nonzero():
            raise DataValidationError("adjacency is not symmetric")

    @property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric adjacency as a scipy CSR matrix (shared, do not mutate)."""
        if self._adjacency is None:
            self._adjacency = sp.csr_matrix(
                (self.weights, self.column_indices, self.row_offsets),
                shape=(self.num_nodes, self.num_nodes),
            )
        return self._adjacency

    @property
    def num_edges(self) -> int:
        """Number of undirected edges |E|."""
        return len(self.column_indices) // 2

    def degrees(self) -> np.ndarray:
        """Weighted degree of every node."""
        return np.asarray(self.adjacency.sum(axis=1)).ravel()

    def edge_array(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Canonical edge list.

        Returns:
            Tuple of (pairs of shape (M, 2) with p < q ordered by (p, q), weights)
        """
        rows = np.repeat(np.arange(self.num_nodes, dtype=np.int64), np.diff(self.row_offsets))
        upper = self.column_indices > rows
        pairs = np.stack([rows[upper], self.column_indices[upper]], axis=1)
        return pairs, self.weights[upper].copy()

    def has_edge(self, p: int, q: int) -> bool:
        """Whether the undirected edge (p, q) is present."""
        start, end = self.row_offsets[p], self.row_offsets[p + 1]
        row = self.column_indices[start:end]
        pos = np.searchsorted(row, q)
        return bool(pos < len(row) and row[pos] == q)

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, SparseGraph):
            return NotImplemented
        return (
            self.num_nodes == other.num_nodes
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.column_indices, other.column_indices)
            and np.array_equal(self.weights, other.weights)
        )

    def __hash__(self) -> int:
        return hash((self.num_nodes, self.num_edges))

    def __repr__(self) -> str:
        return f"SparseGraph(num_nodes={self.num_nodes}, num_edges={self.num_edges})"


class LaplacianOperator:
    """
    Graph Laplacian with optional diagonal regularization.

    The combinatorial variant is D - A; the normalized variant is
    D^{-1/2} (D - A) D^{-1/2} with isolated nodes given zero rows.
    The regularizer adds epsilon * I to either variant.
    """

    def __init__(
        self,
        graph: SparseGraph,
        variant: Union[LaplacianVariant, str] = LaplacianVariant.COMBINATORIAL,
        epsilon: float = 0.0,
    ):
        try:
            variant = LaplacianVariant(variant)
        except ValueError as e:
            raise DataValidationError(f"unknown Laplacian variant: {variant}") from e
        if epsilon < 0:
            raise DataValidationError(f"regularization must be >= 0, got {epsilon}")
        self.graph = graph
        self.variant = variant
        self.epsilon = float(epsilon)

        adjacency = graph.adjacency
        degrees = graph.degrees()
        laplacian = sp.diags(degrees) - adjacency
        if variant == LaplacianVariant.NORMALIZED:
            self.scaling = np.zeros_like(degrees)
            np.divide(1.0, np.sqrt(degrees), out=self.scaling, where=degrees > 0)
            scale = sp.diags(self.scaling)
            laplacian = scale @ laplacian @ scale
        else:
            self.scaling = None
        if self.epsilon:
            laplacian = laplacian + self.epsilon * sp.identity(graph.num_nodes, format="csr")
        self.matrix: sp.csr_matrix = sp.csr_matrix(laplacian)
        self.matrix.sort_indices()

    @property
    def num_nodes(self) -> int:
        return self.graph.num_nodes

    def diagonal(self) -> np.ndarray:
        """Diagonal of L + epsilon * I."""
        return self.matrix.diagonal()

    def null_weights(self) -> np.ndarray:
        """
        Per-node weights of the null-space direction on each component.

        The null space of the unregularized operator is spanned by the
        restriction of this vector to each connected component.
        """
        if self.variant == LaplacianVariant.NORMALIZED:
            degrees = self.graph.degrees()
            return np.where(degrees > 0, np.sqrt(degrees), 1.0)
        return np.ones(self.graph.num_nodes)

    def with_epsilon(self, epsilon: float) -> "LaplacianOperator":
        """Same graph and variant with another regularizer."""
        return LaplacianOperator(self.graph, self.variant, epsilon)

    def __repr__(self) -> str:
        return (
            f"LaplacianOperator(num_nodes={self.num_nodes}, variant={self.variant.value!r}, "
            f"epsilon={self.epsilon:g})"
        )
