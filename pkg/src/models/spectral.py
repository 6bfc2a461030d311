"""
Data models for the generalized eigensolver, spectral embeddings and edge scores.
"""

from typing import List

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from src.models.graph import LaplacianVariant
from src.utils.errors import DataValidationError, DimensionError


class SpectralConfig(BaseModel):
    """
    Settings of the block eigensolver on the pencil (L_X, L_Y + eps I).

    ``eps_scale`` multiplies the mean diagonal of L_Y to give eps; zero
    disables regularization (deflation alone keeps the pencil definite).
    """

    s: int = Field(default=50, ge=1)
    tol: float = Field(default=1e-6, gt=0.0)
    max_sweeps: int = Field(default=500, ge=1)
    stable_sweeps: int = Field(default=3, ge=1)
    eps_scale: float = Field(default=1e-6, ge=0.0)
    laplacian: LaplacianVariant = LaplacianVariant.COMBINATORIAL
    oversample: int = Field(default=10, ge=0)
    cg_rtol: float = Field(default=1e-8, gt=0.0)
    cg_maxiter_factor: int = Field(default=10, ge=1)
    seed: int = 0

    model_config = {"frozen": True}


class SolverDiagnostics(BaseModel):
    """Convergence record of one eigensolver run."""

    sweeps: int = 0
    converged: bool = False
    seed: int = 0
    block_size: int = 0
    epsilon: float = 0.0
    deflated_components: int = 0
    cg_iterations: List[int] = Field(default_factory=list)
    residual_norms: List[float] = Field(default_factory=list)
    residual_bounds: List[float] = Field(default_factory=list)
    ritz_history: List[List[float]] = Field(default_factory=list)


class SpectralEmbedding(BaseModel):
    """
    Weighted eigenspace matrix V_s and its generalized eigenvalues.

    The eigenvectors are orthonormal in the (L_Y + eps I) inner product,
    which is the L_Y inner product only when eps is zero. At the default
    regularization V^T L_Y V differs from the identity by O(eps).

    Attributes:
        vs: N x s matrix whose i-th column is v_i * sqrt(zeta_i)
        zetas: Eigenvalues sorted nonincreasing
        vectors: The (L_Y + eps I)-orthonormal eigenvectors v_i
        diagnostics: Solver convergence record
    """

    vs: np.ndarray
    zetas: np.ndarray
    vectors: np.ndarray
    diagnostics: SolverDiagnostics = Field(default_factory=SolverDiagnostics)

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @field_validator("vs", "zetas", "vectors", mode="before")
    @classmethod
    def as_float_array(cls, v):
        return np.asarray(v, dtype=np.float64)

    @model_validator(mode="after")
    def validate_shapes(self):
        if self.vs.ndim != 2 or self.vs.shape != self.vectors.shape or self.vs.shape[1] != len(self.zetas):
            raise DimensionError(
                f"embedding shapes disagree: vs {self.vs.shape}, vectors {self.vectors.shape}, "
                f"{len(self.zetas)} eigenvalues"
            )
        return self

    @property
    def s(self) -> int:
        return int(len(self.zetas))

    @property
    def num_nodes(self) -> int:
        return int(self.vs.shape[0])

    @classmethod
    def from_pairs(cls, zetas: np.ndarray, vectors: np.ndarray, diagnostics: SolverDiagnostics) -> "SpectralEmbedding":
        """Assemble V_s from eigenpairs (negative round-off is clipped to zero)."""
        zetas = np.maximum(np.asarray(zetas, dtype=np.float64), 0.0)
        vectors = np.asarray(vectors, dtype=np.float64)
        return cls(vs=vectors * np.sqrt(zetas)[None, :], zetas=zetas, vectors=vectors, diagnostics=diagnostics)


class EdgeScoreTable(BaseModel):
    """
    Per-edge Spade scores with a deterministic ranking.

    Attributes:
        edges: Canonical (p, q) pairs of the scored graph, shape (M, 2)
        scores: Nonnegative scores aligned with edges
        ranking: Permutation ordering edges by nonincreasing score, ties by edge index
    """

    edges: np.ndarray
    scores: np.ndarray
    ranking: np.ndarray

    model_config = ConfigDict(arbitrary_types_allowed=True)

    @model_validator(mode="after")
    def validate_alignment(self):
        if len(self.edges) != len(self.scores) or len(self.ranking) != len(self.scores):
            raise DataValidationError(
                f"score table misaligned: {len(self.edges)} edges, {len(self.scores)} scores, "
                f"{len(self.ranking)} ranks"
            )
        return self

    @staticmethod
    def rank(scores: np.ndarray) -> np.ndarray:
        """Nonincreasing order with stable tie-break by edge index."""
        return np.argsort(-np.asarray(scores), kind="stable")

    @classmethod
    def from_scores(cls, edges: np.ndarray, scores: np.ndarray) -> "EdgeScoreTable":
        return cls(edges=edges, scores=scores, ranking=cls.rank(scores))

    def __len__(self) -> int:
        return len(self.scores)
