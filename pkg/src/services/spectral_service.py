"""
Spectral Service for the generalized eigenproblem on (L_X, L_Y) and Spade edge scores.

The pencil is solved as (L_X, L_Y + eps I) with every iterate kept orthogonal
to the null direction of L_Y on each of its connected components. Dominant
eigenpairs come from block subspace iteration on x -> (L_Y + eps I)^{-1} L_X x
with Jacobi-preconditioned conjugate gradient inner solves and a
Rayleigh-Ritz step per sweep.
"""

import json
import time
from pathlib import Path
from typing import Callable, List, Optional, Tuple, Union

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from src.models.graph import LaplacianOperator, SparseGraph
from src.models.spectral import EdgeScoreTable, SolverDiagnostics, SpectralConfig, SpectralEmbedding
from src.services.graph_service import connected_components
from src.utils.errors import (
    ConvergenceError,
    DataValidationError,
    DatasetLoadError,
    DimensionError,
    NumericError,
    ParameterError,
)
from src.utils.logging import get_logger, log_performance

logger = get_logger(__name__)

PathLike = Union[str, Path]
Projector = Callable[[np.ndarray], np.ndarray]

DENSE_ORACLE_LIMIT = 500


def preconditioned_cg(
    operator: Union[sp.spmatrix, np.ndarray],
    rhs: np.ndarray,
    x0: Optional[np.ndarray] = None,
    rtol: float = 1e-8,
    maxiter: Optional[int] = None,
    project: Optional[Projector] = None,
) -> Tuple[np.ndarray, int]:
    """
    Jacobi-preconditioned conjugate gradient over a block of right-hand sides.

    Each column carries its own step sizes and stops once its residual drops
    below ``rtol * ||b||``. ``project`` is applied to the preconditioned
    residual so that search directions stay in an invariant subspace of the
    operator; this makes consistent singular systems solvable.

    Args:
        operator: Symmetric positive (semi)definite matrix A
        rhs: Right-hand sides, shape (N,) or (N, b)
        x0: Initial guess with the shape of rhs
        rtol: Relative residual target per column
        maxiter: Iteration cap (default 10 N)
        project: Optional projector onto the solution subspace

    Returns:
        Tuple of (solution with the shape of rhs, iterations used)

    Raises:
        ConvergenceError: If some column misses the target within maxiter
    """
    rhs = np.asarray(rhs, dtype=np.float64)
    vector = rhs.ndim == 1
    b = rhs.reshape(rhs.shape[0], -1)
    num_rows = b.shape[0]
    maxiter = maxiter if maxiter is not None else 10 * num_rows
    project = project or (lambda block: block)

    diagonal = np.asarray(operator.diagonal(), dtype=np.float64)
    inv_diag = np.ones_like(diagonal)
    np.divide(1.0, diagonal, out=inv_diag, where=diagonal > 0)

    b_norm = np.linalg.norm(b, axis=0)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=np.float64).reshape(b.shape)
    x[:, b_norm == 0] = 0.0
    r = b - operator @ x
    z = project(inv_diag[:, None] * r)
    p = z.copy()
    rz = np.einsum("ij,ij->j", r, z)

    # columns far below the block's scale are solved to the block's absolute accuracy
    target = rtol * np.maximum(b_norm, 1e-12 * b_norm.max(initial=0.0))
    scale = np.where(b_norm > 0, b_norm, 1.0)
    r_norm = np.linalg.norm(r, axis=0)
    active = r_norm > target
    history: List[float] = [float((r_norm / scale).max(initial=0.0))]

    iterations = 0
    while active.any() and iterations < maxiter:
        iterations += 1
        ap = operator @ p
        pap = np.einsum("ij,ij->j", p, ap)
        if (active & ~(pap > 0)).any():
            raise NumericError("operator is not positive definite on the search subspace")
        alpha = np.where(active, rz / np.where(active, pap, 1.0), 0.0)
        x += alpha * p
        r -= alpha * ap

        r_norm = np.linalg.norm(r, axis=0)
        history.append(float((r_norm / scale).max()))
        active = r_norm > target

        z = project(inv_diag[:, None] * r)
        rz_new = np.einsum("ij,ij->j", r, z)
        beta = np.where(active, rz_new / np.where(rz != 0, rz, 1.0), 0.0)
        p = z + beta * p
        rz = rz_new

    if active.any():
        raise ConvergenceError(
            f"conjugate gradient did not reach relative residual {rtol:g} within {maxiter} iterations "
            f"({int(active.sum())} of {b.shape[1]} columns unconverged)",
            history,
        )
    return (x.ravel() if vector else x), iterations


def _component_projector(op: LaplacianOperator) -> Tuple[Projector, int]:
    """Projector removing the per-component null directions of ``op``."""
    count, labels = connected_components(op.graph)
    weights = op.null_weights()
    indicator = sp.csr_matrix(
        (weights, (np.arange(op.num_nodes), labels)), shape=(op.num_nodes, count)
    )
    norms = np.asarray(indicator.multiply(indicator).sum(axis=0)).ravel()

    def project(block: np.ndarray) -> np.ndarray:
        coef = (indicator.T @ block) / norms[:, None]
        return block - indicator @ coef

    return project, count


def _regularization(ly: LaplacianOperator, eps_scale: float) -> float:
    base_diagonal = ly.diagonal() - ly.epsilon
    mean = float(base_diagonal.mean()) if len(base_diagonal) else 0.0
    return eps_scale * mean


def _orthonormal_basis(block: np.ndarray, project: Projector, rng: np.random.Generator) -> np.ndarray:
    """QR of a projected block, refilling rank-deficient columns with random directions."""
    q, r = np.linalg.qr(block)
    diag = np.abs(np.diag(r))
    deficient = diag <= 1e-10 * max(diag.max(initial=0.0), 1e-300)
    if deficient.any():
        refill = block.copy()
        refill[:, deficient] = project(rng.standard_normal((block.shape[0], int(deficient.sum()))))
        q, _ = np.linalg.qr(refill)
    return project(q)


def _ritz_stable(new: np.ndarray, old: Optional[np.ndarray], tol: float) -> bool:
    if old is None:
        return False
    floor = 1e-12 * max(float(np.abs(new).max(initial=0.0)), 1.0)
    return bool((np.abs(new - old) <= tol * np.maximum(np.abs(new), floor)).all())


def _pencil_residuals(
    lx_matrix: sp.spmatrix,
    m_matrix: sp.spmatrix,
    project: Projector,
    zetas: np.ndarray,
    vectors: np.ndarray,
    tol: float,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Residual norms ||P L_X v - zeta M v|| and the bounds they must meet.

    The bound is tol * zeta * ||M v||, floored at a round-off level of
    ||L_X||_1 * ||v|| so pairs with zeta near zero stay reachable.
    """
    m_vectors = m_matrix @ vectors
    residual = project(lx_matrix @ vectors) - m_vectors * zetas[None, :]
    norms = np.linalg.norm(residual, axis=0)
    roundoff = 1e3 * np.finfo(np.float64).eps * spla.norm(lx_matrix, 1) * np.linalg.norm(vectors, axis=0)
    bounds = np.maximum(tol * np.abs(zetas) * np.linalg.norm(m_vectors, axis=0), roundoff)
    return norms, np.maximum(bounds, np.finfo(np.float64).tiny)


def top_generalized_eigenpairs(
    lx: LaplacianOperator,
    ly: LaplacianOperator,
    s: Optional[int] = None,
    tol: Optional[float] = None,
    config: Optional[SpectralConfig] = None,
) -> SpectralEmbedding:
    """
    Largest s eigenpairs of the deflated pencil (L_X, L_Y + eps I).

    Args:
        lx: Laplacian of the input graph
        ly: Laplacian of the manifold graph
        s: Number of eigenpairs (overrides config.s)
        tol: Relative tolerance on Ritz values and pair residuals (overrides config.tol)
        config: Solver settings

    Returns:
        SpectralEmbedding with eigenvalues nonincreasing and eigenvectors
        orthonormal in the (L_Y + eps I) inner product

    Raises:
        ParameterError: If s exceeds N minus the component count of L_Y
        ConvergenceError: If an inner solve hits its iteration cap
    """
    config = config or SpectralConfig()
    updates = {key: value for key, value in (("s", s), ("tol", tol)) if value is not None}
    if updates:
        config = config.model_copy(update=updates)
    if not config.tol > 0:
        raise ParameterError(f"tol must be positive, got {config.tol}")
    if config.s < 1:
        raise ParameterError(f"s must be at least 1, got {config.s}")
    if lx.num_nodes != ly.num_nodes:
        raise DimensionError(f"L_X has {lx.num_nodes} nodes, L_Y has {ly.num_nodes}")

    start_time = time.time()
    num_nodes = lx.num_nodes
    project, components = _component_projector(ly)
    subspace_dim = num_nodes - components
    if config.s > subspace_dim:
        raise ParameterError(
            f"s={config.s} exceeds N - components = {subspace_dim} for the manifold graph"
        )

    epsilon = _regularization(ly, config.eps_scale)
    m_matrix = ly.with_epsilon(ly.epsilon + epsilon).matrix
    lx_matrix = lx.matrix
    block_size = min(config.s + config.oversample, subspace_dim)
    maxiter = config.cg_maxiter_factor * num_nodes
    # Ritz residuals cannot beat the accuracy of the inner solves
    cg_rtol = min(config.cg_rtol, 1e-2 * config.tol)
    rng = np.random.default_rng(config.seed)

    diagnostics = SolverDiagnostics(
        seed=config.seed,
        block_size=block_size,
        epsilon=epsilon,
        deflated_components=components,
    )
    logger.info("Starting generalized eigensolver", extra={
        "nodes": num_nodes,
        "s": config.s,
        "block_size": block_size,
        "epsilon": epsilon,
        "components": components,
    })

    basis = _orthonormal_basis(project(rng.standard_normal((num_nodes, block_size))), project, rng)
    ritz_values: Optional[np.ndarray] = None
    previous: Optional[np.ndarray] = None
    stable = 0
    for sweep in range(1, config.max_sweeps + 1):
        rhs = project(lx_matrix @ basis)
        x0 = None if ritz_values is None else basis * ritz_values[None, :]
        try:
            image, cg_iterations = preconditioned_cg(
                m_matrix, rhs, x0=x0, rtol=cg_rtol, maxiter=maxiter, project=project
            )
        except ConvergenceError as e:
            logger.error(f"Inner solve failed at sweep {sweep}: {e}")
            raise
        diagnostics.cg_iterations.append(cg_iterations)

        q = _orthonormal_basis(project(image), project, rng)
        a = q.T @ (lx_matrix @ q)
        b = q.T @ (m_matrix @ q)
        try:
            values, weights = scipy.linalg.eigh((a + a.T) / 2, (b + b.T) / 2)
        except np.linalg.LinAlgError as e:
            raise NumericError(f"Rayleigh-Ritz step failed at sweep {sweep}: {e}") from e
        ritz_values = values[::-1].copy()
        basis = q @ weights[:, ::-1]

        current = ritz_values[: config.s]
        diagnostics.ritz_history.append(current.tolist())
        stable = stable + 1 if _ritz_stable(current, previous, config.tol) else 0
        previous = current
        norms, bounds = _pencil_residuals(
            lx_matrix, m_matrix, project, current, basis[:, : config.s], config.tol
        )
        settled = bool((norms <= bounds).all())
        logger.debug("Eigensolver sweep", extra={
            "sweep": sweep,
            "cg_iterations": cg_iterations,
            "stable": stable,
            "worst_residual_ratio": float((norms / bounds).max()),
        })
        if (stable >= config.stable_sweeps and settled) or block_size == subspace_dim:
            diagnostics.converged = True
            break
    diagnostics.sweeps = sweep

    if not diagnostics.converged:
        logger.warning(
            f"Eigensolver reached the sweep cap ({config.max_sweeps}) before the leading pairs converged",
            extra={"sweeps": sweep, "worst_residual_ratio": float((norms / bounds).max())},
        )

    zetas = ritz_values[: config.s]
    vectors = basis[:, : config.s]
    diagnostics.residual_norms = norms.tolist()
    diagnostics.residual_bounds = bounds.tolist()
    if not (np.isfinite(zetas).all() and np.isfinite(vectors).all()):
        raise NumericError("eigensolver produced non-finite eigenpairs")

    log_performance("generalized_eigensolver", (time.time() - start_time) * 1000, logger)
    logger.info("Generalized eigenpairs computed", extra={
        "sweeps": diagnostics.sweeps,
        "converged": diagnostics.converged,
        "zeta_max": float(zetas[0]),
        "zeta_min": float(zetas[-1]),
    })
    return SpectralEmbedding.from_pairs(zetas, vectors, diagnostics)


def dense_generalized_eig_oracle(
    lx_dense: np.ndarray,
    ly_dense: np.ndarray,
    s: int,
    epsilon: float = 0.0,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Direct solve of the deflated, regularized pencil for small problems.

    The null space of ``ly_dense`` is removed by restricting to an
    orthonormal basis of its complement; ``epsilon`` is added to the
    diagonal of L_Y.

    Returns:
        Tuple of (top s eigenvalues nonincreasing, N x s eigenvectors
        orthonormal in the L_Y + epsilon I inner product)
    """
    lx_dense = np.asarray(lx_dense, dtype=np.float64)
    ly_dense = np.asarray(ly_dense, dtype=np.float64)
    num_nodes = lx_dense.shape[0]
    if num_nodes > DENSE_ORACLE_LIMIT:
        raise ParameterError(f"dense oracle is limited to {DENSE_ORACLE_LIMIT} nodes, got {num_nodes}")
    if lx_dense.shape != (num_nodes, num_nodes) or ly_dense.shape != lx_dense.shape:
        raise DimensionError(f"pencil shapes differ: {lx_dense.shape} vs {ly_dense.shape}")

    null_basis = scipy.linalg.null_space(ly_dense)
    complement = scipy.linalg.null_space(null_basis.T) if null_basis.shape[1] else np.eye(num_nodes)
    if s > complement.shape[1]:
        raise ParameterError(f"s={s} exceeds the deflated dimension {complement.shape[1]}")

    m_dense = ly_dense + epsilon * np.eye(num_nodes)
    a = complement.T @ lx_dense @ complement
    b = complement.T @ m_dense @ complement
    values, weights = scipy.linalg.eigh((a + a.T) / 2, (b + b.T) / 2)
    return values[::-1][:s].copy(), complement @ weights[:, ::-1][:, :s]


def spade_scores(emb: SpectralEmbedding, graph: SparseGraph) -> EdgeScoreTable:
    """
    Spade score of every canonical edge: sum_i (vs[p, i] - vs[q, i])^2.

    Raises:
        DimensionError: If the embedding and graph disagree on N
    """
    if emb.num_nodes != graph.num_nodes:
        raise DimensionError(f"embedding has {emb.num_nodes} rows, graph has {graph.num_nodes} nodes")
    edges, _ = graph.edge_array()
    diff = emb.vs[edges[:, 0]] - emb.vs[edges[:, 1]]
    scores = np.einsum("ij,ij->i", diff, diff)
    return EdgeScoreTable.from_scores(edges, scores)


def compute_spectral_embedding(
    input_graph: SparseGraph,
    manifold_graph: SparseGraph,
    config: SpectralConfig,
) -> SpectralEmbedding:
    """Build both Laplacians with the configured variant and solve the pencil."""
    lx = LaplacianOperator(input_graph, config.laplacian)
    ly = LaplacianOperator(manifold_graph, config.laplacian)
    return top_generalized_eigenpairs(lx, ly, config=config)


def save_scores(table: EdgeScoreTable, path: PathLike) -> None:
    """Write ``p q score`` lines with shortest round-trip score text."""
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        f.write("p q score\n")
        f.writelines(
            f"{p} {q} {score!r}\n" for (p, q), score in zip(table.edges.tolist(), table.scores.tolist())
        )


def load_scores(path: PathLike) -> EdgeScoreTable:
    path = Path(path)
    if not path.is_file():
        raise DatasetLoadError(f"missing score file: {path.name}", str(path))
    with open(path, "r", encoding="utf-8") as f:
        lines = f.read().splitlines()
    if not lines or lines[0].split() != ["p", "q", "score"]:
        raise DataValidationError(f"{path.name}: expected header 'p q score'")
    records = [line.split() for line in lines[1:] if line.strip()]
    try:
        edges = np.array([(int(r[0]), int(r[1])) for r in records], dtype=np.int64).reshape(-1, 2)
        scores = np.array([float(r[2]) for r in records], dtype=np.float64)
    except (ValueError, IndexError) as e:
        raise DataValidationError(f"{path.name}: {e}") from e
    return EdgeScoreTable.from_scores(edges, scores)


def save_embedding(emb: SpectralEmbedding, path: PathLike) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as f:
        np.savez(
            f,
            vs=emb.vs,
            zetas=emb.zetas,
            vectors=emb.vectors,
            diagnostics=np.array(emb.diagnostics.model_dump_json()),
        )


def load_embedding(path: PathLike) -> SpectralEmbedding:
    path = Path(path)
    if not path.is_file():
        raise DatasetLoadError(f"missing embedding file: {path.name}", str(path))
    with np.load(path, allow_pickle=False) as data:
        diagnostics = SolverDiagnostics.model_validate_json(str(data["diagnostics"]))
        return SpectralEmbedding(
            vs=data["vs"].copy(),
            zetas=data["zetas"].copy(),
            vectors=data["vectors"].copy(),
            diagnostics=diagnostics,
        )


def save_diagnostics(diagnostics: SolverDiagnostics, path: PathLike) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8") as f:
        json.dump(diagnostics.model_dump(), f, indent=2)
