"""
Tests for the conjugate gradient solver, the generalized eigensolver and Spade scores.
"""

import json

import numpy as np
import pytest

from src.models.graph import LaplacianOperator, SparseGraph
from src.models.spectral import EdgeScoreTable, SolverDiagnostics, SpectralConfig, SpectralEmbedding
from src.services import spectral_service
from src.utils.errors import ConvergenceError, DataValidationError, DimensionError, ParameterError
from tests.conftest import make_random_graph, make_two_block_graph


def _scaled(graph: SparseGraph, factor: float) -> SparseGraph:
    pairs, weights = graph.edge_array()
    return SparseGraph.from_edges(graph.num_nodes, pairs, weights=weights * factor)


def _solve(lx_graph, ly_graph, **overrides):
    config = SpectralConfig(**{"s": 4, "tol": 1e-10, **overrides})
    lx = LaplacianOperator(lx_graph, config.laplacian)
    ly = LaplacianOperator(ly_graph, config.laplacian)
    return spectral_service.top_generalized_eigenpairs(lx, ly, config=config), lx, ly


def _random_pair(seed: int):
    """Connected input graph plus a manifold that is connected for even seeds and two-block for odd ones."""
    rng = np.random.default_rng(seed)
    num_nodes = int(rng.integers(30, 121))
    input_graph = make_random_graph(num_nodes, 0.1, seed=1000 + seed)
    if seed % 2:
        split = int(rng.integers(num_nodes // 3, 2 * num_nodes // 3))
        manifold = make_two_block_graph([split, num_nodes - split], 0.2, seed=2000 + seed)
    else:
        manifold = make_random_graph(num_nodes, 0.06, seed=2000 + seed)
    return input_graph, manifold


def _oracle(lx, ly, s, epsilon):
    return spectral_service.dense_generalized_eig_oracle(lx.matrix.toarray(), ly.matrix.toarray(), s, epsilon=epsilon)


def _separated_s(values: np.ndarray, candidates=range(3, 7)) -> int:
    """Eigenpair count whose last eigenvalue has the widest relative gap to the next one."""
    candidates = list(candidates)
    gaps = [(values[s - 1] - values[s]) / values[s - 1] for s in candidates]
    return candidates[int(np.argmax(gaps))]


class TestPreconditionedCg:
    """Test cases for the block Jacobi-preconditioned CG."""

    def test_solves_spd_system(self):
        rng = np.random.default_rng(0)
        b_mat = rng.normal(size=(30, 30))
        a = b_mat.T @ b_mat + 30 * np.eye(30)
        rhs = rng.normal(size=(30, 3))

        x, iterations = spectral_service.preconditioned_cg(a, rhs, rtol=1e-12)

        np.testing.assert_allclose(x, np.linalg.solve(a, rhs), rtol=1e-8, atol=1e-10)
        assert 0 < iterations <= 300

    def test_vector_rhs_keeps_shape(self):
        a = np.diag([1.0, 2.0, 4.0])

        x, _ = spectral_service.preconditioned_cg(a, np.array([1.0, 2.0, 4.0]))

        np.testing.assert_allclose(x, np.ones(3))

    def test_zero_rhs_column(self):
        a = np.diag([2.0, 3.0])
        rhs = np.array([[0.0, 2.0], [0.0, 3.0]])

        x, _ = spectral_service.preconditioned_cg(a, rhs, x0=np.ones((2, 2)))

        np.testing.assert_allclose(x, [[0.0, 1.0], [0.0, 1.0]])

    def test_iteration_cap_reports_history(self):
        lap = LaplacianOperator(make_random_graph(60, 0.05, seed=1)).with_epsilon(1e-3).matrix
        rhs = np.random.default_rng(1).normal(size=60)

        with pytest.raises(ConvergenceError) as info:
            spectral_service.preconditioned_cg(lap, rhs, maxiter=1)

        assert len(info.value.residual_history) == 2
        assert info.value.exit_code == 2

    def test_singular_system_with_projector(self):
        """A connected Laplacian is solvable on the mean-zero subspace."""
        lap = LaplacianOperator(make_random_graph(40, 0.1, seed=2)).matrix
        rhs = np.random.default_rng(2).normal(size=40)
        rhs -= rhs.mean()

        x, _ = spectral_service.preconditioned_cg(
            lap, rhs, rtol=1e-10, project=lambda block: block - block.mean(axis=0)
        )

        np.testing.assert_allclose(lap @ x, rhs, atol=1e-8)
        assert abs(x.mean()) < 1e-10


class TestGeneralizedEigenpairs:
    """Test cases for the block subspace eigensolver."""

    def test_identical_laplacians_give_unit_eigenvalues(self):
        graph = make_random_graph(30, 0.15, seed=3)

        emb, _, _ = _solve(graph, graph, eps_scale=0.0)

        np.testing.assert_allclose(emb.zetas, 1.0, atol=1e-8)
        assert emb.diagnostics.converged

    def test_scaled_laplacian_doubles_eigenvalues(self):
        graph = make_random_graph(30, 0.15, seed=4)

        emb, _, _ = _solve(_scaled(graph, 2.0), graph, eps_scale=0.0)

        np.testing.assert_allclose(emb.zetas, 2.0, atol=1e-8)

    def test_normalized_variant(self):
        graph = make_random_graph(30, 0.15, seed=5)

        emb, _, _ = _solve(graph, graph, eps_scale=0.0, laplacian="normalized")

        np.testing.assert_allclose(emb.zetas, 1.0, atol=1e-8)

    @pytest.mark.parametrize("seed", range(50))
    def test_matches_dense_oracle(self, seed):
        """Eigenvalues and scores agree with a direct solve on connected and two-block manifolds."""
        input_graph, manifold = _random_pair(seed)
        lx, ly = LaplacianOperator(input_graph), LaplacianOperator(manifold)
        s = _separated_s(_oracle(lx, ly, 7, 0.0)[0])

        emb, _, _ = _solve(input_graph, manifold, s=s)
        values, vectors = _oracle(lx, ly, s, emb.diagnostics.epsilon)
        oracle_embedding = SpectralEmbedding.from_pairs(values, vectors, SolverDiagnostics())
        reference = spectral_service.spade_scores(oracle_embedding, input_graph)
        scores = spectral_service.spade_scores(emb, input_graph)

        np.testing.assert_allclose(emb.zetas, values, rtol=1e-6)
        scale = reference.scores.max()
        np.testing.assert_allclose(scores.scores / scale, reference.scores / scale, rtol=0, atol=1e-8)
        assert emb.diagnostics.deflated_components == (2 if seed % 2 else 1)
        assert list(emb.zetas) == sorted(emb.zetas, reverse=True)

    @pytest.mark.parametrize("seed", range(6))
    def test_default_tolerance_meets_residual_bound(self, seed):
        """||L_X v - zeta (L_Y + eps I) v|| <= tol * zeta * ||(L_Y + eps I) v|| at the default tol."""
        input_graph = make_random_graph(80, 0.1, seed=300 + seed)
        manifold = make_random_graph(80, 0.05, seed=400 + seed)
        config = SpectralConfig(s=5)
        lx, ly = LaplacianOperator(input_graph), LaplacianOperator(manifold)

        emb = spectral_service.top_generalized_eigenpairs(lx, ly, config=config)
        m = ly.with_epsilon(emb.diagnostics.epsilon).matrix
        lx_v = lx.matrix @ emb.vectors
        residual = (lx_v - lx_v.mean(axis=0)) - (m @ emb.vectors) * emb.zetas[None, :]
        bound = config.tol * emb.zetas * np.linalg.norm(m @ emb.vectors, axis=0)

        assert emb.diagnostics.converged
        assert np.all(np.linalg.norm(residual, axis=0) <= bound * (1 + 1e-6))
        np.testing.assert_allclose(emb.diagnostics.residual_norms, np.linalg.norm(residual, axis=0), rtol=1e-6, atol=1e-14)
        values, _ = _oracle(lx, ly, 5, emb.diagnostics.epsilon)
        np.testing.assert_allclose(emb.zetas, values, rtol=1e-6)

    def test_converged_pairs_meet_recorded_bounds(self):
        """Every returned pair satisfies the residual bound it was accepted under."""
        input_graph, manifold = make_random_graph(80, 0.1, seed=310), make_random_graph(80, 0.05, seed=410)

        emb, _, _ = _solve(input_graph, manifold, s=5, tol=1e-6)

        history = np.array(emb.diagnostics.ritz_history)
        assert emb.diagnostics.converged
        assert np.all(np.array(emb.diagnostics.residual_norms) <= np.array(emb.diagnostics.residual_bounds))
        assert len(history) == emb.diagnostics.sweeps
        assert len(emb.diagnostics.cg_iterations) == emb.diagnostics.sweeps

    def test_sweep_cap_leaves_converged_false(self):
        input_graph, manifold = make_random_graph(80, 0.1, seed=311), make_random_graph(80, 0.05, seed=411)

        emb, _, _ = _solve(input_graph, manifold, s=5, max_sweeps=2)

        assert not emb.diagnostics.converged
        assert emb.diagnostics.sweeps == 2

    @pytest.mark.parametrize("seed", range(4))
    def test_larger_s_keeps_leading_pairs(self, seed):
        input_graph, manifold = _random_pair(seed)
        lx, ly = LaplacianOperator(input_graph), LaplacianOperator(manifold)
        small_s = _separated_s(_oracle(lx, ly, 7, 0.0)[0], candidates=range(2, 5))

        small, _, _ = _solve(input_graph, manifold, s=small_s)
        large, _, _ = _solve(input_graph, manifold, s=small_s + 3)
        leading = SpectralEmbedding.from_pairs(
            large.zetas[:small_s], large.vectors[:, :small_s], large.diagnostics
        )

        np.testing.assert_allclose(large.zetas[:small_s], small.zetas, rtol=1e-8)
        expected = spectral_service.spade_scores(small, input_graph).scores
        actual = spectral_service.spade_scores(leading, input_graph).scores
        np.testing.assert_allclose(actual / expected.max(), expected / expected.max(), rtol=0, atol=1e-8)

    @pytest.mark.parametrize("seed", range(4))
    def test_relabeling_permutes_scores(self, seed):
        """Renaming nodes in both graphs moves each score with its edge."""
        input_graph, manifold = _random_pair(seed)
        lx, ly = LaplacianOperator(input_graph), LaplacianOperator(manifold)
        s = _separated_s(_oracle(lx, ly, 7, 0.0)[0])
        perm = np.random.default_rng(seed).permutation(input_graph.num_nodes)

        def relabel(graph):
            pairs, weights = graph.edge_array()
            return SparseGraph.from_edges(graph.num_nodes, perm[pairs], weights=weights)

        emb, _, _ = _solve(input_graph, manifold, s=s)
        permuted_input = relabel(input_graph)
        permuted, _, _ = _solve(permuted_input, relabel(manifold), s=s)

        original = spectral_service.spade_scores(emb, input_graph)
        moved = spectral_service.spade_scores(permuted, permuted_input)
        moved_by_edge = {frozenset(p): score for p, score in zip(moved.edges.tolist(), moved.scores)}
        scale = original.scores.max()
        expected = np.array([moved_by_edge[frozenset(perm[p].tolist())] for p in original.edges])

        np.testing.assert_allclose(emb.zetas, permuted.zetas, rtol=1e-8)
        np.testing.assert_allclose(expected / scale, original.scores / scale, rtol=0, atol=1e-8)

    def test_eigenvectors_are_m_orthonormal(self):
        emb, _, ly = _solve(make_random_graph(40, 0.15, seed=9), make_random_graph(40, 0.1, seed=10))
        m = ly.with_epsilon(emb.diagnostics.epsilon).matrix

        np.testing.assert_allclose(emb.vectors.T @ (m @ emb.vectors), np.eye(4), atol=1e-8)

    def test_unregularized_eigenvectors_are_ly_orthonormal(self):
        emb, _, ly = _solve(make_random_graph(40, 0.15, seed=9), make_random_graph(40, 0.1, seed=10), eps_scale=0.0)

        assert emb.diagnostics.epsilon == 0.0
        np.testing.assert_allclose(emb.vectors.T @ (ly.matrix @ emb.vectors), np.eye(4), atol=1e-8)

    def test_epsilon_follows_mean_degree(self):
        manifold = make_random_graph(30, 0.2, seed=13)

        emb, _, ly = _solve(make_random_graph(30, 0.2, seed=14), manifold, eps_scale=1e-3)

        assert emb.diagnostics.epsilon == pytest.approx(1e-3 * manifold.degrees().mean())

    def test_reproducible(self):
        graphs = (make_random_graph(30, 0.2, seed=15), make_random_graph(30, 0.1, seed=16))

        first, _, _ = _solve(*graphs)
        second, _, _ = _solve(*graphs)

        np.testing.assert_array_equal(first.vs, second.vs)

    def test_s_exceeds_deflated_dimension(self, path_graph):
        op = LaplacianOperator(path_graph)

        with pytest.raises(ParameterError, match="exceeds"):
            spectral_service.top_generalized_eigenpairs(op, op, s=4)

    def test_non_positive_tolerance(self, path_graph):
        op = LaplacianOperator(path_graph)

        with pytest.raises(ParameterError):
            spectral_service.top_generalized_eigenpairs(op, op, s=1, tol=0.0)

    def test_node_count_mismatch(self, path_graph, cycle_graph):
        with pytest.raises(DimensionError):
            spectral_service.top_generalized_eigenpairs(
                LaplacianOperator(path_graph), LaplacianOperator(SparseGraph.from_edges(3, [(0, 1)])), s=1
            )

    def test_full_subspace_converges_immediately(self, cycle_graph):
        op = LaplacianOperator(cycle_graph)

        emb = spectral_service.top_generalized_eigenpairs(op, op, s=3, config=SpectralConfig(eps_scale=0.0))

        assert emb.diagnostics.sweeps == 1
        np.testing.assert_allclose(emb.zetas, 1.0, atol=1e-10)


class TestDenseOracle:
    """Test cases for the direct small-problem solver."""

    def test_two_nodes(self):
        lap = np.array([[1.0, -1.0], [-1.0, 1.0]])

        values, vectors = spectral_service.dense_generalized_eig_oracle(lap, lap, 1)

        assert values[0] == pytest.approx(1.0)
        np.testing.assert_allclose(np.abs(vectors[:, 0]), [0.5, 0.5])
        assert vectors[0, 0] == pytest.approx(-vectors[1, 0])

    def test_four_cycle(self, cycle_graph):
        lap = LaplacianOperator(cycle_graph).matrix.toarray()

        values, _ = spectral_service.dense_generalized_eig_oracle(lap, lap, 3)

        np.testing.assert_allclose(values, [1.0, 1.0, 1.0])

    def test_size_limit(self):
        with pytest.raises(ParameterError):
            spectral_service.dense_generalized_eig_oracle(np.zeros((501, 501)), np.zeros((501, 501)), 1)


class TestSpadeScores:
    """Test cases for the per-edge scores."""

    def _embedding(self, vs):
        vs = np.asarray(vs, dtype=np.float64)
        return SpectralEmbedding(vs=vs, zetas=np.ones(vs.shape[1]), vectors=vs)

    def test_single_eigenvector_hand_computation(self, path_graph):
        table = spectral_service.spade_scores(self._embedding([[0.0], [1.0], [3.0], [3.5]]), path_graph)

        np.testing.assert_allclose(table.scores, [1.0, 4.0, 0.25])
        assert table.ranking.tolist() == [1, 0, 2]

    def test_zero_embedding_keeps_edge_order(self, random_graph_factory):
        graph = random_graph_factory(20, 0.2, seed=17)

        table = spectral_service.spade_scores(self._embedding(np.zeros((20, 3))), graph)

        assert not table.scores.any()
        assert table.ranking.tolist() == list(range(graph.num_edges))

    def test_matches_gram_matrix(self, random_graph_factory):
        graph = random_graph_factory(25, 0.2, seed=18)
        vs = np.random.default_rng(18).normal(size=(25, 5))
        gram = vs @ vs.T

        table = spectral_service.spade_scores(self._embedding(vs), graph)

        pairs, _ = graph.edge_array()
        expected = gram[pairs[:, 0], pairs[:, 0]] + gram[pairs[:, 1], pairs[:, 1]] - 2 * gram[pairs[:, 0], pairs[:, 1]]
        np.testing.assert_allclose(table.scores, expected, atol=1e-10)
        assert (table.scores >= 0).all()

    def test_sign_flip_invariance(self, random_graph_factory):
        graph = random_graph_factory(25, 0.2, seed=19)
        vs = np.random.default_rng(19).normal(size=(25, 4))

        first = spectral_service.spade_scores(self._embedding(vs), graph)
        second = spectral_service.spade_scores(self._embedding(vs * np.array([1.0, -1.0, 1.0, -1.0])), graph)

        np.testing.assert_array_equal(first.scores, second.scores)

    def test_dimension_mismatch(self, path_graph):
        with pytest.raises(DimensionError):
            spectral_service.spade_scores(self._embedding(np.zeros((3, 1))), path_graph)

    def test_ties_ranked_by_edge_index(self):
        assert EdgeScoreTable.rank(np.array([1.0, 2.0, 1.0, 2.0])).tolist() == [1, 3, 0, 2]

    def test_embedding_shapes_must_agree(self):
        with pytest.raises(DimensionError, match="embedding shapes disagree"):
            SpectralEmbedding(vs=np.zeros((4, 2)), zetas=np.ones(3), vectors=np.zeros((4, 2)))

    def test_misaligned_score_table(self, path_graph):
        with pytest.raises(DataValidationError, match="misaligned"):
            EdgeScoreTable(edges=path_graph.edge_array()[0], scores=np.zeros(2), ranking=np.arange(2))


class TestPersistence:
    """Test cases for score, embedding and diagnostics files."""

    def test_scores_round_trip(self, tmp_path, path_graph):
        table = EdgeScoreTable.from_scores(path_graph.edge_array()[0], np.array([0.1, 1.0 / 3.0, 2.0]))
        path = tmp_path / "scores.txt"

        spectral_service.save_scores(table, path)
        loaded = spectral_service.load_scores(path)

        np.testing.assert_array_equal(loaded.scores, table.scores)
        np.testing.assert_array_equal(loaded.edges, table.edges)
        assert path.read_text().splitlines()[0] == "p q score"

    def test_embedding_round_trip(self, tmp_path):
        emb = SpectralEmbedding.from_pairs(
            np.array([2.0, 0.5]), np.random.default_rng(20).normal(size=(6, 2)), SolverDiagnostics(sweeps=7)
        )
        path = tmp_path / "eigenpairs.npz"

        spectral_service.save_embedding(emb, path)
        loaded = spectral_service.load_embedding(path)

        np.testing.assert_array_equal(loaded.vs, emb.vs)
        np.testing.assert_array_equal(loaded.zetas, emb.zetas)
        assert loaded.diagnostics.sweeps == 7

    def test_diagnostics_json(self, tmp_path):
        path = tmp_path / "diagnostics.json"

        spectral_service.save_diagnostics(SolverDiagnostics(sweeps=3, converged=True), path)

        assert json.loads(path.read_text())["converged"] is True
